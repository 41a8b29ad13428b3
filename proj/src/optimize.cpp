#include "bdp/optimize.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>

#include "bdp/errors.hpp"
#include "bdp/parallel.hpp"
#include "bdp/rng.hpp"

namespace bdp {

bool Bounds::contains(std::span<const double> x) const {
  if (x.size() != box.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= box[i].first && x[i] <= box[i].second)) return false;
  }
  return true;
}

std::vector<double> Bounds::project(std::span<const double> x) const {
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size() && i < box.size(); ++i) {
    out[i] = std::clamp(out[i], box[i].first, box[i].second);
  }
  return out;
}

double constraint_violation(const std::vector<Constraint>& cons, std::span<const double> x) {
  double total = 0.0;
  for (const auto& c : cons) {
    const double v = c.fn(x);
    if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    const double miss = c.kind == Constraint::Kind::Equality ? v : std::min(v, 0.0);
    total += miss * miss;
  }
  return total;
}

OptMethod parse_opt_method(std::string_view label) {
  if (label == "local") return OptMethod::Local;
  if (label == "differential-evolution") return OptMethod::DifferentialEvolution;
  throw InvalidArgument("unknown optimizer '" + std::string(label) +
                        "' (expected local or differential-evolution)");
}

std::string to_string(OptMethod m) {
  return m == OptMethod::Local ? "local" : "differential-evolution";
}

std::vector<double> gradient_fd(const Objective& f, std::span<const double> x, double fx,
                                const Bounds* bounds) {
  const double root_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  std::vector<double> g(x.size());
  std::vector<double> xh(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double h = root_eps * std::max(1.0, std::abs(x[i]));
    if (bounds && x[i] + h > bounds->box[i].second) h = -h;
    xh[i] = x[i] + h;
    h = xh[i] - x[i];
    g[i] = (f(xh) - fx) / h;
    xh[i] = x[i];
  }
  return g;
}

Matrix hessian_fd(const Objective& f, std::span<const double> x, double rel_step) {
  const std::size_t n = x.size();
  const auto dim = static_cast<Eigen::Index>(n);
  double rel = rel_step;
  for (int attempt = 0; attempt <= 3; ++attempt, rel *= 0.1) {
    std::vector<double> h(n);
    for (std::size_t i = 0; i < n; ++i) h[i] = rel * std::max(1.0, std::abs(x[i]));
    std::vector<double> xs(x.begin(), x.end());
    const auto at = [&](std::size_t i, double si, std::size_t j, double sj) {
      xs[i] += si * h[i];
      xs[j] += sj * h[j];
      const double v = f(xs);
      xs[i] = x[i];
      xs[j] = x[j];
      return v;
    };
    const double f0 = f(x);
    bool finite = std::isfinite(f0);
    Matrix hess(dim, dim);
    for (std::size_t i = 0; i < n && finite; ++i) {
      xs[i] = x[i] + h[i];
      const double fp = f(xs);
      xs[i] = x[i] - h[i];
      const double fm = f(xs);
      xs[i] = x[i];
      finite = std::isfinite(fp) && std::isfinite(fm);
      const auto ii = static_cast<Eigen::Index>(i);
      hess(ii, ii) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
      for (std::size_t j = 0; j < i && finite; ++j) {
        const double pp = at(i, 1, j, 1), pm = at(i, 1, j, -1);
        const double mp = at(i, -1, j, 1), mm = at(i, -1, j, -1);
        finite = std::isfinite(pp) && std::isfinite(pm) && std::isfinite(mp) && std::isfinite(mm);
        const auto jj = static_cast<Eigen::Index>(j);
        hess(ii, jj) = hess(jj, ii) = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
      }
    }
    if (finite) return 0.5 * (hess + hess.transpose());
  }
  throw ComputationError("hessian_fd: objective is not finite near the evaluation point");
}

namespace {

class Counted {
 public:
  explicit Counted(const Objective& f) : f_(f) {}
  double operator()(std::span<const double> x) const {
    ++count_;
    const double v = f_(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  }
  std::size_t count() const { return count_.load(); }

 private:
  const Objective& f_;
  mutable std::atomic<std::size_t> count_{0};
};

struct LocalRun {
  std::vector<double> x;
  double fx;
  bool converged;
  std::string message;
};

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Projected quasi-Newton with an Armijo search along the projection arc.
LocalRun projected_bfgs(const Objective& F, std::vector<double> x, const Bounds& b,
                        std::size_t max_iter) {
  const std::size_t n = x.size();
  x = b.project(x);
  double fx = F(x);
  if (!std::isfinite(fx)) return {x, fx, false, "objective is not finite at the start point"};
  std::vector<double> g = gradient_fd(F, x, fx, &b);
  Matrix h = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  bool identity = true;
  std::vector<double> d(n), xt(n), s(n), y(n);
  const auto proj_grad_norm = [&] {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double moved = std::clamp(x[i] - g[i], b.box[i].first, b.box[i].second) - x[i];
      worst = std::max(worst, std::abs(moved));
    }
    return worst;
  };
  for (std::size_t it = 0; it < max_iter; ++it) {
    if (proj_grad_norm() <= 1e-7 * std::max(1.0, std::abs(fx))) {
      return {x, fx, true, "converged: projected gradient below tolerance"};
    }
    std::vector<char> free(n);
    for (std::size_t i = 0; i < n; ++i) {
      const bool at_lo = x[i] <= b.box[i].first && g[i] > 0.0;
      const bool at_hi = x[i] >= b.box[i].second && g[i] < 0.0;
      free[i] = !(at_lo || at_hi);
    }
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = 0.0;
      if (!free[i]) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (free[j]) d[i] -= h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * g[j];
      }
    }
    if (!(dot(g, d) < 0.0)) {
      h.setIdentity();
      identity = true;
      for (std::size_t i = 0; i < n; ++i) d[i] = free[i] ? -g[i] : 0.0;
    }
    double alpha = 1.0;
    double ft = fx;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + alpha * d[i];
      xt = b.project(xt);
      for (std::size_t i = 0; i < n; ++i) s[i] = xt[i] - x[i];
      if (std::all_of(s.begin(), s.end(), [](double v) { return v == 0.0; })) break;
      ft = F(xt);
      if (std::isfinite(ft) && ft <= fx + 1e-4 * dot(g, s)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (!identity) {
        h.setIdentity();
        identity = true;
        continue;
      }
      const bool near = proj_grad_norm() <= 1e-3 * std::max(1.0, std::abs(fx));
      return {x, fx, near, "stopped: line search made no further progress"};
    }
    const std::vector<double> gt = gradient_fd(F, xt, ft, &b);
    for (std::size_t i = 0; i < n; ++i) y[i] = gt[i] - g[i];
    const double sy = dot(s, y);
    if (sy > 1e-10 * std::sqrt(dot(s, s) * dot(y, y))) {
      const Eigen::Map<const Vector> sv(s.data(), static_cast<Eigen::Index>(n));
      const Eigen::Map<const Vector> yv(y.data(), static_cast<Eigen::Index>(n));
      if (identity) h *= sy / dot(y, y);
      const double rho = 1.0 / sy;
      const Matrix ident = Matrix::Identity(h.rows(), h.cols());
      h = (ident - rho * sv * yv.transpose()) * h * (ident - rho * yv * sv.transpose()) +
          rho * sv * sv.transpose();
      identity = false;
    }
    const double fold = fx;
    x = xt;
    fx = ft;
    g = gt;
    if (std::abs(fold - fx) <= 1e-14 * std::max({1.0, std::abs(fold), std::abs(fx)})) {
      return {x, fx, true, "converged: relative reduction below tolerance"};
    }
  }
  return {x, fx, false, "iteration limit reached"};
}

constexpr double kPenaltyWeights[] = {1e2, 1e4, 1e6};
constexpr double kFeasibleTol = 1e-8;

LocalRun local_with_penalty(const Counted& f, std::vector<double> x0, const Bounds& b,
                            const std::vector<Constraint>& cons, std::size_t max_iter) {
  if (cons.empty()) {
    return projected_bfgs([&](std::span<const double> x) { return f(x); }, std::move(x0), b,
                          max_iter);
  }
  LocalRun run{b.project(x0), 0.0, false, ""};
  for (double w : kPenaltyWeights) {
    const auto penalized = [&](std::span<const double> x) {
      return f(x) + w * constraint_violation(cons, x);
    };
    run = projected_bfgs(penalized, run.x, b, max_iter);
    if (!std::isfinite(run.fx)) break;
  }
  run.fx = f(run.x);
  if (constraint_violation(cons, run.x) > kFeasibleTol) {
    run.converged = false;
    run.message = "constraints could not be satisfied";
  }
  return run;
}

MinimizeResult minimize_local(const Counted& f, const std::vector<double>& x0, const Bounds& b,
                              const std::vector<Constraint>& cons, const MinimizeOptions& opts) {
  std::vector<std::vector<double>> starts{x0};
  if (opts.multi_start) {
    RngStream rng(opts.seed, 0);
    for (int k = 0; k < 4; ++k) {
      std::vector<double> s = x0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const auto [lo, hi] = b.box[i];
        const double width =
            std::isfinite(hi - lo) ? hi - lo : std::max(1.0, std::abs(x0[i]));
        s[i] += (rng.uniform() - 0.5) * 0.2 * width;
      }
      starts.push_back(b.project(s));
    }
  }
  LocalRun best{};
  bool have = false;
  for (const auto& s : starts) {
    LocalRun run = local_with_penalty(f, s, b, cons, opts.max_iter);
    const bool feasible = constraint_violation(cons, run.x) <= kFeasibleTol;
    const bool best_feasible = have && constraint_violation(cons, best.x) <= kFeasibleTol;
    if (!have || (feasible && !best_feasible) ||
        (feasible == best_feasible && run.fx < best.fx)) {
      best = std::move(run);
      have = true;
    }
  }
  return {best.x, best.fx, best.converged && std::isfinite(best.fx), best.message, 0};
}

MinimizeResult minimize_de(const Counted& f, const std::vector<double>& x0, const Bounds& b,
                           const std::vector<Constraint>& cons, const MinimizeOptions& opts) {
  const std::size_t dim = x0.size();
  for (const auto& [lo, hi] : b.box) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
      throw InvalidArgument("differential-evolution requires finite bounds");
    }
  }
  const std::size_t np = std::max<std::size_t>(15 * dim, 5);
  constexpr double kF = 0.8;
  constexpr double kCR = 0.9;
  RngStream rng(opts.seed, 0);
  std::vector<std::vector<double>> pop(np, std::vector<double>(dim));
  pop[0] = b.project(x0);
  for (std::size_t m = 1; m < np; ++m) {
    for (std::size_t i = 0; i < dim; ++i) {
      const auto [lo, hi] = b.box[i];
      pop[m][i] = lo + rng.uniform() * (hi - lo);
    }
  }
  std::vector<double> fit(np), viol(np);
  const auto evaluate = [&](const std::vector<std::vector<double>>& xs, std::vector<double>& fv,
                            std::vector<double>& vv) {
    parallel_for(xs.size(), [&](std::size_t m) {
      vv[m] = constraint_violation(cons, xs[m]);
      fv[m] = f(xs[m]);
    });
  };
  evaluate(pop, fit, viol);
  // Deb's feasibility rules
  const auto better = [](double fa, double va, double fb, double vb) {
    const bool a_ok = va <= kFeasibleTol, b_ok = vb <= kFeasibleTol;
    if (a_ok && b_ok) return fa <= fb;
    if (a_ok != b_ok) return a_ok;
    return va <= vb;
  };
  std::vector<std::vector<double>> trial(np, std::vector<double>(dim));
  std::vector<double> tfit(np), tviol(np);
  bool converged = false;
  std::size_t gen = 0;
  for (; gen < opts.max_iter && !converged; ++gen) {
    for (std::size_t m = 0; m < np; ++m) {
      std::size_t r[3];
      for (int k = 0; k < 3; ++k) {
        do {
          r[k] = static_cast<std::size_t>(rng.uniform() * static_cast<double>(np)) % np;
        } while (r[k] == m || (k > 0 && r[k] == r[0]) || (k > 1 && r[k] == r[1]));
      }
      const auto jrand = static_cast<std::size_t>(rng.uniform() * static_cast<double>(dim)) % dim;
      for (std::size_t i = 0; i < dim; ++i) {
        double v = pop[m][i];
        if (i == jrand || rng.uniform() < kCR) v = pop[r[0]][i] + kF * (pop[r[1]][i] - pop[r[2]][i]);
        const auto [lo, hi] = b.box[i];
        if (v < lo || v > hi) v = lo + rng.uniform() * (hi - lo);
        trial[m][i] = v;
      }
    }
    evaluate(trial, tfit, tviol);
    for (std::size_t m = 0; m < np; ++m) {
      if (better(tfit[m], tviol[m], fit[m], viol[m])) {
        pop[m] = trial[m];
        fit[m] = tfit[m];
        viol[m] = tviol[m];
      }
    }
    if (std::all_of(viol.begin(), viol.end(), [](double v) { return v <= kFeasibleTol; }) &&
        std::all_of(fit.begin(), fit.end(), [](double v) { return std::isfinite(v); })) {
      const double mean = std::accumulate(fit.begin(), fit.end(), 0.0) / static_cast<double>(np);
      double var = 0.0;
      for (double v : fit) var += (v - mean) * (v - mean);
      converged = std::sqrt(var / static_cast<double>(np)) <= 1e-8 * std::abs(mean);
    }
  }
  std::size_t best = 0;
  for (std::size_t m = 1; m < np; ++m) {
    if (!better(fit[best], viol[best], fit[m], viol[m])) best = m;
  }
  MinimizeResult out{pop[best], fit[best], converged,
                     converged ? "converged: population spread below tolerance"
                               : "generation limit reached",
                     0};
  if (opts.polish) {
    LocalRun run = local_with_penalty(f, out.x, b, cons, 1000);
    if (std::isfinite(run.fx) && run.fx <= out.fun &&
        constraint_violation(cons, run.x) <= kFeasibleTol) {
      out.x = run.x;
      out.fun = run.fx;
    }
  }
  if (viol[best] > kFeasibleTol && constraint_violation(cons, out.x) > kFeasibleTol) {
    out.success = false;
    out.message = "no feasible point found";
  }
  out.success = out.success && std::isfinite(out.fun);
  return out;
}

}  // namespace

MinimizeResult minimize(const Objective& f, std::vector<double> x0, const Bounds& bounds,
                        const std::vector<Constraint>& constraints,
                        const MinimizeOptions& opts) {
  if (bounds.size() != x0.size()) {
    throw InvalidArgument("minimize: bounds have " + std::to_string(bounds.size()) +
                          " entries for " + std::to_string(x0.size()) + " parameters");
  }
  if (x0.empty()) throw InvalidArgument("minimize: nothing to optimize");
  for (std::size_t i = 0; i < x0.size(); ++i) {
    if (!(bounds.box[i].first < bounds.box[i].second)) {
      throw InvalidArgument("minimize: bound " + std::to_string(i) + " has lower >= upper");
    }
  }
  const Counted counted(f);
  MinimizeResult r = opts.method == OptMethod::Local
                         ? minimize_local(counted, x0, bounds, constraints, opts)
                         : minimize_de(counted, x0, bounds, constraints, opts);
  r.x = bounds.project(r.x);
  r.evaluations = counted.count();
  return r;
}

}  // namespace bdp
