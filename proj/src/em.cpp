#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "bdp/errors.hpp"
#include "bdp/estimate.hpp"
#include "bdp/laplace.hpp"
#include "bdp/linalg.hpp"
#include "bdp/parallel.hpp"
#include "estimate_detail.hpp"

namespace bdp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kNumIntervals = 64;
constexpr int kMaxIntervals = 4096;

using ComplexMatrix = Eigen::MatrixXcd;

/// S(a, a), S(a, a + 1) and S(a, a - 1) of the weighted occupation integral
/// S = sum_ij W_ij * int_0^dt p_{i,a}(s) p_{b,j}(dt - s) ds over the window.
struct Flow {
  std::vector<double> hold, up, down;

  explicit Flow(std::size_t n = 0) : hold(n, 0.0), up(n, 0.0), down(n, 0.0) {}
};

std::string describe(const TransitionGroup::Entry& e, double dt) {
  return std::to_string(e.z_prev) + " -> " + std::to_string(e.z_next) + " over " +
         std::to_string(dt);
}

void check_in_window(const TransitionGroup& grp, const TruncationWindow& w) {
  for (const auto& e : grp.entries) {
    if (!w.contains(e.z_prev) || !w.contains(e.z_next)) {
      throw InvalidArgument("transition " + describe(e, grp.dt) +
                            " lies outside the truncation window");
    }
  }
}

double weight(const TransitionGroup::Entry& e, double pij, double dt) {
  if (!(pij > 0.0) || !std::isfinite(pij)) {
    throw ComputationError("transition " + describe(e, dt) +
                           " has zero probability at the current parameters");
  }
  return static_cast<double>(e.count) / pij;
}

Flow flow_from_matrix(const Matrix& s) {
  const auto n = static_cast<std::size_t>(s.rows());
  Flow f(n);
  for (std::size_t a = 0; a < n; ++a) {
    const auto ia = static_cast<Eigen::Index>(a);
    f.hold[a] = s(ia, ia);
    if (a + 1 < n) f.up[a] = s(ia, ia + 1);
    if (a > 0) f.down[a] = s(ia, ia - 1);
  }
  return f;
}

Flow flow_expm(const Model& model, ParamView p, const TruncationWindow& w,
               const TransitionGroup& grp) {
  const GeneratorMatrix g = build_generator(model, p, w);
  const Matrix pm = expm(g.q * grp.dt);
  Matrix wts = Matrix::Zero(pm.rows(), pm.cols());
  for (const auto& e : grp.entries) {
    const auto i = static_cast<Eigen::Index>(w.index(e.z_prev));
    const auto j = static_cast<Eigen::Index>(w.index(e.z_next));
    wts(i, j) += weight(e, pm(i, j), grp.dt);
  }
  // [int exp(Q^T s) W exp(Q^T (dt - s)) ds]_{ab} = sum_ij W_ij I(i, a, b, j)
  return flow_from_matrix(van_loan_block(g.q.transpose(), wts, grp.dt));
}

/// Composite Simpson rule with E_m = exp(Q dt / M)^m. M is even, at least
/// kNumIntervals, and large enough that each panel spans at most 1/8 of the
/// fastest mean holding time.
Flow flow_num(const Model& model, ParamView p, const TruncationWindow& w,
              const TransitionGroup& grp) {
  const GeneratorMatrix g = build_generator(model, p, w);
  const double q_max = (-g.q.diagonal()).maxCoeff();
  int panels = kNumIntervals;
  const double wanted = std::ceil(8.0 * grp.dt * q_max);
  if (wanted > panels) panels = static_cast<int>(std::min(wanted, double(kMaxIntervals)));
  panels += panels % 2;
  const Matrix step = expm(g.q * (grp.dt / panels));

  const auto nf = static_cast<Eigen::Index>(grp.from.size());
  const auto nt = static_cast<Eigen::Index>(grp.to.size());
  const Eigen::Index n = step.rows();
  // fwd[m] = rows `from` of E_m, bwd[m] = columns `to` of E_m
  std::vector<Matrix> fwd(static_cast<std::size_t>(panels) + 1), bwd(fwd.size());
  fwd[0] = Matrix::Zero(nf, n);
  bwd[0] = Matrix::Zero(n, nt);
  for (Eigen::Index a = 0; a < nf; ++a) fwd[0](a, static_cast<Eigen::Index>(w.index(grp.from[a]))) = 1.0;
  for (Eigen::Index b = 0; b < nt; ++b) bwd[0](static_cast<Eigen::Index>(w.index(grp.to[b])), b) = 1.0;
  for (std::size_t m = 1; m < fwd.size(); ++m) {
    fwd[m] = fwd[m - 1] * step;
    bwd[m] = step * bwd[m - 1];
  }
  const Matrix pm = fwd.back() * bwd[0];

  Matrix wts = Matrix::Zero(nf, nt);
  for (const auto& e : grp.entries) {
    const auto a = std::lower_bound(grp.from.begin(), grp.from.end(), e.z_prev) - grp.from.begin();
    const auto b = std::lower_bound(grp.to.begin(), grp.to.end(), e.z_next) - grp.to.begin();
    wts(a, b) += weight(e, pm(a, b), grp.dt);
  }

  Flow f(static_cast<std::size_t>(n));
  const double h = grp.dt / panels;
  for (int m = 0; m <= panels; ++m) {
    const double c = (m == 0 || m == panels) ? h / 3.0 : (m % 2 ? 4.0 * h / 3.0 : 2.0 * h / 3.0);
    const Matrix x = fwd[static_cast<std::size_t>(m)].transpose() * wts;  // n x |to|
    const Matrix& right = bwd[static_cast<std::size_t>(panels - m)];
    for (Eigen::Index a = 0; a < n; ++a) {
      const auto ua = static_cast<std::size_t>(a);
      f.hold[ua] += c * x.row(a).dot(right.row(a));
      if (a + 1 < n) f.up[ua] += c * x.row(a).dot(right.row(a + 1));
      if (a > 0) f.down[ua] += c * x.row(a).dot(right.row(a - 1));
    }
  }
  return f;
}

// Same reflecting truncation as the generator, so the continued fraction
// terminates at z_max and decouples below z_min.
Model windowed(const Model& model, const TruncationWindow& w) {
  const double lo = static_cast<double>(w.z_min), hi = static_cast<double>(w.z_max);
  return Model(
      model.label(),
      [&model, hi](double z, ParamView p) { return z >= hi ? 0.0 : model.birth(z, p); },
      [&model, lo](double z, ParamView p) { return z == lo && lo > 0.0 ? 0.0 : model.death(z, p); },
      model.param_count());
}

Flow flow_ilt_rule(const Model& full, ParamView p, const TruncationWindow& w,
                   const TransitionGroup& grp, const InversionRule& rule) {
  const Model model = windowed(full, w);
  const auto n = static_cast<Eigen::Index>(w.size());
  const auto nf = static_cast<Eigen::Index>(grp.from.size());
  const auto nt = static_cast<Eigen::Index>(grp.to.size());
  const std::size_t nodes = rule.nodes.size();
  std::vector<ComplexMatrix> left(nodes), right(nodes);
  Matrix pij = Matrix::Zero(nf, nt);
  for (std::size_t k = 0; k < nodes; ++k) {
    auto table = TransformTable::truncated(model, p, rule.nodes[k], w.z_max);
    left[k].resize(n, nf);
    right[k].resize(n, nt);
    for (Eigen::Index a = 0; a < nf; ++a) {
      for (Eigen::Index z = 0; z < n; ++z) left[k](z, a) = table(grp.from[a], w.z_min + z);
    }
    for (Eigen::Index b = 0; b < nt; ++b) {
      for (Eigen::Index z = 0; z < n; ++z) right[k](z, b) = table(w.z_min + z, grp.to[b]);
      for (Eigen::Index a = 0; a < nf; ++a) {
        pij(a, b) += (rule.weights[k] * table(grp.from[a], grp.to[b])).real();
      }
    }
  }
  ComplexMatrix wts = ComplexMatrix::Zero(nf, nt);
  for (const auto& e : grp.entries) {
    const auto a = std::lower_bound(grp.from.begin(), grp.from.end(), e.z_prev) - grp.from.begin();
    const auto b = std::lower_bound(grp.to.begin(), grp.to.end(), e.z_next) - grp.to.begin();
    wts(a, b) += weight(e, pij(a, b), grp.dt);
  }
  Flow f(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < nodes; ++k) {
    const ComplexMatrix x = left[k] * wts;
    const Complex wk = rule.weights[k];
    for (Eigen::Index a = 0; a < n; ++a) {
      const auto ua = static_cast<std::size_t>(a);
      // transpose() rather than dot() so nothing is conjugated
      f.hold[ua] += (wk * (x.row(a) * right[k].row(a).transpose())(0, 0)).real();
      if (a + 1 < n) f.up[ua] += (wk * (x.row(a) * right[k].row(a + 1).transpose())(0, 0)).real();
      if (a > 0) f.down[ua] += (wk * (x.row(a) * right[k].row(a - 1).transpose())(0, 0)).real();
    }
  }
  for (double v : f.hold) {
    if (!std::isfinite(v)) throw ComputationError("Laplace inversion produced a non-finite value");
  }
  return f;
}

Flow flow_ilt(const Model& model, ParamView p, const TruncationWindow& w,
              const TransitionGroup& grp, InversionMethod method) {
  if (method != InversionMethod::TalbotEulerFallback) {
    return flow_ilt_rule(model, p, w, grp, inversion_rule(method, grp.dt));
  }
  try {
    return flow_ilt_rule(model, p, w, grp, inversion_rule(InversionMethod::Talbot, grp.dt));
  } catch (const ComputationError&) {
    return flow_ilt_rule(model, p, w, grp, inversion_rule(InversionMethod::Euler, grp.dt));
  }
}

Flow group_flow(const Model& model, ParamView p, const TruncationWindow& w,
                const TransitionGroup& grp, EmTechnique technique, const EmStatsOptions& opts) {
  if (!(grp.dt > 0.0)) throw InvalidArgument("EM statistics need a positive elapsed time");
  check_in_window(grp, w);
  switch (technique) {
    case EmTechnique::Expm: return flow_expm(model, p, w, grp);
    case EmTechnique::Num: return flow_num(model, p, w, grp);
    case EmTechnique::Ilt: return flow_ilt(model, p, w, grp, opts.laplace_method);
  }
  throw InvalidArgument("unknown EM technique");
}

SufficientStats to_stats(const Model& model, ParamView p, const TruncationWindow& w,
                         const Flow& f, const EmStatsOptions& opts) {
  SufficientStats s{w.z_min, std::vector<double>(w.size()), std::vector<double>(w.size()),
                    std::vector<double>(w.size())};
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double z = static_cast<double>(w.z_min + static_cast<long>(k));
    s.u[k] = model.birth(z, p) * f.up[k];
    s.d[k] = model.death(z, p) * f.down[k];
    s.h[k] = f.hold[k];
  }
  if (opts.j_tol <= 0.0 && opts.h_tol <= 0.0) return s;
  // drop states that carry negligible expected activity, then trim the ends
  std::size_t lo = s.size(), hi = 0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s.u[k] < opts.j_tol && s.d[k] < opts.j_tol && s.h[k] < opts.h_tol) {
      s.u[k] = s.d[k] = s.h[k] = 0.0;
    } else {
      lo = std::min(lo, k);
      hi = k;
    }
  }
  if (lo > hi) return SufficientStats{w.z_min, {}, {}, {}};
  const auto first = static_cast<std::ptrdiff_t>(lo), last = static_cast<std::ptrdiff_t>(hi + 1);
  return SufficientStats{w.z_min + static_cast<long>(lo),
                         {s.u.begin() + first, s.u.begin() + last},
                         {s.d.begin() + first, s.d.begin() + last},
                         {s.h.begin() + first, s.h.begin() + last}};
}

}  // namespace

SufficientStats em_expected_stats(const Model& model, ParamView p, long z_prev, long z_next,
                                  double dt, EmTechnique technique, const EmStatsOptions& opts) {
  model.check_params(p);
  if (z_prev < 0 || z_next < 0) throw InvalidArgument("states must be non-negative");
  const TruncationWindow w =
      opts.window ? clip_window(*opts.window, model, p)
                  : clip_window(default_window({z_prev, z_next}), model, p);
  TransitionGroup grp{dt, {z_prev}, {z_next}, {{z_prev, z_next, 1}}};
  return to_stats(model, p, w, group_flow(model, p, w, grp, technique, opts), opts);
}

SufficientStats em_data_stats(const Model& model, ParamView p, const ObservedData& data,
                              EmTechnique technique, const EmStatsOptions& opts) {
  model.check_params(p);
  const TruncationWindow w = data_window(data, model, p, opts.window);
  const auto groups = group_transitions(data);
  std::vector<Flow> flows(groups.size());
  parallel_for(groups.size(), [&](std::size_t g) {
    flows[g] = group_flow(model, p, w, groups[g], technique, opts);
  });
  Flow total(w.size());
  for (const Flow& f : flows) {
    for (std::size_t k = 0; k < w.size(); ++k) {
      total.hold[k] += f.hold[k];
      total.up[k] += f.up[k];
      total.down[k] += f.down[k];
    }
  }
  return to_stats(model, p, w, total, opts);
}

namespace {

using Vec = std::vector<double>;

Vector as_vector(const Vec& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }
Vec as_vec(const Vector& v) { return Vec(v.data(), v.data() + v.size()); }

bool all_finite(const Vec& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

EstimationResult em_estimate(const ObservedData& data, const Model& model,
                             const EstimateRequest& req) {
  if (data.scheme != Scheme::Discrete) throw InvalidArgument("em requires discrete data");
  if (req.max_it < 1) throw InvalidArgument("max_it must be at least 1");
  const detail::FreeProblem fp = detail::prepare(model, req);
  const std::vector<Constraint> cons = detail::free_constraints(req.constraints, fp);
  const auto groups = group_transitions(data);
  const EmStatsOptions so{req.prob.z_trunc, req.j_tol, req.h_tol,
                          req.prob.laplace_method};
  const std::size_t dim = req.p0.size();

  const auto loglik = [&](const Vec& x) {
    try {
      return detail::discrete_terms(groups, data, model, fp.full(x), req.likelihood, req.prob)
          .loglik;
    } catch (const ComputationError&) {
      return -kInf;
    }
  };
  const auto feasible = [&](const Vec& x) {
    return all_finite(x) && req.bounds.contains(x) && constraint_violation(cons, x) <= 1e-8;
  };
  // expected complete-data log-likelihood f(x, theta) for fixed statistics
  const auto surrogate = [&](const SufficientStats& s) -> Objective {
    return [&model, &fp, s](std::span<const double> x) {
      return complete_data_loglik(s, model, fp.full(x));
    };
  };

  EstimationResult res;
  res.method = to_string(req.technique);
  Vec theta = req.p0;
  double ell = loglik(theta);
  res.iterations.push_back(fp.full(theta));

  // accelerator state
  Matrix qn1_a = -Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  Matrix qn2_s = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  Matrix lange_b = qn2_s;
  std::optional<Vector> prev_theta, prev_g, prev_gt, prev_d;
  std::size_t fallbacks = 0;

  const auto line_search = [&](const Vec& x, const Vector& d) -> std::optional<std::pair<Vec, double>> {
    const Vector base = as_vector(x);
    double alpha = 1.0;
    Vec trial = as_vec(base + alpha * d);
    for (int k = 0; k < 30 && !feasible(trial); ++k) {
      alpha *= 0.5;
      trial = as_vec(base + alpha * d);
    }
    if (!feasible(trial)) return std::nullopt;
    double lt = loglik(trial);
    if (lt > ell) {
      for (int k = 0; k < 4; ++k) {
        const Vec bigger = as_vec(base + 2.0 * alpha * d);
        if (!feasible(bigger)) break;
        const double lb = loglik(bigger);
        if (!(lb > lt)) break;
        alpha *= 2.0;
        trial = bigger;
        lt = lb;
      }
      return std::pair{trial, lt};
    }
    for (int k = 0; k < 6; ++k) {
      alpha *= 0.5;
      trial = as_vec(base + alpha * d);
      lt = loglik(trial);
      if (lt > ell) return std::pair{trial, lt};
    }
    return std::nullopt;
  };

  bool converged = false;
  res.success = true;
  std::size_t it = 0;
  for (it = 1; it <= req.max_it; ++it) {
    const SufficientStats stats = em_data_stats(model, fp.full(theta), data, req.technique, so);
    const Objective q = surrogate(stats);
    const Objective neg_q = detail::guarded([&](std::span<const double> x) {
      const double v = q(x);
      return std::isfinite(v) ? -v : kInf;
    });
    const MinimizeResult m = minimize(neg_q, theta, req.bounds, cons, req.opt);
    if (!std::isfinite(m.fun) || !all_finite(m.x)) {
      res.success = false;
      res.message = "M-step failed: " + m.message;
      break;
    }
    Vec next = m.x;
    double next_ell = std::numeric_limits<double>::quiet_NaN();

    if (req.accelerator != EmAccelerator::None) {
      const Vector th = as_vector(theta);
      const Vector gt = as_vector(m.x) - th;  // EM step as a generalized gradient
      // Fisher identity: the observed-data score equals the surrogate's gradient at theta
      const Vector g = -as_vector(gradient_fd(neg_q, theta, neg_q(theta), &req.bounds));
      std::optional<std::pair<Vec, double>> proposal;
      std::optional<Vector> direction;
      const bool have_prev = prev_theta.has_value() && g.allFinite();
      switch (req.accelerator) {
        case EmAccelerator::Lange: {
          const Matrix hq = hessian_fd(q, theta);
          if (have_prev) {
            const Vector s = th - *prev_theta;
            const Vector r = (g - *prev_g) - hq * s - lange_b * s;
            const double den = r.dot(s);
            if (std::abs(den) > 1e-8 * r.norm() * s.norm() && std::isfinite(den)) {
              lange_b += r * r.transpose() / den;
            }
          }
          const Matrix curvature = hq + lange_b;
          if (curvature.allFinite() && g.allFinite()) {
            const Vector step = curvature.fullPivLu().solve(-g);
            const Vec x = as_vec(th + step);
            if (step.allFinite() && feasible(x)) proposal = std::pair{x, loglik(x)};
          }
          break;
        }
        case EmAccelerator::Qn1: {
          if (have_prev) {
            const Vector dth = th - *prev_theta;
            const Vector dgt = gt - *prev_gt;
            const double den = dth.dot(qn1_a * dgt);
            if (std::abs(den) > 1e-14) {
              qn1_a += (dth - qn1_a * dgt) * (dth.transpose() * qn1_a) / den;
            }
          }
          const Vec x = as_vec(th - qn1_a * gt);
          if (all_finite(x) && feasible(x)) proposal = std::pair{x, loglik(x)};
          break;
        }
        case EmAccelerator::Qn2: {
          if (have_prev) {
            const Vector dth = th - *prev_theta;
            const Vector dg = g - *prev_g;
            const Vector dgt = gt - *prev_gt;
            const double c = dg.dot(dth);
            if (std::abs(c) > 1e-14) {
              const Vector dstar = -dgt + qn2_s * dg;
              qn2_s += (1.0 + dg.dot(dstar) / c) * dth * dth.transpose() / c -
                       (dstar * dth.transpose() + dth * dstar.transpose()) / c;
            }
          }
          const Vector d = gt - qn2_s * g;
          if (d.allFinite()) proposal = line_search(theta, d);
          break;
        }
        case EmAccelerator::Cg: {
          Vector d = gt;
          if (have_prev && prev_d && (it - 1) % dim != 0) {
            const Vector dg = g - *prev_g;
            const double den = prev_d->dot(dg);
            if (std::abs(den) > 1e-14) d = gt - (dg.dot(gt) / den) * *prev_d;
          }
          if (d.allFinite()) {
            proposal = line_search(theta, d);
            direction = d;
          }
          break;
        }
        case EmAccelerator::None: break;
      }
      if (proposal && feasible(proposal->first) && proposal->second >= ell) {
        next = proposal->first;
        next_ell = proposal->second;
        prev_d = direction ? *direction : gt;
      } else {
        ++fallbacks;
        prev_d = gt;
      }
      prev_theta = th;
      prev_g = g;
      prev_gt = gt;
    }
    if (std::isnan(next_ell)) next_ell = loglik(next);

    double change = 0.0;
    for (std::size_t i = 0; i < dim; ++i) change += std::abs(next[i] - theta[i]);
    theta = std::move(next);
    ell = next_ell;
    res.iterations.push_back(fp.full(theta));
    if (change < req.i_tol) {
      converged = true;
      break;
    }
  }
  res.p = fp.full(theta);
  res.val = ell;
  if (res.success) {
    res.message = converged ? "converged after " + std::to_string(it) + " iterations"
                            : "stopped at max_it = " + std::to_string(req.max_it);
    if (req.accelerator != EmAccelerator::None) {
      res.message += " (accelerator " + to_string(req.accelerator) + ", " +
                     std::to_string(fallbacks) + " plain EM fallbacks)";
    }
  }
  return res;
}

}  // namespace bdp
