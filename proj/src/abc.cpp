#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "bdp/errors.hpp"
#include "bdp/estimate.hpp"
#include "bdp/parallel.hpp"
#include "bdp/rng.hpp"
#include "bdp/uncertainty.hpp"
#include "estimate_detail.hpp"

namespace bdp {

namespace {

using Vec = std::vector<double>;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Particles {
  std::vector<Vec> theta;
  Vec weights;    // normalized
  Vec distances;
  Matrix kernel;  // perturbation covariance 2 * Sigma_w
};

Vec weighted_mean(const Particles& ps) {
  Vec m(ps.theta.front().size(), 0.0);
  for (std::size_t i = 0; i < ps.theta.size(); ++i) {
    for (std::size_t d = 0; d < m.size(); ++d) m[d] += ps.weights[i] * ps.theta[i][d];
  }
  return m;
}

Vec weighted_median(const Particles& ps) {
  Vec out(ps.theta.front().size());
  std::vector<std::size_t> order(ps.theta.size());
  for (std::size_t d = 0; d < out.size(); ++d) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return ps.theta[a][d] < ps.theta[b][d]; });
    double acc = 0.0;
    out[d] = ps.theta[order.back()][d];
    for (std::size_t i : order) {
      acc += ps.weights[i];
      if (acc >= 0.5) {
        out[d] = ps.theta[i][d];
        break;
      }
    }
  }
  return out;
}

Matrix weighted_cov(const Particles& ps) {
  const Vec m = weighted_mean(ps);
  const auto dim = static_cast<Eigen::Index>(m.size());
  Matrix c = Matrix::Zero(dim, dim);
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < ps.theta.size(); ++i) {
    Vector r(dim);
    for (Eigen::Index d = 0; d < dim; ++d) r(d) = ps.theta[i][static_cast<std::size_t>(d)] - m[static_cast<std::size_t>(d)];
    c += ps.weights[i] * r * r.transpose();
    sum_sq += ps.weights[i] * ps.weights[i];
  }
  if (sum_sq < 1.0) c /= (1.0 - sum_sq);
  return c;
}

/// Lower factor of a PSD matrix (Cholesky, or eigen square root when singular).
Matrix factor(const Matrix& c) {
  Eigen::LLT<Matrix> llt(c);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  return Eigen::SelfAdjointEigenSolver<Matrix>(nearest_psd(c)).operatorSqrt();
}

/// Gaussian kernel density of the particles (kernel covariance ps.kernel) at x.
double kde(const Particles& ps, const Vec& x) {
  const auto dim = static_cast<Eigen::Index>(x.size());
  Eigen::LDLT<Matrix> ldlt(ps.kernel);
  const double det = ps.kernel.determinant();
  if (!(det > 0.0)) return kInf;
  const double norm = 1.0 / std::sqrt(std::pow(2.0 * std::numbers::pi, static_cast<double>(dim)) * det);
  double total = 0.0;
  for (std::size_t i = 0; i < ps.theta.size(); ++i) {
    Vector r(dim);
    for (Eigen::Index d = 0; d < dim; ++d) r(d) = x[static_cast<std::size_t>(d)] - ps.theta[i][static_cast<std::size_t>(d)];
    total += ps.weights[i] * std::exp(-0.5 * r.dot(ldlt.solve(r)));
  }
  return norm * total;
}

double quantile(Vec v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return kInf;
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

EstimationResult abc_estimate(const ObservedData& data, const Model& model,
                              const EstimateRequest& req) {
  if (data.scheme != Scheme::Discrete) throw InvalidArgument("abc requires discrete data");
  const detail::FreeProblem fp = detail::prepare(model, req);
  const AbcOptions& o = req.abc;
  if (o.k == 0) throw InvalidArgument("abc: k must be positive");
  if (o.max_its == 0) throw InvalidArgument("abc: max_its must be positive");
  if (o.gam == 0) throw InvalidArgument("abc: gam must be positive");
  for (const auto& [lo, hi] : req.bounds.box) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
      throw InvalidArgument("abc needs finite bounds (they define the uniform prior)");
    }
  }
  const std::vector<Constraint> cons = detail::free_constraints(req.constraints, fp);
  const std::vector<Transition> trans = transitions(data);
  std::vector<long> observed;
  double min_dt = kInf;
  for (const auto& t : trans) {
    observed.push_back(t.z_next);
    min_dt = std::min(min_dt, t.dt);
  }
  const double tau = o.tau.value_or(min_dt / 10.0);
  if (!(tau > 0.0)) throw InvalidArgument("abc: tau must be positive");
  const AbcDistance distance = o.distance ? o.distance : AbcDistance(abc_distance);
  const std::size_t dim = req.p0.size();
  double prior_volume = 1.0;
  for (const auto& [lo, hi] : req.bounds.box) prior_volume *= (hi - lo);
  const double prior_density = prior_volume > 0.0 ? 1.0 / prior_volume : kInf;

  // Every proposal consumes stream `proposals_used + index` for its simulation.
  std::uint64_t proposals_used = 0;
  double best_seen = kInf;
  const auto simulate_distance = [&](const Vec& x, std::uint64_t stream) {
    const Params full = fp.full(x);
    RngStream rng(req.seed, stream);
    std::vector<long> sim(trans.size());
    for (std::size_t i = 0; i < trans.size(); ++i) {
      sim[i] = simulate_transition(model, full, trans[i].z_prev, trans[i].dt, o.sim_method, tau, rng);
    }
    return distance(observed, sim);
  };
  // separate stream family for drawing proposals
  RngStream draw_rng(splitmix64(req.seed ^ 0xabcULL), 0);
  const auto prior_draw = [&]() {
    Vec x(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      const auto [lo, hi] = req.bounds.box[d];
      x[d] = lo + (hi - lo) * draw_rng.uniform();
    }
    return x;
  };
  const auto admissible = [&](const Vec& x) {
    return req.bounds.contains(x) && (cons.empty() || constraint_violation(cons, x) <= 1e-12);
  };

  // Draws `count` admissible proposals and simulates their distances.
  const auto run_batch = [&](const std::function<Vec()>& propose, std::size_t count) {
    std::vector<Vec> xs(count);
    for (auto& x : xs) {
      std::size_t tries = 0;
      do {
        x = propose();
        if (++tries > 1000000) throw ComputationError("abc: could not draw an admissible proposal");
      } while (!admissible(x));
    }
    Vec ds(count);
    const std::uint64_t base = proposals_used;
    parallel_for(count, [&](std::size_t i) { ds[i] = simulate_distance(xs[i], base + i); });
    proposals_used += count;
    for (double d : ds) best_seen = std::min(best_seen, d);
    return std::pair{std::move(xs), std::move(ds)};
  };

  // Keeps the first k proposals (in draw order) with distance below eps.
  const auto accept_until = [&](const std::function<Vec()>& propose, double eps) {
    Particles ps;
    while (ps.theta.size() < o.k) {
      if (proposals_used >= o.max_proposals) {
        throw ComputationError("abc: fewer than k proposals accepted within " +
                               std::to_string(o.max_proposals) +
                               " proposals; smallest distance seen " + std::to_string(best_seen) +
                               ", threshold " + std::to_string(eps));
      }
      const std::size_t batch =
          std::min<std::size_t>(std::max<std::size_t>(2 * (o.k - ps.theta.size()), 64),
                                o.max_proposals - proposals_used);
      auto [xs, ds] = run_batch(propose, batch);
      for (std::size_t i = 0; i < xs.size() && ps.theta.size() < o.k; ++i) {
        if (ds[i] < eps || std::isinf(eps)) {
          ps.theta.push_back(std::move(xs[i]));
          ps.distances.push_back(ds[i]);
        }
      }
    }
    return ps;
  };

  EstimationResult res;
  res.method = to_string(o.sim_method);
  std::vector<Particles> history;
  std::vector<double> eps_used;
  const bool dynamic = o.eps_abc.empty();
  std::string stop = "reached max_its";

  for (std::size_t iter = 0; iter < o.max_its; ++iter) {
    Particles ps;
    if (iter == 0) {
      if (dynamic) {
        auto [xs, ds] = run_batch(prior_draw, o.k * o.gam);
        std::vector<std::size_t> order(xs.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return ds[a] < ds[b]; });
        for (std::size_t r = 0; r < o.k && r < order.size(); ++r) {
          ps.theta.push_back(xs[order[r]]);
          ps.distances.push_back(ds[order[r]]);
        }
        // nudged up so every kept proposal satisfies d < eps
        eps_used.push_back(std::nextafter(ps.distances.back(), kInf));
      } else {
        eps_used.push_back(o.eps_abc.front());
        ps = accept_until(prior_draw, o.eps_abc.front());
      }
      ps.weights.assign(ps.theta.size(), 1.0 / static_cast<double>(ps.theta.size()));
    } else {
      const Particles& prev = history.back();
      double eps;
      if (dynamic) {
        // q = 1 / sup(pi_{t-1} / pi_{t-2}) over the current particles
        double ratio_sup = 0.0;
        for (const Vec& x : prev.theta) {
          const double num = kde(prev, x);
          const double den = history.size() >= 2 ? kde(history[history.size() - 2], x)
                                                 : prior_density;
          if (den > 0.0 && std::isfinite(num)) ratio_sup = std::max(ratio_sup, num / den);
        }
        const double q = ratio_sup > 0.0 ? std::min(1.0, 1.0 / ratio_sup) : 1.0;
        if (q > o.max_q) {
          stop = "acceptance quantile " + std::to_string(q) + " exceeded max_q";
          break;
        }
        eps = quantile(prev.distances, q);
        const double last = eps_used.back();
        if (last > 0.0 && std::isfinite(last) && 100.0 * (last - eps) / last < o.eps_change) {
          stop = "threshold improved by less than eps_change percent";
          break;
        }
      } else {
        if (iter >= o.eps_abc.size()) {
          stop = "thresholds exhausted";
          break;
        }
        eps = o.eps_abc[iter];
      }
      eps_used.push_back(eps);
      const Matrix l = factor(prev.kernel);
      std::discrete_distribution<std::size_t> pick(prev.weights.begin(), prev.weights.end());
      const auto perturb = [&]() {
        const Vec& base = prev.theta[pick(draw_rng)];
        Vector z(static_cast<Eigen::Index>(dim));
        for (Eigen::Index d = 0; d < z.size(); ++d) z(d) = draw_rng.normal();
        const Vector step = l * z;
        Vec x(dim);
        for (std::size_t d = 0; d < dim; ++d) x[d] = base[d] + step(static_cast<Eigen::Index>(d));
        return x;
      };
      ps = accept_until(perturb, eps);
      Eigen::LDLT<Matrix> ldlt(prev.kernel);
      ps.weights.resize(ps.theta.size());
      for (std::size_t i = 0; i < ps.theta.size(); ++i) {
        double mix = 0.0;
        for (std::size_t j = 0; j < prev.theta.size(); ++j) {
          Vector r(static_cast<Eigen::Index>(dim));
          for (std::size_t d = 0; d < dim; ++d) r(static_cast<Eigen::Index>(d)) = ps.theta[i][d] - prev.theta[j][d];
          mix += prev.weights[j] * std::exp(-0.5 * r.dot(ldlt.solve(r)));
        }
        ps.weights[i] = mix > 0.0 ? 1.0 / mix : 0.0;
      }
      const double total = std::accumulate(ps.weights.begin(), ps.weights.end(), 0.0);
      if (!(total > 0.0)) {
        ps.weights.assign(ps.theta.size(), 1.0 / static_cast<double>(ps.theta.size()));
      } else {
        for (double& w : ps.weights) w /= total;
      }
    }
    ps.kernel = 2.0 * weighted_cov(ps);
    if (ps.kernel.trace() <= 0.0 || !ps.kernel.allFinite()) {
      ps.kernel = 1e-12 * Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    }
    const Vec est = o.median ? weighted_median(ps) : weighted_mean(ps);
    res.iterations.push_back(fp.full(est));
    history.push_back(std::move(ps));
  }

  const Particles& last = history.back();
  const Vec est = o.median ? weighted_median(last) : weighted_mean(last);
  res.p = fp.full(est);
  res.val = eps_used[history.size() - 1];
  for (const Vec& x : last.theta) res.samples.push_back(fp.full(x));
  if (last.theta.size() >= 2) {
    const CovarianceReport rep = sample_cov(last.theta, "abc-samples", last.weights);
    res.cov = rep.cov;
    res.se = rep.se;
    res.cov_source = rep.source;
  }
  res.success = true;
  res.message = stop + " after " + std::to_string(history.size()) + " iteration(s), " +
                std::to_string(proposals_used) + " proposals";
  return res;
}

}  // namespace bdp
