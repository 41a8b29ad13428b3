#include "bdp/estimate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "bdp/errors.hpp"
#include "bdp/linalg.hpp"
#include "bdp/parallel.hpp"
#include "bdp/rng.hpp"
#include "bdp/uncertainty.hpp"
#include "estimate_detail.hpp"

namespace bdp {

Framework parse_framework(std::string_view label) {
  if (label == "dnm") return Framework::Dnm;
  if (label == "em") return Framework::Em;
  if (label == "lse") return Framework::Lse;
  if (label == "abc") return Framework::Abc;
  throw InvalidArgument("unknown framework '" + std::string(label) +
                        "' (expected dnm, em, lse or abc)");
}

EmTechnique parse_em_technique(std::string_view label) {
  if (label == "expm") return EmTechnique::Expm;
  if (label == "ilt") return EmTechnique::Ilt;
  if (label == "num") return EmTechnique::Num;
  throw InvalidArgument("unknown EM technique '" + std::string(label) +
                        "' (expected expm, ilt or num)");
}

EmAccelerator parse_em_accelerator(std::string_view label) {
  if (label == "none") return EmAccelerator::None;
  if (label == "cg") return EmAccelerator::Cg;
  if (label == "qn1") return EmAccelerator::Qn1;
  if (label == "qn2") return EmAccelerator::Qn2;
  if (label == "Lange") return EmAccelerator::Lange;
  throw InvalidArgument("unknown accelerator '" + std::string(label) +
                        "' (expected none, cg, qn1, qn2 or Lange)");
}

SquaresMethod parse_squares(std::string_view label) {
  if (label == "expm") return SquaresMethod::Expm;
  if (label == "fm") return SquaresMethod::Fm;
  if (label == "gwa") return SquaresMethod::Gwa;
  throw InvalidArgument("unknown squares method '" + std::string(label) +
                        "' (expected expm, fm or gwa)");
}

SeType parse_se_type(std::string_view label) {
  if (label == "asymptotic") return SeType::Asymptotic;
  if (label == "simulated") return SeType::Simulated;
  if (label == "none") return SeType::None;
  throw InvalidArgument("unknown se type '" + std::string(label) +
                        "' (expected asymptotic, simulated or none)");
}

std::string to_string(Framework f) {
  switch (f) {
    case Framework::Dnm: return "dnm";
    case Framework::Em: return "em";
    case Framework::Lse: return "lse";
    case Framework::Abc: return "abc";
  }
  return "?";
}

std::string to_string(EmTechnique t) {
  switch (t) {
    case EmTechnique::Expm: return "expm";
    case EmTechnique::Ilt: return "ilt";
    case EmTechnique::Num: return "num";
  }
  return "?";
}

std::string to_string(EmAccelerator a) {
  switch (a) {
    case EmAccelerator::None: return "none";
    case EmAccelerator::Cg: return "cg";
    case EmAccelerator::Qn1: return "qn1";
    case EmAccelerator::Qn2: return "qn2";
    case EmAccelerator::Lange: return "Lange";
  }
  return "?";
}

std::string to_string(SquaresMethod s) {
  switch (s) {
    case SquaresMethod::Expm: return "expm";
    case SquaresMethod::Fm: return "fm";
    case SquaresMethod::Gwa: return "gwa";
  }
  return "?";
}

std::string to_string(SeType s) {
  switch (s) {
    case SeType::Asymptotic: return "asymptotic";
    case SeType::Simulated: return "simulated";
    case SeType::None: return "none";
  }
  return "?";
}

double abc_distance(std::span<const long> observed, std::span<const long> simulated) {
  if (observed.size() != simulated.size()) {
    throw InvalidArgument("abc_distance: datasets differ in size");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double d = static_cast<double>(observed[i] - simulated[i]);
    total += d * d;
  }
  return std::sqrt(total);
}

namespace {

constexpr double kProbFloor = 1e-300;
constexpr double kInf = std::numeric_limits<double>::infinity();

bool uses_window(ProbMethod m) {
  return m == ProbMethod::Expm || m == ProbMethod::Uniform || m == ProbMethod::Erlang;
}

std::size_t position(const std::vector<long>& sorted, long z) {
  return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), z) -
                                  sorted.begin());
}

}  // namespace

namespace detail {

DiscreteTerms discrete_terms(const std::vector<TransitionGroup>& groups,
                             const ObservedData& data, const Model& model, ParamView p,
                             ProbMethod method, const ProbOptions& opts) {
  ProbOptions o = opts;
  if (uses_window(method)) o.z_trunc = data_window(data, model, p, opts.z_trunc);
  std::vector<DiscreteTerms> parts(groups.size());
  parallel_for(groups.size(), [&](std::size_t g) {
    const TransitionGroup& grp = groups[g];
    const double dt = grp.dt;
    const ProbTensor pt = probability(model, p, grp.from, grp.to, std::span(&dt, 1), method, o);
    DiscreteTerms part;
    for (const auto& e : grp.entries) {
      const double pij = pt(0, position(grp.from, e.z_prev), position(grp.to, e.z_next));
      const auto n = static_cast<double>(e.count);
      if (!(pij > kProbFloor)) part.clamped += e.count;
      part.total += e.count;
      part.loglik += n * std::log(std::max(pij, kProbFloor));
    }
    parts[g] = part;
  });
  DiscreteTerms out;
  for (const auto& part : parts) {
    out.loglik += part.loglik;
    out.clamped += part.clamped;
    out.total += part.total;
  }
  return out;
}

std::vector<Constraint> free_constraints(const std::vector<Constraint>& cons,
                                         const FreeProblem& fp) {
  std::vector<Constraint> out;
  out.reserve(cons.size());
  for (const auto& c : cons) {
    out.push_back({c.kind, [fn = c.fn, known = fp.known, n = fp.n](std::span<const double> x) {
                     const Params full = known.expand(x, n);
                     return fn(full);
                   }});
  }
  return out;
}

FreeProblem prepare(const Model& model, const EstimateRequest& req) {
  const std::size_t n = model.param_count();
  req.known.validate(n);
  const std::size_t free = n - req.known.indices.size();
  if (req.p0.size() != free) {
    throw InvalidArgument("p0 has " + std::to_string(req.p0.size()) + " entries but " +
                          std::to_string(free) + " parameters are to be estimated");
  }
  if (req.bounds.size() != free) {
    throw InvalidArgument("bounds have " + std::to_string(req.bounds.size()) + " entries but " +
                          std::to_string(free) + " parameters are to be estimated");
  }
  for (std::size_t i = 0; i < free; ++i) {
    const auto [lo, hi] = req.bounds.box[i];
    if (!(lo <= hi)) throw InvalidArgument("bound " + std::to_string(i) + " has lower > upper");
  }
  if (!req.bounds.contains(req.p0)) throw InvalidArgument("p0 lies outside the bounds");
  return {model, req.known, n};
}

/// Objective that reports computational failures as +inf so the optimizer backs off.
Objective guarded(std::function<double(std::span<const double>)> f) {
  return [f = std::move(f)](std::span<const double> x) {
    try {
      const double v = f(x);
      return std::isnan(v) ? kInf : v;
    } catch (const ComputationError&) {
      return kInf;
    }
  };
}

}  // namespace detail

using namespace detail;

namespace {

EstimationResult from_minimum(const FreeProblem& fp, const MinimizeResult& r, double val) {
  EstimationResult res;
  res.p = fp.full(r.x);
  res.val = val;
  res.success = r.success && std::isfinite(val);
  res.message = r.message;
  return res;
}

bool closed_form_applies(const Model& model, const EstimateRequest& req) {
  const auto& f = model.factorization();
  if (!f || !req.known.indices.empty() || !req.constraints.empty()) return false;
  for (std::size_t i = 0; i < model.param_count(); ++i) {
    if (f->birth_index != i && f->death_index != i) return false;
  }
  return true;
}

}  // namespace

TruncationWindow data_window(const ObservedData& data, const Model& model, ParamView p,
                             const std::optional<TruncationWindow>& given) {
  if (given) return clip_window(*given, model, p);
  const std::vector<long> counts = data.all_counts();
  return clip_window(default_window(counts), model, p);
}

double loglik_continuous(const ObservedData& data, const Model& model, ParamView p) {
  if (data.scheme != Scheme::Continuous) {
    throw InvalidArgument("loglik_continuous requires continuously observed data");
  }
  return complete_data_loglik(continuous_stats(data), model, p);
}

double loglik_discrete(const ObservedData& data, const Model& model, ParamView p,
                       ProbMethod method, const ProbOptions& opts) {
  return discrete_terms(group_transitions(data), data, model, p, method, opts).loglik;
}

double lse_objective(const ObservedData& data, const Model& model, ParamView p,
                     SquaresMethod squares, const std::optional<TruncationWindow>& window) {
  const auto groups = group_transitions(data);
  std::optional<TruncationWindow> w;
  if (squares == SquaresMethod::Expm) w = data_window(data, model, p, window);
  std::vector<double> parts(groups.size(), 0.0);
  parallel_for(groups.size(), [&](std::size_t g) {
    const TransitionGroup& grp = groups[g];
    std::vector<double> mean(grp.from.size());
    if (squares == SquaresMethod::Expm) {
      const GeneratorMatrix gen = build_generator(model, p, *w);
      const Matrix pm = expm(gen.q * grp.dt);
      Vector states(static_cast<Eigen::Index>(w->size()));
      for (std::size_t k = 0; k < w->size(); ++k) {
        states(static_cast<Eigen::Index>(k)) = static_cast<double>(w->z_min + static_cast<long>(k));
      }
      for (std::size_t a = 0; a < grp.from.size(); ++a) {
        if (!w->contains(grp.from[a])) {
          throw InvalidArgument("state " + std::to_string(grp.from[a]) +
                                " lies outside the truncation window");
        }
        mean[a] = pm.row(static_cast<Eigen::Index>(w->index(grp.from[a]))).dot(states);
      }
    } else if (squares == SquaresMethod::Fm) {
      const double dt = grp.dt;
      for (std::size_t a = 0; a < grp.from.size(); ++a) {
        mean[a] = diffusion_moments(model, p, static_cast<double>(grp.from[a]),
                                    std::span(&dt, 1))
                      .mean[0];
      }
    } else {
      for (std::size_t a = 0; a < grp.from.size(); ++a) {
        const double z = static_cast<double>(grp.from[a]);
        if (z == 0.0) {
          // no individuals to linearize around; immigration acts as a constant rate
          mean[a] = (model.birth(0.0, p) - model.death(0.0, p)) * grp.dt;
          continue;
        }
        const double growth = (model.birth(z, p) - model.death(z, p)) / z;
        mean[a] = z * std::exp(growth * grp.dt);
      }
    }
    double s = 0.0;
    for (const auto& e : grp.entries) {
      const double r = static_cast<double>(e.z_next) - mean[position(grp.from, e.z_prev)];
      s += static_cast<double>(e.count) * r * r;
    }
    parts[g] = s;
  });
  return std::accumulate(parts.begin(), parts.end(), 0.0);
}

EstimationResult mle_continuous(const ObservedData& data, const Model& model,
                                const EstimateRequest& req) {
  if (data.scheme != Scheme::Continuous) {
    throw InvalidArgument("mle_continuous requires continuously observed data");
  }
  const FreeProblem fp = prepare(model, req);
  const SufficientStats stats = continuous_stats(data);
  if (closed_form_applies(model, req)) {
    const RateFactorization& f = *model.factorization();
    Params p(model.param_count(), 0.0);
    const auto ratio = [&](const std::vector<double>& counts,
                           const std::function<double(double)>& shape, const char* what) {
      double num = 0.0, den = 0.0;
      for (std::size_t k = 0; k < stats.size(); ++k) {
        num += counts[k];
        den += shape(static_cast<double>(stats.z_min + static_cast<long>(k))) * stats.h[k];
      }
      if (!(den > 0.0)) {
        throw ComputationError(std::string("no occupancy of states with a positive ") + what +
                               " rate shape; the closed-form estimate is undefined");
      }
      return num / den;
    };
    if (f.birth_index) p[*f.birth_index] = ratio(stats.u, f.birth_shape, "birth");
    if (f.death_index) p[*f.death_index] = ratio(stats.d, f.death_shape, "death");
    if (req.bounds.contains(p)) {
      EstimationResult res;
      res.p = p;
      res.val = complete_data_loglik(stats, model, p);
      res.success = true;
      res.message = "closed form";
      res.method = "closed-form";
      return res;
    }
  }
  const Objective f = guarded([&](std::span<const double> x) {
    const double v = complete_data_loglik(stats, model, fp.full(x));
    return std::isfinite(v) ? -v : kInf;
  });
  const MinimizeResult r =
      minimize(f, req.p0, req.bounds, free_constraints(req.constraints, fp), req.opt);
  EstimationResult res = from_minimum(fp, r, -r.fun);
  res.method = "numeric";
  return res;
}

EstimationResult dnm_estimate(const ObservedData& data, const Model& model,
                              const EstimateRequest& req) {
  if (data.scheme == Scheme::Continuous) return mle_continuous(data, model, req);
  if (req.likelihood == ProbMethod::Sim && !req.explicit_seed) {
    throw InvalidArgument(
        "the sim likelihood is noisy; it is only accepted together with an explicit seed");
  }
  const FreeProblem fp = prepare(model, req);
  const auto groups = group_transitions(data);
  const DiscreteTerms at_start =
      discrete_terms(groups, data, model, fp.full(req.p0), req.likelihood, req.prob);
  if (at_start.clamped == at_start.total) {
    throw ComputationError(
        "every transition probability is zero at p0; widen the truncation window (--z-trunc) "
        "or choose a different likelihood method");
  }
  const Objective f = guarded([&](std::span<const double> x) {
    return -discrete_terms(groups, data, model, fp.full(x), req.likelihood, req.prob).loglik;
  });
  const MinimizeResult r =
      minimize(f, req.p0, req.bounds, free_constraints(req.constraints, fp), req.opt);
  EstimationResult res = from_minimum(fp, r, -r.fun);
  res.method = to_string(req.likelihood);
  return res;
}

EstimationResult lse_estimate(const ObservedData& data, const Model& model,
                              const EstimateRequest& req) {
  if (data.scheme != Scheme::Discrete) throw InvalidArgument("lse requires discrete data");
  const FreeProblem fp = prepare(model, req);
  const Objective f = guarded([&](std::span<const double> x) {
    return lse_objective(data, model, fp.full(x), req.squares, req.prob.z_trunc);
  });
  const MinimizeResult r =
      minimize(f, req.p0, req.bounds, free_constraints(req.constraints, fp), req.opt);
  EstimationResult res = from_minimum(fp, r, r.fun);
  res.method = to_string(req.squares);
  return res;
}

namespace {

std::vector<double> free_part(const Params& full, const std::vector<std::size_t>& idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(full[i]);
  return out;
}

void attach_report(EstimationResult& res, const CovarianceReport& rep) {
  res.cov = rep.cov;
  res.se = rep.se;
  res.cov_source = rep.source;
  if (rep.repaired) {
    res.warnings.push_back("covariance was not positive semidefinite and was projected");
  }
  if (!rep.diagnostic.empty()) res.warnings.push_back(rep.diagnostic);
}

void attach_uncertainty(EstimationResult& res, const ObservedData& data, const Model& model,
                        const EstimateRequest& req) {
  if (req.se_type == SeType::None) {
    if (req.framework == Framework::Abc) {
      res.cov.reset();
      res.cov_source.clear();
    }
    return;
  }
  if (req.framework == Framework::Abc) return;  // covariance already taken from the samples
  const FreeProblem fp{model, req.known, model.param_count()};
  const std::vector<double> theta = free_part(res.p, res.estimated);
  if (req.se_type == SeType::Asymptotic) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const auto [lo, hi] = req.bounds.box[i];
      if (theta[i] <= lo || theta[i] >= hi) {
        res.warnings.push_back("estimate of parameter " + std::to_string(res.estimated[i]) +
                               " is on its bound; asymptotic standard errors are unreliable");
      }
    }
    Objective loglik;
    if (data.scheme == Scheme::Continuous) {
      const SufficientStats stats = continuous_stats(data);
      loglik = [&, stats](std::span<const double> x) {
        return complete_data_loglik(stats, model, fp.full(x));
      };
    } else {
      const auto groups = group_transitions(data);
      loglik = [&, groups](std::span<const double> x) {
        return discrete_terms(groups, data, model, fp.full(x), req.likelihood, req.prob).loglik;
      };
    }
    attach_report(res, asymptotic_cov(loglik, theta, req.se_step));
    return;
  }
  EstimateRequest sub = req;
  sub.se_type = SeType::None;
  const Params p_hat = res.p;
  const auto refit = [&](std::size_t r) {
    const ObservedData fake = simulate_like(data, model, p_hat, req.seed, r);
    return free_part(estimate(fake, model, sub).p, res.estimated);
  };
  attach_report(res, simulated_cov(refit, req.num_samples));
}

}  // namespace

EstimationResult estimate(const ObservedData& data, const Model& model,
                          const EstimateRequest& req) {
  data.validate();
  prepare(model, req);
  if (data.scheme == Scheme::Continuous && req.framework != Framework::Dnm) {
    throw InvalidArgument("framework " + to_string(req.framework) +
                          " requires discretely observed data");
  }
  if (req.framework == Framework::Lse && req.se_type == SeType::Asymptotic) {
    throw InvalidArgument(
        "asymptotic standard errors need a likelihood; use se type simulated or none with lse");
  }
  const auto start = std::chrono::steady_clock::now();
  EstimationResult res;
  switch (req.framework) {
    case Framework::Dnm: res = dnm_estimate(data, model, req); break;
    case Framework::Em: res = em_estimate(data, model, req); break;
    case Framework::Lse: res = lse_estimate(data, model, req); break;
    case Framework::Abc: res = abc_estimate(data, model, req); break;
  }
  res.compute_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  res.framework = to_string(req.framework);
  res.scheme = to_string(data.scheme);
  res.p0 = req.p0;
  res.estimated = req.known.free_indices(model.param_count());
  const double z_upper = 10.0 * std::max<double>(static_cast<double>(data.max_count()), 100.0);
  res.capacity = carrying_capacity(model, res.p, z_upper);
  attach_uncertainty(res, data, model, req);
  return res;
}

ObservedData simulate_like(const ObservedData& data, const Model& model, ParamView p,
                           std::uint64_t seed, std::uint64_t replicate) {
  ObservedData out;
  out.scheme = data.scheme;
  const std::size_t paths = data.t_data.size();
  out.t_data.resize(paths);
  out.p_data.resize(paths);
  for (std::size_t k = 0; k < paths; ++k) {
    const auto& t = data.t_data[k];
    const long z0 = data.p_data[k].front();
    const std::uint64_t stream = replicate * paths + k;
    if (data.scheme == Scheme::Discrete) {
      RngStream rng(seed, stream);
      out.t_data[k] = t;
      out.p_data[k].assign(t.size(), 0);
      simulate_path_into(model, p, z0, t, SimMethod::Exact, 0.1, rng, out.p_data[k]);
      continue;
    }
    const double horizon = t.back() - t.front();
    const ContinuousPath path =
        simulate_continuous(model, p, z0, horizon, 1, false, splitmix64(seed) + stream).front();
    for (std::size_t i = 0; i < path.jump_times.size(); ++i) {
      out.t_data[k].push_back(t.front() + path.jump_times[i]);
      out.p_data[k].push_back(path.states[i]);
    }
    if (out.t_data[k].back() < t.back()) {
      out.t_data[k].push_back(t.back());
      out.p_data[k].push_back(out.p_data[k].back());
    }
  }
  return out;
}

}  // namespace bdp
