#include "bdp/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "bdp/errors.hpp"
#include "bdp/parallel.hpp"

namespace bdp {

SimMethod parse_sim_method(std::string_view label) {
  if (label == "exact") return SimMethod::Exact;
  if (label == "ea") return SimMethod::Euler;
  if (label == "ma") return SimMethod::Midpoint;
  if (label == "gwa") return SimMethod::GaltonWatson;
  throw InvalidArgument("unknown simulation method '" + std::string(label) +
                        "'; valid methods: exact ea ma gwa");
}

std::string to_string(SimMethod m) {
  switch (m) {
    case SimMethod::Exact: return "exact";
    case SimMethod::Euler: return "ea";
    case SimMethod::Midpoint: return "ma";
    case SimMethod::GaltonWatson: return "gwa";
  }
  return "exact";
}

GaltonWatsonBetas gw_betas(double lambda, double mu, double t) {
  if (lambda == mu) {
    const double b = lambda * t / (1.0 + lambda * t);
    return {b, b};
  }
  const double d = (lambda - mu) * t;
  const double em1 = std::expm1(d);
  // lambda * e^d - mu, written to stay accurate when lambda is close to mu
  const double denom = lambda * em1 + (lambda - mu);
  double beta1 = mu * em1 / denom;
  double beta2 = lambda * em1 / denom;
  if (!std::isfinite(beta1) || !std::isfinite(beta2)) {
    // e^d overflowed: the family survives with probability 1 - mu/lambda
    // and its size is geometric with parameter ~ 1.
    beta1 = mu / lambda;
    beta2 = 1.0;
  }
  beta1 = std::clamp(beta1, 0.0, 1.0);
  beta2 = std::clamp(beta2, 0.0, 1.0);
  return {beta1, beta2};
}

long gw_step(long z, double lambda, double mu, double tau, RngStream& rng) {
  if (z <= 0) return 0;
  const auto [beta1, beta2] = gw_betas(lambda, mu, tau);
  const long survivors = rng.binomial(z, 1.0 - beta1);
  if (survivors == 0) return 0;
  // each surviving family has geometric size on {1, 2, ...} with parameter beta2
  return survivors + rng.negative_binomial(survivors, 1.0 - beta2);
}

namespace {

long euler_step(const Model& model, ParamView p, long z, double h, RngStream& rng) {
  const double zz = static_cast<double>(z);
  const long births = rng.poisson(model.birth(zz, p) * h);
  const long deaths = rng.poisson(model.death(zz, p) * h);
  return std::max(0L, z + births - deaths);
}

long midpoint_step(const Model& model, ParamView p, long z, double h, RngStream& rng) {
  const double zz = static_cast<double>(z);
  const double rho = 0.5 * h * (model.birth(zz, p) - model.death(zz, p));
  const double mid = std::max(0.0, zz + rho);
  const long births = rng.poisson(model.birth(mid, p) * h);
  const long deaths = rng.poisson(model.death(mid, p) * h);
  return std::max(0L, z + births - deaths);
}

long galton_watson_step(const Model& model, ParamView p, long z, double h, RngStream& rng) {
  if (z == 0) {
    if (model.birth(0.0, p) > 0.0) return euler_step(model, p, z, h, rng);
    return 0;
  }
  const double zz = static_cast<double>(z);
  return gw_step(z, model.birth(zz, p) / zz, model.death(zz, p) / zz, h, rng);
}

long leap(const Model& model, ParamView p, long z, double h, SimMethod method,
          RngStream& rng) {
  switch (method) {
    case SimMethod::Euler: return euler_step(model, p, z, h, rng);
    case SimMethod::Midpoint: return midpoint_step(model, p, z, h, rng);
    case SimMethod::GaltonWatson: return galton_watson_step(model, p, z, h, rng);
    case SimMethod::Exact: break;
  }
  return z;
}

// Embedded jump: up with probability lambda / (lambda + mu).
long jump(const Model& model, ParamView p, long z, RngStream& rng) {
  const double zz = static_cast<double>(z);
  const double b = model.birth(zz, p);
  const double d = model.death(zz, p);
  return rng.uniform() * (b + d) < b ? z + 1 : z - 1;
}

double total_rate(const Model& model, ParamView p, long z) {
  const double zz = static_cast<double>(z);
  return model.birth(zz, p) + model.death(zz, p);
}

// Fixed-step leaping from `from` to `to`; the last subinterval shrinks to land on `to`.
long leap_until(const Model& model, ParamView p, long z, double from, double to, double tau,
                SimMethod method, RngStream& rng) {
  double now = from;
  const double slack = 1e-9 * std::max(1.0, std::abs(to));
  while (to - now > slack) {
    const double h = (to - now <= tau + slack) ? to - now : tau;
    z = leap(model, p, z, h, method, rng);
    now += h;
  }
  return z;
}

void check_times(std::span<const double> times) {
  if (times.empty()) throw InvalidArgument("simulation needs at least one observation time");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) {
      throw InvalidArgument("observation times must be strictly increasing");
    }
  }
}

long draw_initial(const InitialState& z0, RngStream& rng) {
  long z = std::holds_alternative<long>(z0) ? std::get<long>(z0)
                                            : std::get<std::function<long(RngStream&)>>(z0)(rng);
  if (z < 0) throw InvalidArgument("initial population must be non-negative");
  return z;
}

}  // namespace

void simulate_path_into(const Model& model, ParamView p, long z, std::span<const double> times,
                        SimMethod method, double tau, RngStream& rng, std::span<long> out) {
  out[0] = z;
  if (method == SimMethod::Exact) {
    double s = times[0] + rng.exponential(total_rate(model, p, z));
    for (std::size_t j = 1; j < times.size(); ++j) {
      while (s <= times[j]) {
        z = jump(model, p, z, rng);
        s += rng.exponential(total_rate(model, p, z));
      }
      out[j] = z;
    }
    return;
  }
  for (std::size_t j = 1; j < times.size(); ++j) {
    z = leap_until(model, p, z, times[j - 1], times[j], tau, method, rng);
    out[j] = z;
  }
}

long simulate_transition(const Model& model, ParamView p, long z, double dt, SimMethod method,
                         double tau, RngStream& rng) {
  const double times[2] = {0.0, dt};
  long out[2];
  simulate_path_into(model, p, z, times, method, tau, rng, out);
  return out[1];
}

std::vector<ContinuousPath> simulate_continuous(const Model& model, ParamView p,
                                                const InitialState& z0, double t_max,
                                                std::size_t k, bool survival,
                                                std::uint64_t seed, std::size_t max_attempts) {
  model.check_params(p);
  if (!(t_max > 0.0)) throw InvalidArgument("t_max must be positive");
  if (k == 0) throw InvalidArgument("k must be at least 1");
  std::vector<ContinuousPath> paths(k);
  parallel_for(k, [&](std::size_t idx) {
    RngStream rng(seed, idx);
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt >= max_attempts) {
        throw ComputationError("survival conditioning failed after " +
                               std::to_string(max_attempts) + " attempts for path " +
                               std::to_string(idx));
      }
      ContinuousPath path;
      long z = draw_initial(z0, rng);
      double t = 0.0;
      path.jump_times.push_back(t);
      path.states.push_back(z);
      for (;;) {
        const double dt = rng.exponential(total_rate(model, p, z));
        if (!(t + dt <= t_max)) break;
        t += dt;
        z = jump(model, p, z, rng);
        path.jump_times.push_back(t);
        path.states.push_back(z);
      }
      if (!survival || z > 0) {
        paths[idx] = std::move(path);
        return;
      }
    }
  });
  return paths;
}

std::vector<DiscretePath> simulate_discrete(const Model& model, ParamView p,
                                            const InitialState& z0,
                                            std::span<const double> times,
                                            const SimulationOptions& opts) {
  model.check_params(p);
  check_times(times);
  if (opts.k == 0) throw InvalidArgument("k must be at least 1");
  if (opts.method != SimMethod::Exact && !(opts.tau > 0.0)) {
    throw InvalidArgument("tau must be positive for approximate simulation methods");
  }
  std::vector<DiscretePath> paths(opts.k);
  parallel_for(opts.k, [&](std::size_t idx) {
    RngStream rng(opts.seed, idx);
    DiscretePath path;
    path.obs_times.assign(times.begin(), times.end());
    path.states.resize(times.size());
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt >= opts.max_attempts) {
        throw ComputationError("survival conditioning failed after " +
                               std::to_string(opts.max_attempts) + " attempts for path " +
                               std::to_string(idx));
      }
      const long start = draw_initial(z0, rng);
      simulate_path_into(model, p, start, times, opts.method, opts.tau, rng, path.states);
      if (!opts.survival || path.states.back() > 0) break;
    }
    paths[idx] = std::move(path);
  });
  return paths;
}

}  // namespace bdp
