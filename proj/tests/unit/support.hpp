#pragma once

#include <cmath>
#include <numeric>
#include <vector>

#include "bdp/data.hpp"
#include "bdp/models.hpp"
#include "bdp/simulate.hpp"

namespace bdp::testing {

inline double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

/// Exact linear birth-death pmf from the generating function, by convolution of
/// i independent single-ancestor laws (an oracle independent of the library's
/// closed-form evaluation).
inline std::vector<double> linear_pmf_convolution(long i, double lambda, double mu, double t,
                                                  long j_max) {
  const double e = std::exp((lambda - mu) * t);
  double a, b;  // P(0) = a, P(h) = (1 - a)(1 - b) b^(h-1)
  if (std::abs(lambda - mu) < 1e-14) {
    a = lambda * t / (1.0 + lambda * t);
    b = a;
  } else {
    a = mu * (e - 1.0) / (lambda * e - mu);
    b = lambda * (e - 1.0) / (lambda * e - mu);
  }
  std::vector<double> one(static_cast<std::size_t>(j_max + 1), 0.0);
  one[0] = a;
  for (long h = 1; h <= j_max; ++h) {
    one[static_cast<std::size_t>(h)] = (1.0 - a) * (1.0 - b) * std::pow(b, static_cast<double>(h - 1));
  }
  std::vector<double> out(one.size(), 0.0);
  out[0] = 1.0;
  for (long k = 0; k < i; ++k) {
    std::vector<double> next(one.size(), 0.0);
    for (std::size_t x = 0; x < out.size(); ++x) {
      for (std::size_t y = 0; x + y < out.size(); ++y) next[x + y] += out[x] * one[y];
    }
    out.swap(next);
  }
  return out;
}

/// Verhulst synthetic dataset: paths x observations at unit spacing.
inline ObservedData verhulst_data(std::uint64_t seed, std::size_t paths = 5,
                                  std::size_t obs = 100, long z0 = 10) {
  const Model m = builtin_model("Verhulst");
  const Params p{0.8, 0.4, 0.025, 0.0};
  std::vector<double> times(obs);
  for (std::size_t i = 0; i < obs; ++i) times[i] = static_cast<double>(i);
  SimulationOptions o;
  o.k = paths;
  o.seed = seed;
  const auto sims = simulate_discrete(m, p, z0, times, o);
  ObservedData d;
  for (const auto& s : sims) {
    d.t_data.push_back(s.obs_times);
    d.p_data.push_back(s.states);
  }
  return d;
}

}  // namespace bdp::testing
