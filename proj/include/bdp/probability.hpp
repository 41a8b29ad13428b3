#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bdp/laplace.hpp"
#include "bdp/linalg.hpp"
#include "bdp/models.hpp"

namespace bdp {

enum class ProbMethod { Expm, Uniform, Erlang, Ilt, Da, Oua, Gwa, Gwasa, Sim };

ProbMethod parse_prob_method(std::string_view label);
std::string to_string(ProbMethod m);

/// Population size used to linearize the rates in gwa and gwasa.
enum class GwaAnchor { I, J, Max, Min, Midpoint };

GwaAnchor parse_gwa_anchor(std::string_view label);

struct ProbOptions {
  /// Truncation window for expm, uniform and Erlang; default is 100 states of
  /// slack around the queried states.
  std::optional<TruncationWindow> z_trunc;
  /// Accuracy knob: uniformization terms (default adaptive), Erlang shape
  /// (150), da RK4 steps (1000) or sim sample count (1000).
  std::optional<std::size_t> k;
  double lentz_eps = 1e-6;
  InversionMethod laplace_method = InversionMethod::TalbotEulerFallback;
  GwaAnchor anchor = GwaAnchor::I;
  /// Renormalize da/oua densities over the non-negative integers.
  bool normalized = false;
  std::uint64_t seed = 2021;
};

/// p_{i,j}(t) indexed (time, z0, zt).
struct ProbTensor {
  std::vector<double> t;
  std::vector<long> z0;
  std::vector<long> zt;
  std::vector<double> values;

  double operator()(std::size_t ti, std::size_t a, std::size_t b) const {
    return values[(ti * z0.size() + a) * zt.size() + b];
  }
  double& at(std::size_t ti, std::size_t a, std::size_t b) {
    return values[(ti * z0.size() + a) * zt.size() + b];
  }
};

/// Transition probabilities for every combination of z0, zt and t (t increasing).
ProbTensor probability(const Model& model, ParamView p, std::span<const long> z0,
                       std::span<const long> zt, std::span<const double> t,
                       ProbMethod method, const ProbOptions& opts = {});

/// Single-entry conveniences.
double prob_expm(const Model& model, ParamView p, long i, long j, double t,
                 std::optional<TruncationWindow> window = std::nullopt);
double prob_uniform(const Model& model, ParamView p, long i, long j, double t,
                    std::optional<TruncationWindow> window = std::nullopt,
                    std::optional<std::size_t> k = std::nullopt);
double prob_erlang(const Model& model, ParamView p, long i, long j, double t,
                   std::optional<TruncationWindow> window = std::nullopt, std::size_t k = 150);
double prob_ilt(const Model& model, ParamView p, long i, long j, double t,
                double lentz_eps = 1e-6,
                InversionMethod method = InversionMethod::TalbotEulerFallback);
double prob_da(const Model& model, ParamView p, long i, long j, double t);
double prob_oua(const Model& model, ParamView p, long i, long j, double t);
double prob_gwa(const Model& model, ParamView p, long i, long j, double t,
                GwaAnchor anchor = GwaAnchor::I);
double prob_gwasa(const Model& model, ParamView p, long i, long j, double t,
                  GwaAnchor anchor = GwaAnchor::I);
double prob_sim(const Model& model, ParamView p, long i, long j, double t, std::size_t k,
                std::uint64_t seed);

/// Linear birth-death law with per-individual rates (lambda, mu):
/// P(Z(t) = j | Z(0) = i), evaluated in log space.
double linear_bd_pmf(long i, long j, double lambda, double mu, double t);

/// Lattice saddlepoint approximation of linear_bd_pmf for j >= 1.
/// Returns nothing when the saddlepoint equation cannot be solved.
std::optional<double> linear_bd_saddlepoint(long i, long j, double lambda, double mu,
                                            double t);

/// Mean and variance of the diffusion approximation started at z0, at each of
/// the increasing times (measured from 0), by RK4 with `steps` steps over [0, max t].
struct DiffusionMoments {
  std::vector<double> mean;
  std::vector<double> variance;
};
DiffusionMoments diffusion_moments(const Model& model, ParamView p, double z0,
                                   std::span<const double> times, std::size_t steps = 1000);

/// Stable equilibrium used by oua: the rate-balance root with negative slope
/// H(z) = d/dz (lambda_z - mu_z) that minimizes H.
std::optional<double> stable_equilibrium(const Model& model, ParamView p);

}  // namespace bdp
