#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bdp/data.hpp"
#include "bdp/models.hpp"
#include "bdp/optimize.hpp"
#include "bdp/probability.hpp"
#include "bdp/simulate.hpp"

namespace bdp {

enum class Framework { Dnm, Em, Lse, Abc };
enum class EmTechnique { Expm, Ilt, Num };
enum class EmAccelerator { None, Cg, Qn1, Qn2, Lange };
enum class SquaresMethod { Expm, Fm, Gwa };
enum class SeType { Asymptotic, Simulated, None };

Framework parse_framework(std::string_view label);
EmTechnique parse_em_technique(std::string_view label);
EmAccelerator parse_em_accelerator(std::string_view label);
SquaresMethod parse_squares(std::string_view label);
SeType parse_se_type(std::string_view label);
std::string to_string(Framework f);
std::string to_string(EmTechnique t);
std::string to_string(EmAccelerator a);
std::string to_string(SquaresMethod s);
std::string to_string(SeType s);

/// Distance between observed and simulated counts at the observation points
/// (one entry per transition, in data order).
using AbcDistance =
    std::function<double(std::span<const long> observed, std::span<const long> simulated)>;

/// Square root of the summed squared differences.
double abc_distance(std::span<const long> observed, std::span<const long> simulated);

struct AbcOptions {
  /// Per-iteration thresholds; empty selects the adaptive schedule.
  std::vector<double> eps_abc;
  std::size_t k = 100;
  std::size_t max_its = 3;
  double max_q = 0.99;
  /// Stop when the threshold improves by less than this many percent.
  double eps_change = 5.0;
  std::size_t gam = 5;
  SimMethod sim_method = SimMethod::GaltonWatson;
  /// Leap size for approximate simulation; defaults to a tenth of the
  /// smallest observation gap.
  std::optional<double> tau;
  AbcDistance distance;
  bool median = false;
  std::size_t max_proposals = 1000000;
};

struct EstimateRequest {
  Framework framework = Framework::Dnm;
  /// Start point and bounds for the parameters being estimated (free ones only).
  std::vector<double> p0;
  Bounds bounds;
  /// Constraints evaluated on the full canonical parameter vector.
  std::vector<Constraint> constraints;
  KnownParams known;

  // dnm, and the likelihood used by em for standard errors and safeguards
  ProbMethod likelihood = ProbMethod::Expm;
  ProbOptions prob;
  /// "sim" likelihoods are only accepted with an explicit seed.
  bool explicit_seed = false;

  // em
  EmTechnique technique = EmTechnique::Expm;
  EmAccelerator accelerator = EmAccelerator::None;
  double i_tol = 1e-3;
  double j_tol = 1e-2;
  double h_tol = 1e-2;
  std::size_t max_it = 100;

  // lse
  SquaresMethod squares = SquaresMethod::Fm;

  AbcOptions abc;

  MinimizeOptions opt;

  SeType se_type = SeType::Asymptotic;
  std::size_t num_samples = 100;
  double se_step = 1e-4;
  std::uint64_t seed = 2021;
};

struct EstimationResult {
  /// Full parameter vector (known values merged back in).
  Params p;
  std::optional<long> capacity;
  double val = 0.0;
  /// Covariance of the estimated (free) parameters, in canonical order.
  std::optional<Matrix> cov;
  /// Standard errors of the free parameters; NaN where unavailable.
  std::vector<double> se;
  std::vector<std::size_t> estimated;
  std::string cov_source;
  double compute_time = 0.0;
  std::string framework;
  std::string scheme;
  std::string method;
  std::vector<double> p0;
  std::string message;
  bool success = false;
  std::vector<Params> iterations;
  std::vector<Params> samples;
  std::vector<std::string> warnings;
};

/// Truncation window covering every observed count with the default slack.
TruncationWindow data_window(const ObservedData& data, const Model& model, ParamView p,
                             const std::optional<TruncationWindow>& given = std::nullopt);

/// Continuously observed log-likelihood from the U, D, H statistics.
double loglik_continuous(const ObservedData& data, const Model& model, ParamView p);

/// Discretely observed log-likelihood sum of log p_{z_prev, z_next}(dt), with
/// each probability floored at 1e-300.
double loglik_discrete(const ObservedData& data, const Model& model, ParamView p,
                       ProbMethod method, const ProbOptions& opts = {});

/// Options for the EM expected statistics.
struct EmStatsOptions {
  std::optional<TruncationWindow> window;
  double j_tol = 0.0;
  double h_tol = 0.0;
  InversionMethod laplace_method = InversionMethod::TalbotEulerFallback;
};

/// Conditional expected up-jumps, down-jumps and holding times given
/// Z(0) = z_prev and Z(dt) = z_next.
SufficientStats em_expected_stats(const Model& model, ParamView p, long z_prev, long z_next,
                                  double dt, EmTechnique technique,
                                  const EmStatsOptions& opts = {});

/// The same statistics summed over every transition in the data.
SufficientStats em_data_stats(const Model& model, ParamView p, const ObservedData& data,
                              EmTechnique technique, const EmStatsOptions& opts = {});

/// Sum of squared differences between observed counts and their conditional means.
double lse_objective(const ObservedData& data, const Model& model, ParamView p,
                     SquaresMethod squares,
                     const std::optional<TruncationWindow>& window = std::nullopt);

EstimationResult mle_continuous(const ObservedData& data, const Model& model,
                                const EstimateRequest& req);
EstimationResult dnm_estimate(const ObservedData& data, const Model& model,
                              const EstimateRequest& req);
EstimationResult em_estimate(const ObservedData& data, const Model& model,
                             const EstimateRequest& req);
EstimationResult lse_estimate(const ObservedData& data, const Model& model,
                              const EstimateRequest& req);
EstimationResult abc_estimate(const ObservedData& data, const Model& model,
                              const EstimateRequest& req);

/// Routes to the framework, attaches the carrying capacity and the covariance
/// selected by se_type, and records the wall-clock time.
EstimationResult estimate(const ObservedData& data, const Model& model,
                          const EstimateRequest& req);

/// A dataset shaped like `data` (same initial counts and time grids) simulated
/// at p with the exact algorithm.
ObservedData simulate_like(const ObservedData& data, const Model& model, ParamView p,
                           std::uint64_t seed, std::uint64_t replicate);

}  // namespace bdp
