#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bdp/data.hpp"
#include "bdp/linalg.hpp"
#include "bdp/models.hpp"
#include "bdp/optimize.hpp"

namespace bdp {

struct CovarianceReport {
  /// Absent when the curvature could not be inverted.
  std::optional<Matrix> cov;
  /// sqrt of the diagonal; NaN where the entry is unavailable.
  std::vector<double> se;
  /// "asymptotic", "simulated" or "abc-samples".
  std::string source;
  /// Set when the matrix was projected onto the PSD cone.
  bool repaired = false;
  std::string diagnostic;
};

/// cov = -H^{-1} with H the finite-difference Hessian of loglik at theta.
CovarianceReport asymptotic_cov(const Objective& loglik, std::span<const double> theta,
                                 double rel_step = 1e-4);

/// Covariance of (optionally weighted) samples, one row per sample.
CovarianceReport sample_cov(const std::vector<std::vector<double>>& samples,
                            std::string source, std::span<const double> weights = {});

/// Parametric bootstrap. refit(r) returns the estimate from replicate r, or
/// throws; failed replicates are skipped and more than half failing is an error.
CovarianceReport simulated_cov(const std::function<std::vector<double>(std::size_t)>& refit,
                               std::size_t num_samples);

/// Symmetric matrix with negative eigenvalues clipped to zero.
Matrix nearest_psd(const Matrix& a);

/// Closed curves mean + r L (cos phi, sin phi) with r^2 the chi-square(2)
/// quantile of each level and L L^T = cov; `points` vertices per curve.
using Polyline = std::vector<std::array<double, 2>>;
std::vector<Polyline> confidence_ellipse(const std::array<double, 2>& mean, const Matrix& cov,
                                         std::span<const double> levels,
                                         std::size_t points = 256);

enum class Interval { Confidence, Prediction };
enum class ForecastMethod { Fm, Exact, Ea, Ma, Gwa };

Interval parse_interval(std::string_view label);
std::string to_string(Interval i);
ForecastMethod parse_forecast_method(std::string_view label);
std::string to_string(ForecastMethod m);

const std::vector<double>& default_percentiles();

struct ForecastOptions {
  Interval interval = Interval::Confidence;
  /// Defaults to fm for confidence bands and gwa for prediction bands.
  std::optional<ForecastMethod> method;
  std::vector<double> percentiles = default_percentiles();
  std::size_t k = 1000;
  /// Paths per simulated mean (confidence bands with a simulation method).
  std::size_t n = 1000;
  /// Box for the free parameters; empty means unbounded.
  Bounds bounds;
  /// Evaluated on the full parameter vector.
  std::vector<Constraint> constraints;
  KnownParams known;
  /// Leap size for ea, ma and gwa; defaults to a tenth of the smallest gap.
  std::optional<double> tau;
  std::uint64_t seed = 2021;
  std::size_t max_draws = 1000000;
};

/// values(t, q) is the q-th percentile at times[t].
struct ForecastBands {
  std::vector<double> times;
  std::vector<double> percentiles;
  Matrix values;
};

/// Bands for the population started at z0 at times[0]. theta holds the free
/// parameters and cov their covariance (absent: theta is used as is).
ForecastBands forecast(const Model& model, long z0, std::span<const double> times,
                       std::span<const double> theta, const std::optional<Matrix>& cov,
                       const ForecastOptions& opts = {});

/// Linear-interpolation percentile (q in [0, 100]) of unsorted values.
double percentile(std::vector<double> values, double q);

/// Self-contained SVG chart of the bands.
std::string bands_svg(const ForecastBands& bands, std::string_view ylabel = "Population");

}  // namespace bdp
