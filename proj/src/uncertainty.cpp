#include "bdp/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "bdp/errors.hpp"
#include "bdp/parallel.hpp"
#include "bdp/probability.hpp"
#include "bdp/rng.hpp"
#include "bdp/simulate.hpp"

namespace bdp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> se_from(const Matrix& cov) {
  std::vector<double> se(static_cast<std::size_t>(cov.rows()));
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    se[static_cast<std::size_t>(i)] = cov(i, i) >= 0.0 ? std::sqrt(cov(i, i)) : kNaN;
  }
  return se;
}

}  // namespace

Matrix nearest_psd(const Matrix& a) {
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  const Vector clipped = eig.eigenvalues().cwiseMax(0.0);
  const Matrix out = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

CovarianceReport asymptotic_cov(const Objective& loglik, std::span<const double> theta,
                                double rel_step) {
  CovarianceReport rep;
  rep.source = "asymptotic";
  const auto n = static_cast<std::size_t>(theta.size());
  rep.se.assign(n, kNaN);
  const Matrix h = hessian_fd(loglik, theta, rel_step);
  if (!h.allFinite()) {
    rep.diagnostic = "Hessian of the log-likelihood is not finite";
    return rep;
  }
  const Matrix info = -0.5 * (h + h.transpose());
  Eigen::FullPivLU<Matrix> lu(info);
  if (!lu.isInvertible()) {
    rep.diagnostic = "Hessian of the log-likelihood is singular";
    return rep;
  }
  Matrix cov = lu.inverse();
  cov = 0.5 * (cov + cov.transpose());
  if (!cov.allFinite()) {
    rep.diagnostic = "inverse Hessian is not finite";
    return rep;
  }
  const Vector raw_diag = cov.diagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.eigenvalues().minCoeff() < 0.0) {
    cov = nearest_psd(cov);
    rep.repaired = true;
    rep.diagnostic = "negative Hessian is not positive definite; covariance projected";
  }
  rep.se = se_from(cov);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(raw_diag(static_cast<Eigen::Index>(i)) > 0.0)) rep.se[i] = kNaN;
  }
  rep.cov = std::move(cov);
  return rep;
}

CovarianceReport sample_cov(const std::vector<std::vector<double>>& samples, std::string source,
                            std::span<const double> weights) {
  CovarianceReport rep;
  rep.source = std::move(source);
  if (samples.size() < 2) {
    rep.diagnostic = "at least two samples are needed for a covariance";
    return rep;
  }
  const auto dim = static_cast<Eigen::Index>(samples.front().size());
  const std::size_t m = samples.size();
  std::vector<double> w(m, 1.0 / static_cast<double>(m));
  if (!weights.empty()) {
    if (weights.size() != m) throw InvalidArgument("sample_cov: one weight per sample is required");
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(total > 0.0)) throw InvalidArgument("sample_cov: weights must have a positive sum");
    for (std::size_t i = 0; i < m; ++i) w[i] = weights[i] / total;
  }
  Vector mean = Vector::Zero(dim);
  for (std::size_t i = 0; i < m; ++i) {
    mean += w[i] * Eigen::Map<const Vector>(samples[i].data(), dim);
  }
  Matrix cov = Matrix::Zero(dim, dim);
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const Vector r = Eigen::Map<const Vector>(samples[i].data(), dim) - mean;
    cov += w[i] * r * r.transpose();
    sum_sq += w[i] * w[i];
  }
  if (sum_sq < 1.0) cov /= (1.0 - sum_sq);
  cov = 0.5 * (cov + cov.transpose());
  rep.se = se_from(cov);
  rep.cov = std::move(cov);
  return rep;
}

CovarianceReport simulated_cov(const std::function<std::vector<double>(std::size_t)>& refit,
                               std::size_t num_samples) {
  if (num_samples < 2) throw InvalidArgument("simulated standard errors need num_samples >= 2");
  std::vector<std::optional<std::vector<double>>> fits(num_samples);
  parallel_for(num_samples, [&](std::size_t r) {
    try {
      std::vector<double> x = refit(r);
      if (std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); })) {
        fits[r] = std::move(x);
      }
    } catch (const Error&) {
      // a failed replicate is skipped
    }
  });
  std::vector<std::vector<double>> ok;
  for (auto& f : fits) {
    if (f) ok.push_back(std::move(*f));
  }
  const std::size_t failed = num_samples - ok.size();
  if (2 * failed > num_samples) {
    throw ComputationError("simulated standard errors: " + std::to_string(failed) + " of " +
                           std::to_string(num_samples) + " bootstrap refits failed");
  }
  CovarianceReport rep = sample_cov(ok, "simulated");
  if (failed > 0) {
    rep.diagnostic = std::to_string(failed) + " of " + std::to_string(num_samples) +
                     " bootstrap refits failed and were skipped";
  }
  return rep;
}

std::vector<Polyline> confidence_ellipse(const std::array<double, 2>& mean, const Matrix& cov,
                                         std::span<const double> levels, std::size_t points) {
  if (cov.rows() != 2 || cov.cols() != 2) {
    throw InvalidArgument("confidence ellipses need a 2 x 2 covariance");
  }
  if (points < 3) throw InvalidArgument("an ellipse needs at least 3 points");
  Matrix l;
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() == Eigen::Success) {
    l = llt.matrixL();
  } else {
    // semidefinite: any square root traces the same curve
    l = Eigen::SelfAdjointEigenSolver<Matrix>(nearest_psd(cov)).operatorSqrt();
  }
  std::vector<Polyline> out;
  for (double level : levels) {
    if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("ellipse levels must lie in (0, 1)");
    // chi-square(2) quantile has the closed form -2 log(1 - p)
    const double r = std::sqrt(-2.0 * std::log1p(-level));
    Polyline line(points);
    for (std::size_t k = 0; k < points; ++k) {
      const double phi = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(points);
      const Eigen::Vector2d u(r * std::cos(phi), r * std::sin(phi));
      const Eigen::Vector2d v = l * u;
      line[k] = {mean[0] + v(0), mean[1] + v(1)};
    }
    out.push_back(std::move(line));
  }
  return out;
}

Interval parse_interval(std::string_view label) {
  if (label == "confidence") return Interval::Confidence;
  if (label == "prediction") return Interval::Prediction;
  throw InvalidArgument("unknown interval '" + std::string(label) +
                        "' (expected confidence or prediction)");
}

std::string to_string(Interval i) {
  return i == Interval::Confidence ? "confidence" : "prediction";
}

ForecastMethod parse_forecast_method(std::string_view label) {
  if (label == "fm") return ForecastMethod::Fm;
  if (label == "exact") return ForecastMethod::Exact;
  if (label == "ea") return ForecastMethod::Ea;
  if (label == "ma") return ForecastMethod::Ma;
  if (label == "gwa") return ForecastMethod::Gwa;
  throw InvalidArgument("unknown forecast method '" + std::string(label) +
                        "' (expected fm, exact, ea, ma or gwa)");
}

std::string to_string(ForecastMethod m) {
  switch (m) {
    case ForecastMethod::Fm: return "fm";
    case ForecastMethod::Exact: return "exact";
    case ForecastMethod::Ea: return "ea";
    case ForecastMethod::Ma: return "ma";
    case ForecastMethod::Gwa: return "gwa";
  }
  return "?";
}

const std::vector<double>& default_percentiles() {
  static const std::vector<double> p = {0, 2.5, 10, 25, 50, 75, 90, 97.5, 100};
  return p;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 100.0)) throw InvalidArgument("percentiles must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

SimMethod sim_method_for(ForecastMethod m) {
  switch (m) {
    case ForecastMethod::Exact: return SimMethod::Exact;
    case ForecastMethod::Ea: return SimMethod::Euler;
    case ForecastMethod::Ma: return SimMethod::Midpoint;
    case ForecastMethod::Gwa: return SimMethod::GaltonWatson;
    case ForecastMethod::Fm: break;
  }
  throw InvalidArgument("fm is not a simulation method");
}

}  // namespace

ForecastBands forecast(const Model& model, long z0, std::span<const double> times,
                       std::span<const double> theta, const std::optional<Matrix>& cov,
                       const ForecastOptions& opts) {
  if (times.size() < 2) throw InvalidArgument("forecast needs at least two times");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw InvalidArgument("forecast times must be increasing");
  }
  if (z0 < 0) throw InvalidArgument("z0 must be non-negative");
  if (opts.k == 0) throw InvalidArgument("forecast needs k >= 1");
  for (double q : opts.percentiles) {
    if (!(q >= 0.0 && q <= 100.0)) throw InvalidArgument("percentiles must lie in [0, 100]");
  }
  const std::size_t n_param = model.param_count();
  opts.known.validate(n_param);
  const std::size_t dim = theta.size();
  if (dim + opts.known.indices.size() != n_param) {
    throw InvalidArgument("forecast: expected " +
                          std::to_string(n_param - opts.known.indices.size()) +
                          " free parameter values, got " + std::to_string(dim));
  }
  if (!opts.bounds.box.empty() && opts.bounds.size() != dim) {
    throw InvalidArgument("forecast: bounds must have one entry per free parameter");
  }
  const ForecastMethod method = opts.method.value_or(
      opts.interval == Interval::Confidence ? ForecastMethod::Fm : ForecastMethod::Gwa);
  if (opts.interval == Interval::Prediction && method == ForecastMethod::Fm) {
    throw InvalidArgument("prediction bands need a simulation method (exact, ea, ma or gwa)");
  }

  // parameter samples from the normal truncated to bounds and constraints
  std::vector<Params> samples;
  samples.reserve(opts.k);
  if (!cov) {
    samples.assign(opts.k, opts.known.expand(theta, n_param));
  } else {
    if (cov->rows() != static_cast<Eigen::Index>(dim) || cov->cols() != static_cast<Eigen::Index>(dim)) {
      throw InvalidArgument("forecast: covariance must be " + std::to_string(dim) + " x " +
                            std::to_string(dim));
    }
    Matrix l;
    Eigen::LLT<Matrix> llt(*cov);
    if (llt.info() == Eigen::Success) {
      l = llt.matrixL();
    } else {
      l = Eigen::SelfAdjointEigenSolver<Matrix>(nearest_psd(*cov)).operatorSqrt();
    }
    RngStream rng(opts.seed, 0);
    std::size_t draws = 0;
    std::vector<double> x(dim);
    while (samples.size() < opts.k) {
      if (++draws > opts.max_draws) {
        throw ComputationError("forecast: only " + std::to_string(samples.size()) + " of " +
                               std::to_string(opts.k) + " parameter draws satisfied the bounds "
                               "and constraints after " + std::to_string(opts.max_draws) +
                               " attempts");
      }
      Vector z(static_cast<Eigen::Index>(dim));
      for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
      const Vector step = l * z;
      for (std::size_t i = 0; i < dim; ++i) x[i] = theta[i] + step(static_cast<Eigen::Index>(i));
      if (!opts.bounds.box.empty() && !opts.bounds.contains(x)) continue;
      Params full = opts.known.expand(x, n_param);
      if (!opts.constraints.empty() && constraint_violation(opts.constraints, full) > 1e-12) continue;
      samples.push_back(std::move(full));
    }
  }

  const double t0 = times.front();
  std::vector<double> rel(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) rel[i] = times[i] - t0;
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < rel.size(); ++i) min_gap = std::min(min_gap, rel[i] - rel[i - 1]);
  const double tau = opts.tau.value_or(min_gap / 10.0);

  // trajectories[s][t]
  std::vector<std::vector<double>> traj(samples.size(), std::vector<double>(times.size()));
  parallel_for(samples.size(), [&](std::size_t s) {
    const Params& p = samples[s];
    if (method == ForecastMethod::Fm) {
      traj[s] = diffusion_moments(model, p, static_cast<double>(z0), rel).mean;
      return;
    }
    const SimMethod sm = sim_method_for(method);
    std::vector<long> path(times.size());
    if (opts.interval == Interval::Prediction) {
      RngStream rng(opts.seed, 1 + s);
      simulate_path_into(model, p, z0, rel, sm, tau, rng, path);
      for (std::size_t t = 0; t < path.size(); ++t) traj[s][t] = static_cast<double>(path[t]);
      return;
    }
    if (opts.n == 0) throw InvalidArgument("forecast needs n >= 1");
    std::vector<double> acc(times.size(), 0.0);
    for (std::size_t r = 0; r < opts.n; ++r) {
      RngStream rng(opts.seed, 1 + s * opts.n + r);
      simulate_path_into(model, p, z0, rel, sm, tau, rng, path);
      for (std::size_t t = 0; t < path.size(); ++t) acc[t] += static_cast<double>(path[t]);
    }
    for (std::size_t t = 0; t < acc.size(); ++t) traj[s][t] = acc[t] / static_cast<double>(opts.n);
  });

  ForecastBands bands;
  bands.times.assign(times.begin(), times.end());
  bands.percentiles = opts.percentiles;
  bands.values.resize(static_cast<Eigen::Index>(times.size()),
                      static_cast<Eigen::Index>(opts.percentiles.size()));
  std::vector<double> column(samples.size());
  for (std::size_t t = 0; t < times.size(); ++t) {
    for (std::size_t s = 0; s < samples.size(); ++s) column[s] = traj[s][t];
    for (std::size_t q = 0; q < opts.percentiles.size(); ++q) {
      bands.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(q)) =
          percentile(column, opts.percentiles[q]);
    }
  }
  return bands;
}

std::string bands_svg(const ForecastBands& bands, std::string_view ylabel) {
  constexpr double width = 640, height = 400, left = 60, right = 20, top = 20, bottom = 50;
  const auto nt = static_cast<std::size_t>(bands.values.rows());
  const auto nq = static_cast<std::size_t>(bands.values.cols());
  if (nt < 2 || nq == 0) throw InvalidArgument("bands_svg: nothing to draw");
  const double t_lo = bands.times.front(), t_hi = bands.times.back();
  double y_lo = bands.values.minCoeff(), y_hi = bands.values.maxCoeff();
  if (y_hi <= y_lo) {
    y_lo -= 1.0;
    y_hi += 1.0;
  }
  const auto px = [&](double t) { return left + (t - t_lo) / (t_hi - t_lo) * (width - left - right); };
  const auto py = [&](double y) { return height - bottom - (y - y_lo) / (y_hi - y_lo) * (height - top - bottom); };
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // shade between symmetric percentile pairs, outermost first
  for (std::size_t q = 0; q < nq / 2; ++q) {
    const std::size_t hi = nq - 1 - q;
    const double shade = 0.15 + 0.6 * static_cast<double>(q + 1) / static_cast<double>(nq / 2 + 1);
    os << "<polygon fill=\"rgb(" << static_cast<int>(255 - 140 * shade) << ','
       << static_cast<int>(255 - 150 * shade) << ',' << static_cast<int>(255 - 60 * shade)
       << ")\" stroke=\"none\" points=\"";
    for (std::size_t t = 0; t < nt; ++t) {
      os << px(bands.times[t]) << ',' << py(bands.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(hi))) << ' ';
    }
    for (std::size_t t = nt; t-- > 0;) {
      os << px(bands.times[t]) << ',' << py(bands.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(q))) << ' ';
    }
    os << "\"/>\n";
  }
  if (nq % 2 == 1) {
    os << "<polyline fill=\"none\" stroke=\"rgb(60,40,120)\" stroke-width=\"1.5\" points=\"";
    for (std::size_t t = 0; t < nt; ++t) {
      os << px(bands.times[t]) << ',' << py(bands.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(nq / 2))) << ' ';
    }
    os << "\"/>\n";
  }
  os << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\"" << width - right
     << "\" y2=\"" << height - bottom << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
     << height - bottom << "\" stroke=\"black\"/>\n";
  os << std::setprecision(6) << std::defaultfloat;
  os << "<text x=\"" << left << "\" y=\"" << height - bottom + 18 << "\" font-size=\"12\">" << t_lo
     << "</text>\n";
  os << "<text x=\"" << width - right << "\" y=\"" << height - bottom + 18
     << "\" font-size=\"12\" text-anchor=\"end\">" << t_hi << "</text>\n";
  os << "<text x=\"" << left - 6 << "\" y=\"" << height - bottom << "\" font-size=\"12\" "
     << "text-anchor=\"end\">" << y_lo << "</text>\n";
  os << "<text x=\"" << left - 6 << "\" y=\"" << top + 10 << "\" font-size=\"12\" "
     << "text-anchor=\"end\">" << y_hi << "</text>\n";
  os << "<text x=\"" << (left + width - right) / 2 << "\" y=\"" << height - 10
     << "\" font-size=\"13\" text-anchor=\"middle\">Time</text>\n";
  os << "<text x=\"15\" y=\"" << (top + height - bottom) / 2 << "\" font-size=\"13\" "
     << "text-anchor=\"middle\" transform=\"rotate(-90 15 " << (top + height - bottom) / 2
     << ")\">" << ylabel << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace bdp
