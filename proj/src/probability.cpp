#include "bdp/probability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "bdp/errors.hpp"
#include "bdp/parallel.hpp"
#include "bdp/rng.hpp"
#include "bdp/simulate.hpp"

namespace bdp {

ProbMethod parse_prob_method(std::string_view label) {
  static const std::pair<std::string_view, ProbMethod> table[] = {
      {"expm", ProbMethod::Expm}, {"uniform", ProbMethod::Uniform},
      {"Erlang", ProbMethod::Erlang}, {"ilt", ProbMethod::Ilt},
      {"da", ProbMethod::Da}, {"oua", ProbMethod::Oua},
      {"gwa", ProbMethod::Gwa}, {"gwasa", ProbMethod::Gwasa},
      {"sim", ProbMethod::Sim}};
  for (const auto& [name, m] : table) {
    if (label == name) return m;
  }
  throw InvalidArgument("unknown probability method '" + std::string(label) +
                        "' (expected expm, uniform, Erlang, ilt, da, oua, gwa, gwasa or sim)");
}

std::string to_string(ProbMethod m) {
  switch (m) {
    case ProbMethod::Expm: return "expm";
    case ProbMethod::Uniform: return "uniform";
    case ProbMethod::Erlang: return "Erlang";
    case ProbMethod::Ilt: return "ilt";
    case ProbMethod::Da: return "da";
    case ProbMethod::Oua: return "oua";
    case ProbMethod::Gwa: return "gwa";
    case ProbMethod::Gwasa: return "gwasa";
    case ProbMethod::Sim: return "sim";
  }
  return "?";
}

GwaAnchor parse_gwa_anchor(std::string_view label) {
  if (label == "i") return GwaAnchor::I;
  if (label == "j") return GwaAnchor::J;
  if (label == "max") return GwaAnchor::Max;
  if (label == "min") return GwaAnchor::Min;
  if (label == "midpoint") return GwaAnchor::Midpoint;
  throw InvalidArgument("unknown gwa anchor '" + std::string(label) +
                        "' (expected i, j, max, min or midpoint)");
}

namespace {

double xlogy(double n, double x) {
  if (n == 0.0) return 0.0;
  return n * std::log(x);
}

double log_binom(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double normal_pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

// Gaussian surrogate pmf at integer j, optionally renormalized over j >= 0.
double gaussian_mass(long j, double mean, double var, bool normalized) {
  if (!(var > 0.0)) return j == std::lround(mean) ? 1.0 : 0.0;
  const double dens = normal_pdf(static_cast<double>(j), mean, var);
  if (!normalized) return dens;
  const double sd = std::sqrt(var);
  const long lo = std::max(0L, static_cast<long>(std::floor(mean - 40.0 * sd)) - 1);
  const long hi = std::max(lo, static_cast<long>(std::ceil(mean + 40.0 * sd)) + 1);
  double total = 0.0;
  for (long z = lo; z <= hi; ++z) total += normal_pdf(static_cast<double>(z), mean, var);
  return total > 0.0 ? dens / total : 0.0;
}

void check_times(std::span<const double> t) {
  if (t.empty()) throw InvalidArgument("at least one time is required");
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (!(t[k] >= 0.0) || !std::isfinite(t[k])) {
      throw InvalidArgument("times must be finite and non-negative");
    }
    if (k > 0 && !(t[k] > t[k - 1])) throw InvalidArgument("times must be strictly increasing");
  }
}

void check_states(std::span<const long> z, const char* what) {
  if (z.empty()) throw InvalidArgument(std::string(what) + " must not be empty");
  for (long v : z) {
    if (v < 0) throw InvalidArgument(std::string(what) + " must be non-negative");
  }
}

TruncationWindow query_window(const Model& model, ParamView p, std::span<const long> z0,
                              std::span<const long> zt,
                              const std::optional<TruncationWindow>& given) {
  std::vector<long> all(z0.begin(), z0.end());
  all.insert(all.end(), zt.begin(), zt.end());
  if (given) {
    for (long z : all) {
      if (!given->contains(z)) {
        throw InvalidArgument("state " + std::to_string(z) + " lies outside z_trunc [" +
                              std::to_string(given->z_min) + ", " +
                              std::to_string(given->z_max) + "]");
      }
    }
    return *given;
  }
  TruncationWindow w = clip_window(default_window(all), model, p);
  for (long z : all) {
    if (!w.contains(z)) {
      throw InvalidArgument("state " + std::to_string(z) + " exceeds the model's state bound");
    }
  }
  return w;
}

// Tridiagonal view of a generator: sub[k] = Q(k, k-1), diag[k], sup[k] = Q(k, k+1).
struct Tridiagonal {
  std::vector<double> sub, diag, sup;
  explicit Tridiagonal(const Matrix& q) {
    const auto n = static_cast<std::size_t>(q.rows());
    sub.assign(n, 0.0);
    diag.assign(n, 0.0);
    sup.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      diag[k] = q(i, i);
      if (k > 0) sub[k] = q(i, i - 1);
      if (k + 1 < n) sup[k] = q(i, i + 1);
    }
  }
};

void fill_from_matrix(ProbTensor& out, std::size_t ti, const Matrix& m,
                      const TruncationWindow& w) {
  for (std::size_t a = 0; a < out.z0.size(); ++a) {
    const auto r = static_cast<Eigen::Index>(w.index(out.z0[a]));
    for (std::size_t b = 0; b < out.zt.size(); ++b) {
      out.at(ti, a, b) = m(r, static_cast<Eigen::Index>(w.index(out.zt[b])));
    }
  }
}

void run_expm(const Model& model, ParamView p, ProbTensor& out, const TruncationWindow& w) {
  const GeneratorMatrix g = build_generator(model, p, w);
  for (std::size_t ti = 0; ti < out.t.size(); ++ti) {
    fill_from_matrix(out, ti, expm(g.q * out.t[ti]), w);
  }
}

// Poisson(m) weights e^{-m} m^n / n! for n = 0..count-1.
std::vector<double> poisson_weights(double m, std::size_t count) {
  std::vector<double> w(count);
  for (std::size_t n = 0; n < count; ++n) {
    const double dn = static_cast<double>(n);
    w[n] = m == 0.0 ? (n == 0 ? 1.0 : 0.0) : std::exp(-m + dn * std::log(m) - std::lgamma(dn + 1.0));
  }
  return w;
}

// Smallest term count whose Poisson(m) tail mass falls below 1e-10.
std::size_t uniform_terms(double m) {
  if (m == 0.0) return 1;
  double cdf = 0.0;
  std::size_t n = 0;
  const auto cap = static_cast<std::size_t>(m + 60.0 * std::sqrt(m) + 200.0);
  while (n < cap) {
    const double dn = static_cast<double>(n);
    cdf += std::exp(-m + dn * std::log(m) - std::lgamma(dn + 1.0));
    ++n;
    if (dn > m && 1.0 - cdf < 1e-10) break;
  }
  return n;
}

void run_uniform(const Model& model, ParamView p, ProbTensor& out, const TruncationWindow& w,
                 std::optional<std::size_t> k) {
  const GeneratorMatrix g = build_generator(model, p, w);
  const Tridiagonal tri(g.q);
  const std::size_t n = w.size();
  double a = 0.0;
  for (double d : tri.diag) a = std::max(a, -d);
  std::vector<std::size_t> terms(out.t.size());
  std::vector<std::vector<double>> weights(out.t.size());
  std::size_t max_terms = 1;
  for (std::size_t ti = 0; ti < out.t.size(); ++ti) {
    const double m = a * out.t[ti];
    terms[ti] = k ? *k + 1 : uniform_terms(m);
    weights[ti] = poisson_weights(m, terms[ti]);
    max_terms = std::max(max_terms, terms[ti]);
  }
  // A = I + Q/a applied to row vectors
  const auto step = [&](const std::vector<double>& v, std::vector<double>& next) {
    for (std::size_t c = 0; c < n; ++c) {
      double s = v[c] * (1.0 + tri.diag[c] / a);
      if (c > 0) s += v[c - 1] * tri.sup[c - 1] / a;
      if (c + 1 < n) s += v[c + 1] * tri.sub[c + 1] / a;
      next[c] = s;
    }
  };
  parallel_for(out.z0.size(), [&](std::size_t ai) {
    std::vector<double> v(n, 0.0), next(n);
    v[w.index(out.z0[ai])] = 1.0;
    std::vector<double> acc(out.t.size() * out.zt.size(), 0.0);
    for (std::size_t term = 0; term < max_terms; ++term) {
      for (std::size_t ti = 0; ti < out.t.size(); ++ti) {
        if (term >= terms[ti]) continue;
        const double wt = weights[ti][term];
        if (wt == 0.0) continue;
        for (std::size_t b = 0; b < out.zt.size(); ++b) {
          acc[ti * out.zt.size() + b] += wt * v[w.index(out.zt[b])];
        }
      }
      if (a == 0.0) break;
      step(v, next);
      v.swap(next);
    }
    for (std::size_t ti = 0; ti < out.t.size(); ++ti) {
      for (std::size_t b = 0; b < out.zt.size(); ++b) {
        out.at(ti, ai, b) = acc[ti * out.zt.size() + b];
      }
    }
  });
}

// (eta I - Q)^{-1} eta by the Thomas algorithm, one column at a time.
Matrix erlang_resolvent(const Tridiagonal& tri, double eta) {
  const std::size_t n = tri.diag.size();
  // LU factors of M = eta I - Q, which is strictly diagonally dominant.
  std::vector<double> lower(n, 0.0), piv(n), upper(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double dk = eta - tri.diag[k];
    const double sub = k > 0 ? -tri.sub[k] : 0.0;
    if (k > 0) lower[k] = sub / piv[k - 1];
    piv[k] = dk - (k > 0 ? lower[k] * upper[k - 1] : 0.0);
    if (piv[k] == 0.0 || !std::isfinite(piv[k])) {
      throw ComputationError("Erlang resolvent: singular tridiagonal system");
    }
    upper[k] = k + 1 < n ? -tri.sup[k] : 0.0;
  }
  const auto dim = static_cast<Eigen::Index>(n);
  Matrix r(dim, dim);
  std::vector<double> x(n);
  for (std::size_t col = 0; col < n; ++col) {
    for (std::size_t k = 0; k < n; ++k) {
      x[k] = (k == col ? eta : 0.0) - (k > 0 ? lower[k] * x[k - 1] : 0.0);
    }
    for (std::size_t k = n; k-- > 0;) {
      x[k] = (x[k] - (k + 1 < n ? upper[k] * x[k + 1] : 0.0)) / piv[k];
    }
    for (std::size_t k = 0; k < n; ++k) {
      r(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(col)) = x[k];
    }
  }
  return r;
}

Matrix matrix_power(Matrix base, std::size_t k) {
  Matrix result = Matrix::Identity(base.rows(), base.cols());
  while (k > 0) {
    if (k & 1U) result = result * base;
    k >>= 1U;
    if (k > 0) base = base * base;
  }
  return result;
}

void run_erlang(const Model& model, ParamView p, ProbTensor& out, const TruncationWindow& w,
                std::size_t k) {
  if (k < 1) throw InvalidArgument("Erlang shape k must be at least 1");
  const GeneratorMatrix g = build_generator(model, p, w);
  const Tridiagonal tri(g.q);
  for (std::size_t ti = 0; ti < out.t.size(); ++ti) {
    const double t = out.t[ti];
    if (t == 0.0) {
      fill_from_matrix(out, ti, Matrix::Identity(g.q.rows(), g.q.cols()), w);
      continue;
    }
    const double eta = static_cast<double>(k) / t;
    fill_from_matrix(out, ti, matrix_power(erlang_resolvent(tri, eta), k), w);
  }
}

void ilt_with_rule(const Model& model, ParamView p, ProbTensor& out, std::size_t ti,
                   const InversionRule& rule, double eps) {
  long k_max = 0;
  for (long z : out.z0) k_max = std::max(k_max, z);
  for (long z : out.zt) k_max = std::max(k_max, z);
  std::vector<double> acc(out.z0.size() * out.zt.size(), 0.0);
  for (std::size_t node = 0; node < rule.nodes.size(); ++node) {
    TransformTable table(model, p, rule.nodes[node], k_max, eps);
    for (std::size_t a = 0; a < out.z0.size(); ++a) {
      for (std::size_t b = 0; b < out.zt.size(); ++b) {
        acc[a * out.zt.size() + b] += (rule.weights[node] * table(out.z0[a], out.zt[b])).real();
      }
    }
  }
  for (std::size_t a = 0; a < out.z0.size(); ++a) {
    for (std::size_t b = 0; b < out.zt.size(); ++b) {
      const double v = acc[a * out.zt.size() + b];
      if (!std::isfinite(v)) throw ComputationError("Laplace inversion produced a non-finite value");
      out.at(ti, a, b) = v;
    }
  }
}

void run_ilt(const Model& model, ParamView p, ProbTensor& out, double eps,
             InversionMethod method) {
  for (std::size_t ti = 0; ti < out.t.size(); ++ti) {
    const double t = out.t[ti];
    if (t == 0.0) continue;  // identity already filled
    if (method != InversionMethod::TalbotEulerFallback) {
      ilt_with_rule(model, p, out, ti, inversion_rule(method, t), eps);
      continue;
    }
    try {
      ilt_with_rule(model, p, out, ti, inversion_rule(InversionMethod::Talbot, t), eps);
    } catch (const ComputationError&) {
      ilt_with_rule(model, p, out, ti, inversion_rule(InversionMethod::Euler, t), eps);
    }
  }
}

double anchor_state(long i, long j, GwaAnchor anchor) {
  double b = 0.0;
  switch (anchor) {
    case GwaAnchor::I: b = static_cast<double>(i); break;
    case GwaAnchor::J: b = static_cast<double>(j); break;
    case GwaAnchor::Max: b = static_cast<double>(std::max(i, j)); break;
    case GwaAnchor::Min: b = static_cast<double>(std::min(i, j)); break;
    case GwaAnchor::Midpoint: b = 0.5 * static_cast<double>(i + j); break;
  }
  if (b <= 0.0) b = static_cast<double>(std::max({i, j, 1L}));
  return b;
}

std::pair<double, double> linearized_rates(const Model& model, ParamView p, long i, long j,
                                           GwaAnchor anchor) {
  const double b = anchor_state(i, j, anchor);
  return {model.birth(b, p) / b, model.death(b, p) / b};
}

}  // namespace

double linear_bd_pmf(long i, long j, double lambda, double mu, double t) {
  if (i < 0 || j < 0) return 0.0;
  if (t == 0.0 || i == 0) return i == j ? 1.0 : 0.0;
  const auto [beta1, beta2] = gw_betas(lambda, mu, t);
  const double di = static_cast<double>(i);
  if (j == 0) return std::pow(beta1, di);
  const double dj = static_cast<double>(j);
  const double q = (1.0 - beta1) * (1.0 - beta2);
  // k families die out, the other i - k have geometric sizes summing to j
  double max_term = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  for (long k = std::max(0L, i - j); k <= i - 1; ++k) {
    const double dk = static_cast<double>(k);
    const double term = log_binom(di, dk) + log_binom(dj - 1.0, di - dk - 1.0) +
                        xlogy(dk, beta1) + xlogy(di - dk, q) + xlogy(dj - di + dk, beta2);
    terms.push_back(term);
    max_term = std::max(max_term, term);
  }
  if (!std::isfinite(max_term)) return 0.0;
  double sum = 0.0;
  for (double term : terms) sum += std::exp(term - max_term);
  return std::exp(max_term) * sum;
}

std::optional<double> linear_bd_saddlepoint(long i, long j, double lambda, double mu, double t) {
  if (i <= 0 || j <= 0 || !(t > 0.0)) return std::nullopt;
  const auto [beta1, beta2] = gw_betas(lambda, mu, t);
  const double q = (1.0 - beta1) * (1.0 - beta2);
  if (!(q > 0.0)) return std::nullopt;
  const double di = static_cast<double>(i);
  const double dj = static_cast<double>(j);
  // generating function of one family: F(u) = beta1 + q u / (1 - beta2 u)
  struct Cgf {
    double k, k1, k2;
  };
  const auto cgf = [&](double theta) {
    const double u = std::exp(theta);
    const double den = 1.0 - beta2 * u;
    const double f = beta1 + q * u / den;
    const double f1 = q / (den * den);
    const double f2 = 2.0 * q * beta2 / (den * den * den);
    const double r1 = u * f1 / f;
    return Cgf{di * std::log(f), di * r1, di * (r1 + u * u * f2 / f - r1 * r1)};
  };
  double hi = beta2 > 0.0 ? -std::log(beta2) : 50.0;
  double lo = -50.0;
  if (beta2 > 0.0) hi -= 1e-12 * std::max(1.0, std::abs(hi));
  if (!(cgf(lo).k1 < dj) || !(cgf(hi).k1 > dj)) return std::nullopt;
  double theta = std::clamp(0.0, lo, hi);
  for (int it = 0; it < 200; ++it) {
    const Cgf c = cgf(theta);
    const double g = c.k1 - dj;
    if (std::abs(g) < 1e-12 * std::max(1.0, dj)) break;
    if (g > 0.0) hi = theta; else lo = theta;
    double next = theta - g / c.k2;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (std::abs(next - theta) < 1e-15 * std::max(1.0, std::abs(theta))) {
      theta = next;
      break;
    }
    theta = next;
  }
  const Cgf c = cgf(theta);
  if (!(c.k2 > 0.0) || std::abs(c.k1 - dj) > 1e-6 * std::max(1.0, dj)) return std::nullopt;
  const double value = std::exp(c.k - theta * dj) / std::sqrt(2.0 * std::numbers::pi * c.k2);
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

DiffusionMoments diffusion_moments(const Model& model, ParamView p, double z0,
                                   std::span<const double> times, std::size_t steps) {
  if (steps == 0) throw InvalidArgument("diffusion_moments: steps must be positive");
  DiffusionMoments out;
  out.mean.reserve(times.size());
  out.variance.reserve(times.size());
  if (times.empty()) return out;
  const double horizon = times.back();
  const auto deriv = [&](double z, double v) {
    const double zc = std::max(z, 0.0);
    const double up = model.birth(zc, p);
    const double down = model.death(zc, p);
    const double h = net_growth_slope(model, p, zc);
    return std::pair{up - down, 2.0 * h * v + up + down};
  };
  double z = z0, v = 0.0, now = 0.0;
  for (double target : times) {
    if (target < now) throw InvalidArgument("diffusion_moments: times must be increasing");
    if (target > now) {
      const double span = target - now;
      const auto n = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::lround(static_cast<double>(steps) * span / horizon)));
      const double h = span / static_cast<double>(n);
      for (std::size_t s = 0; s < n; ++s) {
        const auto [k1z, k1v] = deriv(z, v);
        const auto [k2z, k2v] = deriv(z + 0.5 * h * k1z, v + 0.5 * h * k1v);
        const auto [k3z, k3v] = deriv(z + 0.5 * h * k2z, v + 0.5 * h * k2v);
        const auto [k4z, k4v] = deriv(z + h * k3z, v + h * k3v);
        z += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
      }
      now = target;
    }
    out.mean.push_back(z);
    out.variance.push_back(v);
  }
  return out;
}

std::optional<double> stable_equilibrium(const Model& model, ParamView p) {
  std::optional<double> best;
  double best_h = 0.0;
  for (double root : rate_balance_roots(model, p)) {
    const double h = net_growth_slope(model, p, root);
    if (h < 0.0 && (!best || h < best_h)) {
      best = root;
      best_h = h;
    }
  }
  return best;
}

ProbTensor probability(const Model& model, ParamView p, std::span<const long> z0,
                       std::span<const long> zt, std::span<const double> t,
                       ProbMethod method, const ProbOptions& opts) {
  model.check_params(p);
  check_states(z0, "z0");
  check_states(zt, "zt");
  check_times(t);
  ProbTensor out{{t.begin(), t.end()}, {z0.begin(), z0.end()}, {zt.begin(), zt.end()},
                 std::vector<double>(t.size() * z0.size() * zt.size(), 0.0)};
  // t = 0 is the identity for every method
  for (std::size_t ti = 0; ti < t.size(); ++ti) {
    if (t[ti] != 0.0) continue;
    for (std::size_t a = 0; a < z0.size(); ++a) {
      for (std::size_t b = 0; b < zt.size(); ++b) out.at(ti, a, b) = z0[a] == zt[b] ? 1.0 : 0.0;
    }
  }
  switch (method) {
    case ProbMethod::Expm:
      run_expm(model, p, out, query_window(model, p, z0, zt, opts.z_trunc));
      break;
    case ProbMethod::Uniform:
      run_uniform(model, p, out, query_window(model, p, z0, zt, opts.z_trunc), opts.k);
      break;
    case ProbMethod::Erlang:
      run_erlang(model, p, out, query_window(model, p, z0, zt, opts.z_trunc), opts.k.value_or(150));
      break;
    case ProbMethod::Ilt:
      run_ilt(model, p, out, opts.lentz_eps, opts.laplace_method);
      break;
    case ProbMethod::Da: {
      for (std::size_t a = 0; a < z0.size(); ++a) {
        const DiffusionMoments mom = diffusion_moments(model, p, static_cast<double>(z0[a]), t,
                                                       opts.k.value_or(1000));
        for (std::size_t ti = 0; ti < t.size(); ++ti) {
          if (t[ti] == 0.0) continue;
          for (std::size_t b = 0; b < zt.size(); ++b) {
            out.at(ti, a, b) = gaussian_mass(zt[b], mom.mean[ti], mom.variance[ti], opts.normalized);
          }
        }
      }
      break;
    }
    case ProbMethod::Oua: {
      const auto eq = stable_equilibrium(model, p);
      if (!eq) {
        throw ComputationError(
            "oua: no stable equilibrium (rate-balance root with negative slope); "
            "use another method such as da or expm");
      }
      const double h = net_growth_slope(model, p, *eq);
      const double total = model.birth(*eq, p) + model.death(*eq, p);
      for (std::size_t ti = 0; ti < t.size(); ++ti) {
        if (t[ti] == 0.0) continue;
        const double decay = std::exp(h * t[ti]);
        const double var = total / (2.0 * h) * std::expm1(2.0 * h * t[ti]);
        for (std::size_t a = 0; a < z0.size(); ++a) {
          const double mean = *eq + decay * (static_cast<double>(z0[a]) - *eq);
          for (std::size_t b = 0; b < zt.size(); ++b) {
            out.at(ti, a, b) = gaussian_mass(zt[b], mean, var, opts.normalized);
          }
        }
      }
      break;
    }
    case ProbMethod::Gwa:
    case ProbMethod::Gwasa: {
      for (std::size_t ti = 0; ti < t.size(); ++ti) {
        if (t[ti] == 0.0) continue;
        for (std::size_t a = 0; a < z0.size(); ++a) {
          for (std::size_t b = 0; b < zt.size(); ++b) {
            const auto [lam, mu] = linearized_rates(model, p, z0[a], zt[b], opts.anchor);
            std::optional<double> v;
            if (method == ProbMethod::Gwasa) v = linear_bd_saddlepoint(z0[a], zt[b], lam, mu, t[ti]);
            out.at(ti, a, b) = v ? *v : linear_bd_pmf(z0[a], zt[b], lam, mu, t[ti]);
          }
        }
      }
      break;
    }
    case ProbMethod::Sim: {
      const std::size_t k = opts.k.value_or(1000);
      if (k < 1) throw InvalidArgument("sim needs at least one sample");
      std::vector<double> grid{0.0};
      for (double v : t) {
        if (v > 0.0) grid.push_back(v);
      }
      const std::size_t offset = t[0] == 0.0 ? 0 : 1;
      for (std::size_t a = 0; a < z0.size(); ++a) {
        std::vector<long> finals(k * grid.size());
        parallel_for(k, [&](std::size_t n) {
          RngStream rng(opts.seed, a * k + n);
          simulate_path_into(model, p, z0[a], grid, SimMethod::Exact, 0.1, rng,
                             std::span<long>(finals).subspan(n * grid.size(), grid.size()));
        });
        for (std::size_t ti = 0; ti < t.size(); ++ti) {
          if (t[ti] == 0.0) continue;
          const std::size_t g = ti + offset;
          for (std::size_t b = 0; b < zt.size(); ++b) {
            std::size_t hits = 0;
            for (std::size_t n = 0; n < k; ++n) hits += finals[n * grid.size() + g] == zt[b];
            out.at(ti, a, b) = static_cast<double>(hits) / static_cast<double>(k);
          }
        }
      }
      break;
    }
  }
  return out;
}

namespace {

double single(const Model& model, ParamView p, long i, long j, double t, ProbMethod m,
              const ProbOptions& opts) {
  const long zi[] = {i};
  const long zj[] = {j};
  const double tt[] = {t};
  return probability(model, p, zi, zj, tt, m, opts)(0, 0, 0);
}

}  // namespace

double prob_expm(const Model& model, ParamView p, long i, long j, double t,
                 std::optional<TruncationWindow> window) {
  ProbOptions o;
  o.z_trunc = window;
  return single(model, p, i, j, t, ProbMethod::Expm, o);
}

double prob_uniform(const Model& model, ParamView p, long i, long j, double t,
                    std::optional<TruncationWindow> window, std::optional<std::size_t> k) {
  ProbOptions o;
  o.z_trunc = window;
  o.k = k;
  return single(model, p, i, j, t, ProbMethod::Uniform, o);
}

double prob_erlang(const Model& model, ParamView p, long i, long j, double t,
                   std::optional<TruncationWindow> window, std::size_t k) {
  ProbOptions o;
  o.z_trunc = window;
  o.k = k;
  return single(model, p, i, j, t, ProbMethod::Erlang, o);
}

double prob_ilt(const Model& model, ParamView p, long i, long j, double t, double lentz_eps,
                InversionMethod method) {
  ProbOptions o;
  o.lentz_eps = lentz_eps;
  o.laplace_method = method;
  return single(model, p, i, j, t, ProbMethod::Ilt, o);
}

double prob_da(const Model& model, ParamView p, long i, long j, double t) {
  return single(model, p, i, j, t, ProbMethod::Da, {});
}

double prob_oua(const Model& model, ParamView p, long i, long j, double t) {
  return single(model, p, i, j, t, ProbMethod::Oua, {});
}

double prob_gwa(const Model& model, ParamView p, long i, long j, double t, GwaAnchor anchor) {
  ProbOptions o;
  o.anchor = anchor;
  return single(model, p, i, j, t, ProbMethod::Gwa, o);
}

double prob_gwasa(const Model& model, ParamView p, long i, long j, double t, GwaAnchor anchor) {
  ProbOptions o;
  o.anchor = anchor;
  return single(model, p, i, j, t, ProbMethod::Gwasa, o);
}

double prob_sim(const Model& model, ParamView p, long i, long j, double t, std::size_t k,
                std::uint64_t seed) {
  ProbOptions o;
  o.k = k;
  o.seed = seed;
  return single(model, p, i, j, t, ProbMethod::Sim, o);
}

}  // namespace bdp
