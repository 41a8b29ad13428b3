#include "bdp/laplace.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "bdp/errors.hpp"

namespace bdp {

Complex lentz(const std::function<Complex(std::size_t)>& a,
              const std::function<Complex(std::size_t)>& b, double eps, double tiny,
              std::size_t max_terms) {
  if (!(eps > 0.0)) throw InvalidArgument("lentz: eps must be positive");
  Complex f = tiny;
  Complex c = f;
  Complex d = 0.0;
  for (std::size_t k = 1; k <= max_terms; ++k) {
    const Complex ak = a(k);
    const Complex bk = b(k);
    d = bk + ak * d;
    if (d == 0.0) d = tiny;
    c = bk + ak / c;
    if (c == 0.0) c = tiny;
    d = 1.0 / d;
    const Complex delta = c * d;
    f *= delta;
    if (std::abs(delta - 1.0) < eps) return f;
  }
  throw ComputationError("lentz: continued fraction did not converge in " +
                         std::to_string(max_terms) + " terms");
}

TransformTable::TransformTable(const Model& model, ParamView p, Complex s, long k_max,
                               double lentz_eps)
    : model_(model), p_(p), s_(s), k_max_(k_max), eps_(lentz_eps) {
  if (k_max < 0) throw InvalidArgument("TransformTable: negative state");
  const auto n = static_cast<std::size_t>(k_max + 2);
  lambda_.resize(n);
  mu_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    lambda_[k] = model.birth(static_cast<double>(k), p);
    mu_[k] = model.death(static_cast<double>(k), p);
  }
  // ratio_[k] = B_k / B_{k-1} obeys ratio_k = b_k + a_k / ratio_{k-1}; this
  // stays bounded where B_k itself would overflow.
  ratio_.assign(n, Complex(0.0));
  ratio_[1] = b(1);
  for (std::size_t k = 2; k < n; ++k) {
    Complex prev = ratio_[k - 1];
    if (prev == 0.0) prev = 1e-300;
    ratio_[k] = b(static_cast<long>(k)) + a(static_cast<long>(k)) / prev;
  }
  tails_.assign(n + 2, Complex(0.0));
  have_tail_.assign(n + 2, 0);
}

TransformTable TransformTable::truncated(const Model& model, ParamView p, Complex s, long k_max) {
  TransformTable t(model, p, s, k_max);
  t.finite_ = true;
  t.lambda_[static_cast<std::size_t>(k_max)] = 0.0;
  t.lambda_[static_cast<std::size_t>(k_max + 1)] = 0.0;
  if (k_max > 0) {
    Complex prev = t.ratio_[static_cast<std::size_t>(k_max)];
    if (prev == 0.0) prev = 1e-300;
    t.ratio_[static_cast<std::size_t>(k_max + 1)] = t.b(k_max + 1) + t.a(k_max + 1) / prev;
  } else {
    t.ratio_[1] = t.b(1);
  }
  // a_{k_max+2} = 0 cuts the fraction
  const auto last = static_cast<std::size_t>(k_max + 2);
  t.tails_[last] = 0.0;
  t.have_tail_[last] = 1;
  for (long m = k_max + 1; m >= 2; --m) {
    const auto idx = static_cast<std::size_t>(m);
    t.tails_[idx] = t.a(m) / (t.b(m) + t.tails_[idx + 1]);
    t.have_tail_[idx] = 1;
  }
  return t;
}

Complex TransformTable::a(long k) const {
  if (k == 1) return 1.0;
  const auto rate = [&](const std::vector<double>& cache, long z, bool up) {
    if (z < static_cast<long>(cache.size())) return cache[static_cast<std::size_t>(z)];
    const double zz = static_cast<double>(z);
    return up ? model_.birth(zz, p_) : model_.death(zz, p_);
  };
  return -rate(lambda_, k - 2, true) * rate(mu_, k - 1, false);
}

Complex TransformTable::b(long k) const {
  const long z = k - 1;
  double up, down;
  if (z < static_cast<long>(lambda_.size())) {
    up = lambda_[static_cast<std::size_t>(z)];
    down = mu_[static_cast<std::size_t>(z)];
  } else {
    up = model_.birth(static_cast<double>(z), p_);
    down = model_.death(static_cast<double>(z), p_);
  }
  return s_ + up + down;
}

Complex TransformTable::tail(long m) {
  const auto idx = static_cast<std::size_t>(m);
  if (have_tail_[idx]) return tails_[idx];
  const Complex value = lentz([&](std::size_t k) { return a(m + static_cast<long>(k) - 1); },
                              [&](std::size_t k) { return b(m + static_cast<long>(k) - 1); },
                              eps_);
  tails_[idx] = value;
  have_tail_[idx] = 1;
  return value;
}

Complex TransformTable::operator()(long i, long j) {
  if (i < 0 || j < 0 || i > k_max_ || j > k_max_) {
    throw InvalidArgument("TransformTable: state outside [0, " + std::to_string(k_max_) + "]");
  }
  Complex prefactor = 1.0;
  long top;
  if (j <= i) {
    for (long k = j + 1; k <= i; ++k) {
      prefactor *= mu_[static_cast<std::size_t>(k)] / ratio_[static_cast<std::size_t>(k)];
    }
    top = i;
  } else {
    for (long k = i + 1; k <= j; ++k) {
      prefactor *= lambda_[static_cast<std::size_t>(k - 1)] / ratio_[static_cast<std::size_t>(k)];
    }
    top = j;
  }
  if (prefactor == 0.0) return 0.0;
  return prefactor / (ratio_[static_cast<std::size_t>(top + 1)] + tail(top + 2));
}

Complex transform_pij(const Model& model, ParamView p, long i, long j, Complex s,
                      double lentz_eps) {
  if (i < 0 || j < 0) throw InvalidArgument("transform_pij: states must be non-negative");
  TransformTable table(model, p, s, std::max(i, j), lentz_eps);
  return table(i, j);
}

InversionMethod parse_inversion_method(std::string_view label) {
  if (label == "euler") return InversionMethod::Euler;
  if (label == "gaver-stehfest") return InversionMethod::GaverStehfest;
  if (label == "talbot") return InversionMethod::Talbot;
  if (label == "cme-talbot") return InversionMethod::TalbotEulerFallback;
  throw InvalidArgument("unknown Laplace inversion method '" + std::string(label) +
                        "' (expected cme-talbot, talbot, euler or gaver-stehfest)");
}

std::string to_string(InversionMethod m) {
  switch (m) {
    case InversionMethod::Euler: return "euler";
    case InversionMethod::GaverStehfest: return "gaver-stehfest";
    case InversionMethod::Talbot: return "talbot";
    case InversionMethod::TalbotEulerFallback: return "cme-talbot";
  }
  return "?";
}

namespace {

InversionRule euler_rule(double t) {
  constexpr int m = 16;
  std::vector<double> eta(2 * m + 1, 1.0);
  eta[0] = 0.5;
  eta[2 * m] = std::ldexp(1.0, -m);
  double binom = 1.0;  // C(m, k)
  for (int k = 1; k < m; ++k) {
    binom = binom * (m - k + 1) / k;
    eta[static_cast<std::size_t>(2 * m - k)] =
        eta[static_cast<std::size_t>(2 * m - k + 1)] + std::ldexp(binom, -m);
  }
  InversionRule rule;
  const double base = m * std::numbers::ln10 / 3.0;
  const double scale = std::pow(10.0, m / 3.0) / t;
  for (int k = 0; k <= 2 * m; ++k) {
    rule.nodes.emplace_back(base / t, std::numbers::pi * k / t);
    rule.weights.emplace_back(scale * eta[static_cast<std::size_t>(k)] * (k % 2 ? -1.0 : 1.0));
  }
  return rule;
}

InversionRule stehfest_rule(double t) {
  constexpr int n = 14;
  constexpr int half = n / 2;
  const auto fact = [](int k) { return std::tgamma(k + 1.0); };
  InversionRule rule;
  const double ln2t = std::numbers::ln2 / t;
  for (int k = 1; k <= n; ++k) {
    double v = 0.0;
    for (int j = (k + 1) / 2; j <= std::min(k, half); ++j) {
      v += std::pow(j, half) * fact(2 * j) /
           (fact(half - j) * fact(j) * fact(j - 1) * fact(k - j) * fact(2 * j - k));
    }
    if ((k + half) % 2) v = -v;
    rule.nodes.emplace_back(k * ln2t, 0.0);
    rule.weights.emplace_back(ln2t * v);
  }
  return rule;
}

InversionRule talbot_rule(double t) {
  constexpr int m = 24;
  const double r = 2.0 * m / (5.0 * t);
  InversionRule rule;
  rule.nodes.emplace_back(r);
  rule.weights.emplace_back(0.5 * std::exp(r * t) * r / m);
  for (int k = 1; k < m; ++k) {
    const double theta = k * std::numbers::pi / m;
    const double cot = 1.0 / std::tan(theta);
    const Complex s(r * theta * cot, r * theta);
    const double sigma = theta + (theta * cot - 1.0) * cot;
    rule.nodes.push_back(s);
    rule.weights.push_back(std::exp(t * s) * Complex(1.0, sigma) * (r / m));
  }
  return rule;
}

double apply_rule(const std::function<Complex(Complex)>& F, const InversionRule& rule) {
  double sum = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    Complex value;
    try {
      value = F(rule.nodes[k]);
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "transform evaluation failed at node " << k << " (s = " << rule.nodes[k]
          << "): " << e.what();
      throw ComputationError(msg.str());
    }
    sum += (rule.weights[k] * value).real();
  }
  return sum;
}

}  // namespace

InversionRule inversion_rule(InversionMethod method, double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw InvalidArgument("Laplace inversion needs t > 0");
  switch (method) {
    case InversionMethod::Euler: return euler_rule(t);
    case InversionMethod::GaverStehfest: return stehfest_rule(t);
    case InversionMethod::Talbot:
    case InversionMethod::TalbotEulerFallback: return talbot_rule(t);
  }
  throw InvalidArgument("unknown inversion method");
}

double invert(const std::function<Complex(Complex)>& F, double t, InversionMethod method) {
  if (method != InversionMethod::TalbotEulerFallback) {
    return apply_rule(F, inversion_rule(method, t));
  }
  try {
    const double value = apply_rule(F, inversion_rule(InversionMethod::Talbot, t));
    if (std::isfinite(value)) return value;
  } catch (const ComputationError&) {
  }
  return apply_rule(F, inversion_rule(InversionMethod::Euler, t));
}

}  // namespace bdp
