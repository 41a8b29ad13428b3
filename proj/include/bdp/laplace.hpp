#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "bdp/models.hpp"

namespace bdp {

using Complex = std::complex<double>;

/// Continued fraction a(1)/(b(1) + a(2)/(b(2) + ...)) by the modified Lentz
/// method. Stops when the per-step multiplier is within eps of 1.
Complex lentz(const std::function<Complex(std::size_t)>& a,
              const std::function<Complex(std::size_t)>& b, double eps = 1e-6,
              double tiny = 1e-30, std::size_t max_terms = 100000);

/// Laplace transform f_{i,j}(s) of p_{i,j}(t), from the continued fraction of
/// the birth-death chain on all non-negative states.
Complex transform_pij(const Model& model, ParamView p, long i, long j, Complex s,
                      double lentz_eps = 1e-6);

/// Evaluates many f_{i,j}(s) at one s, sharing the convergent ratios
/// B_k/B_{k-1} and the continued-fraction tails between queries.
class TransformTable {
 public:
  TransformTable(const Model& model, ParamView p, Complex s, long k_max,
                 double lentz_eps = 1e-6);

  /// The chain confined to [0, k_max] (no birth out of k_max). The fraction
  /// then terminates, so tails come from exact backward recursion.
  static TransformTable truncated(const Model& model, ParamView p, Complex s, long k_max);

  /// f_{i,j}(s) for 0 <= i, j <= k_max.
  Complex operator()(long i, long j);

 private:
  Complex a(long k) const;
  Complex b(long k) const;
  Complex tail(long m);

  const Model& model_;
  ParamView p_;
  Complex s_;
  long k_max_;
  double eps_;
  std::vector<double> lambda_;  // lambda_k, k = 0..k_max+1
  std::vector<double> mu_;      // mu_k, k = 0..k_max+1
  std::vector<Complex> ratio_;  // ratio_[k] = B_k / B_{k-1}, k = 1..k_max+1
  std::vector<Complex> tails_;
  std::vector<char> have_tail_;
  bool finite_ = false;
};

enum class InversionMethod { Euler, GaverStehfest, Talbot, TalbotEulerFallback };

/// Accepts "euler", "gaver-stehfest", "talbot" and "cme-talbot".
InversionMethod parse_inversion_method(std::string_view label);
std::string to_string(InversionMethod m);

/// Nodes s_k and weights w_k with f(t) ~ sum_k Re(w_k F(s_k)).
struct InversionRule {
  std::vector<Complex> nodes;
  std::vector<Complex> weights;
};

/// Node sets: euler uses 2M+1 terms with M = 16, gaver-stehfest 14 terms,
/// talbot 24 contour points. TalbotEulerFallback yields the talbot rule.
InversionRule inversion_rule(InversionMethod method, double t);

/// Numerical inverse Laplace transform of F at t > 0. With
/// TalbotEulerFallback a failed or non-finite Talbot result is redone by Euler.
double invert(const std::function<Complex(Complex)>& F, double t, InversionMethod method);

}  // namespace bdp
