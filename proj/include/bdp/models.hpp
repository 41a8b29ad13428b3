#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bdp {

/// Model parameters in canonical order.
using Params = std::vector<double>;
using ParamView = std::span<const double>;

/// Raw (unclamped) population rate as a function of a real-valued state.
using RateFn = std::function<double(double z, ParamView p)>;

/// Describes rates of the form lambda_z = f(z) * p[birth_index] and
/// mu_z = g(z) * p[death_index]. Used for closed-form continuous-data MLEs.
struct RateFactorization {
  std::optional<std::size_t> birth_index;
  std::optional<std::size_t> death_index;
  std::function<double(double)> birth_shape;
  std::function<double(double)> death_shape;
};

/// Birth and death rate functions of a population-size-dependent
/// birth-and-death process. Rates are clamped at zero and evaluated at
/// max(z, 0), so they can be differentiated in z.
class Model {
 public:
  Model(std::string label, RateFn birth, RateFn death, std::size_t param_count);

  const std::string& label() const { return label_; }
  std::size_t param_count() const { return param_count_; }

  double birth(double z, ParamView p) const;
  double death(double z, ParamView p) const;

  /// Largest admissible state for these parameters, if the state space is finite.
  std::optional<long> state_bound(ParamView p) const;

  const std::optional<RateFactorization>& factorization() const { return factorization_; }

  /// Names of the parameters in canonical order (generic p0, p1, ... for custom models).
  const std::vector<std::string>& param_names() const { return param_names_; }

  /// Throws InvalidArgument when p has the wrong length or non-finite entries.
  void check_params(ParamView p) const;

  Model& with_state_bound(std::function<std::optional<long>(ParamView)> bound);
  Model& with_factorization(RateFactorization f);
  Model& with_param_names(std::vector<std::string> names);

 private:
  std::string label_;
  RateFn birth_;
  RateFn death_;
  std::size_t param_count_;
  std::function<std::optional<long>(ParamView)> state_bound_;
  std::optional<RateFactorization> factorization_;
  std::vector<std::string> param_names_;
};

/// Labels accepted by builtin_model().
const std::vector<std::string>& builtin_labels();

/// One of the thirteen built-in models, looked up by label.
Model builtin_model(const std::string& label);

/// Wraps user-supplied rate functions with the same clamping contract.
Model custom_model(RateFn birth, RateFn death, std::size_t param_count,
                   std::string label = "custom");

/// Positive root of lambda_z - mu_z rounded to the nearest integer, or nothing
/// when the rates never balance on (0, z_upper]. The smallest root wins.
std::optional<long> carrying_capacity(const Model& model, ParamView p,
                                      double z_upper = 1e6);

/// Real-valued positive roots of lambda_z - mu_z on (0, z_upper], ascending.
std::vector<double> rate_balance_roots(const Model& model, ParamView p,
                                       double z_upper = 1e6);

/// d/dz (lambda_z - mu_z) by central differences (one-sided near zero).
double net_growth_slope(const Model& model, ParamView p, double z);

}  // namespace bdp
