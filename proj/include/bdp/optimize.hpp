#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bdp/linalg.hpp"

namespace bdp {

using Objective = std::function<double(std::span<const double>)>;

/// Per-coordinate [lower, upper]; infinite ends are allowed for the local method.
struct Bounds {
  std::vector<std::pair<double, double>> box;

  std::size_t size() const { return box.size(); }
  bool contains(std::span<const double> x) const;
  /// Nearest point of the box.
  std::vector<double> project(std::span<const double> x) const;
};

/// Equality constraints require fn(x) = 0, inequality constraints fn(x) >= 0.
struct Constraint {
  enum class Kind { Equality, Inequality };
  Kind kind = Kind::Inequality;
  Objective fn;
};

/// Total squared violation of the constraints at x.
double constraint_violation(const std::vector<Constraint>& cons, std::span<const double> x);

enum class OptMethod { Local, DifferentialEvolution };

OptMethod parse_opt_method(std::string_view label);
std::string to_string(OptMethod m);

struct MinimizeOptions {
  OptMethod method = OptMethod::Local;
  /// Quasi-Newton iterations per penalty stage, or differential-evolution generations.
  std::size_t max_iter = 1000;
  std::uint64_t seed = 2021;
  /// Local method: also start from 4 jittered copies of x0 and keep the best.
  bool multi_start = false;
  /// Differential evolution: finish with a local run from the best member.
  bool polish = true;
};

struct MinimizeResult {
  std::vector<double> x;
  double fun = 0.0;
  bool success = false;
  std::string message;
  std::size_t evaluations = 0;
};

/// Minimizes f over the box subject to the constraints.
MinimizeResult minimize(const Objective& f, std::vector<double> x0, const Bounds& bounds,
                        const std::vector<Constraint>& constraints = {},
                        const MinimizeOptions& opts = {});

/// Forward-difference gradient with step sqrt(eps) * max(1, |x_i|), stepping
/// backwards when a forward step would leave the box.
std::vector<double> gradient_fd(const Objective& f, std::span<const double> x, double fx,
                                const Bounds* bounds = nullptr);

/// Symmetric central-difference Hessian with h_i = rel_step * max(1, |x_i|).
Matrix hessian_fd(const Objective& f, std::span<const double> x, double rel_step = 1e-4);

}  // namespace bdp
