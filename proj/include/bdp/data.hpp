#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bdp/models.hpp"

namespace bdp {

enum class Scheme { Discrete, Continuous };

Scheme parse_scheme(std::string_view label);
std::string to_string(Scheme s);

/// Jagged sample paths. For the continuous scheme each row is a jump (or, with
/// no change in count, the end of observation), so consecutive counts differ
/// by at most one.
struct ObservedData {
  Scheme scheme = Scheme::Discrete;
  std::vector<std::vector<double>> t_data;
  std::vector<std::vector<long>> p_data;

  /// Throws InvalidArgument describing the first problem found.
  void validate() const;

  std::vector<long> all_counts() const;
  long max_count() const;
};

/// One observed pair (z_prev at t, z_next at t + dt).
struct Transition {
  long z_prev;
  long z_next;
  double dt;
};

std::vector<Transition> transitions(const ObservedData& data);

/// Transitions that share an elapsed time, with multiplicities.
struct TransitionGroup {
  double dt;
  std::vector<long> from;  // distinct z_prev, ascending
  std::vector<long> to;    // distinct z_next, ascending
  struct Entry {
    long z_prev;
    long z_next;
    std::size_t count;
  };
  std::vector<Entry> entries;
};

/// Groups transitions by elapsed time (times within 1e-12 relative are merged).
std::vector<TransitionGroup> group_transitions(const ObservedData& data);

/// Parameters fixed at known values, by canonical index.
struct KnownParams {
  std::vector<double> values;
  std::vector<std::size_t> indices;

  /// Throws unless indices are distinct, in range and match values in length.
  void validate(std::size_t param_count) const;
  /// Canonical indices of the parameters left to estimate, ascending.
  std::vector<std::size_t> free_indices(std::size_t param_count) const;
  /// Full parameter vector from the free values.
  Params expand(std::span<const double> free, std::size_t param_count) const;
};

/// Per-state up-jumps u, down-jumps d and holding time h for states
/// z_min, z_min + 1, ...
struct SufficientStats {
  long z_min = 0;
  std::vector<double> u;
  std::vector<double> d;
  std::vector<double> h;

  std::size_t size() const { return h.size(); }
  double total_up() const;
  double total_down() const;
  double total_time() const;
};

/// Tallies U_z, D_z and H_z from continuously observed paths.
SufficientStats continuous_stats(const ObservedData& data);

/// Sum over states of u log(lambda_z) + d log(mu_z) - (lambda_z + mu_z) h,
/// with 0 log 0 = 0 and -infinity when a positive count meets a zero rate.
double complete_data_loglik(const SufficientStats& s, const Model& model, ParamView p);

}  // namespace bdp
