#pragma once

// Plumbing shared by the estimation frameworks.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "bdp/estimate.hpp"

namespace bdp::detail {

/// Maps between the free parameters being estimated and the full vector.
struct FreeProblem {
  const Model& model;
  KnownParams known;
  std::size_t n;

  Params full(std::span<const double> x) const { return known.expand(x, n); }
};

/// Checks p0 and bounds against the known parameters.
FreeProblem prepare(const Model& model, const EstimateRequest& req);

/// Constraints on the full vector restated on the free parameters.
std::vector<Constraint> free_constraints(const std::vector<Constraint>& cons,
                                         const FreeProblem& fp);

/// Objective with ComputationError and NaN reported as +inf.
Objective guarded(std::function<double(std::span<const double>)> f);

struct DiscreteTerms {
  double loglik = 0.0;
  std::size_t clamped = 0;  // transitions whose probability hit the floor
  std::size_t total = 0;
};

DiscreteTerms discrete_terms(const std::vector<TransitionGroup>& groups,
                             const ObservedData& data, const Model& model, ParamView p,
                             ProbMethod method, const ProbOptions& opts);

}  // namespace bdp::detail
