#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bdp/models.hpp"
#include "bdp/rng.hpp"

namespace bdp {

/// Jump times and the states entered at those times. The first entry is (0, z0).
struct ContinuousPath {
  std::vector<double> jump_times;
  std::vector<long> states;
};

/// Population sizes at prescribed observation times.
struct DiscretePath {
  std::vector<double> obs_times;
  std::vector<long> states;
};

enum class SimMethod { Exact, Euler, Midpoint, GaltonWatson };

SimMethod parse_sim_method(std::string_view label);
std::string to_string(SimMethod m);

/// Initial population: a fixed size, or a sampler called once per path with
/// that path's random stream.
using InitialState = std::variant<long, std::function<long(RngStream&)>>;

struct SimulationOptions {
  SimMethod method = SimMethod::Exact;
  double tau = 0.1;
  std::size_t k = 1;
  bool survival = false;
  std::uint64_t seed = 2021;
  std::size_t max_attempts = 100000;
};

/// Every transition on [0, t_max] for k independent paths (exact algorithm).
std::vector<ContinuousPath> simulate_continuous(const Model& model, ParamView p,
                                                const InitialState& z0, double t_max,
                                                std::size_t k = 1, bool survival = false,
                                                std::uint64_t seed = 2021,
                                                std::size_t max_attempts = 100000);

/// Population sizes at the given increasing times for k independent paths.
std::vector<DiscretePath> simulate_discrete(const Model& model, ParamView p,
                                            const InitialState& z0,
                                            std::span<const double> times,
                                            const SimulationOptions& opts);

/// Extinction probability beta1 and geometric parameter beta2 of a linear
/// birth-and-death process with per-individual rates (lambda, mu) after time t.
struct GaltonWatsonBetas {
  double beta1;
  double beta2;
};
GaltonWatsonBetas gw_betas(double lambda, double mu, double t);

/// One step of the linear fractional Galton-Watson approximation from z individuals.
long gw_step(long z, double lambda, double mu, double tau, RngStream& rng);

/// Advances a single path from state z over elapsed time dt.
long simulate_transition(const Model& model, ParamView p, long z, double dt,
                         SimMethod method, double tau, RngStream& rng);

/// Fills out[j] with the state at times[j] starting from z at times[0].
void simulate_path_into(const Model& model, ParamView p, long z,
                        std::span<const double> times, SimMethod method, double tau,
                        RngStream& rng, std::span<long> out);

}  // namespace bdp
