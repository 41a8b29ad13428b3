#pragma once

#include <cstdint>
#include <random>

namespace bdp {

/// Independent random substream identified by (master seed, stream index).
///
/// The engine state is derived by SplitMix64 mixing of both numbers, so a
/// given pair always reproduces the same variates no matter which thread
/// consumes it.
class RngStream {
 public:
  using Engine = std::mt19937_64;
  using result_type = Engine::result_type;

  RngStream(std::uint64_t master_seed, std::uint64_t stream_index);

  static constexpr result_type min() { return Engine::min(); }
  static constexpr result_type max() { return Engine::max(); }
  result_type operator()() { return engine_(); }

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t stream_index() const { return stream_index_; }

  /// Uniform on [0, 1).
  double uniform();
  /// Exponential with the given rate; +infinity when rate is 0.
  double exponential(double rate);
  long poisson(double mean);
  long binomial(long trials, double p);
  /// Failures before `successes` successes with success probability p.
  long negative_binomial(long successes, double p);
  double normal();

 private:
  std::uint64_t master_seed_;
  std::uint64_t stream_index_;
  Engine engine_;
};

/// SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed used when none is given: BDPKIT_SEED if set, otherwise a fixed default.
std::uint64_t default_seed();

}  // namespace bdp
