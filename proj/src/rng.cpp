#include "bdp/rng.hpp"

#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>

namespace bdp {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream_index)
    : master_seed_(master_seed), stream_index_(stream_index) {
  const std::uint64_t a = splitmix64(master_seed);
  const std::uint64_t b = splitmix64(a ^ splitmix64(stream_index + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  engine_.seed(seq);
}

double RngStream::uniform() {
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

double RngStream::exponential(double rate) {
  if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
  return std::exponential_distribution<double>(1.0)(engine_) / rate;
}

long RngStream::poisson(double mean) {
  if (!(mean > 0.0)) return 0;
  return std::poisson_distribution<long>(mean)(engine_);
}

long RngStream::binomial(long trials, double p) {
  if (trials <= 0 || !(p > 0.0)) return 0;
  if (p >= 1.0) return trials;
  return std::binomial_distribution<long>(trials, p)(engine_);
}

long RngStream::negative_binomial(long successes, double p) {
  if (successes <= 0 || p >= 1.0) return 0;
  if (!(p > 0.0)) throw std::domain_error("negative binomial success probability is zero");
  return std::negative_binomial_distribution<long>(successes, p)(engine_);
}

double RngStream::normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

std::uint64_t default_seed() {
  if (const char* env = std::getenv("BDPKIT_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
    }
  }
  return 2021;
}

}  // namespace bdp
