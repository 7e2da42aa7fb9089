#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace qlbayes::rng {

// SplitMix64 finalizer.  Used as a stateless counter-based generator: every
// variate is a pure function of (key, counter), so parallel replicates can
// draw from disjoint streams without shared state.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Collapse an ordered tuple of integers (seed, n, replicate, ...) into one
// stream key.  Order-sensitive so (a,b) and (b,a) derive different seeds.
constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t acc = 0x853c49e6748fea9bULL;
  for (std::uint64_t p : parts) acc = mix64(acc ^ mix64(p));
  return acc;
}

// Counter-based stream: uniform(c) and gauss(c) depend only on (key, c).
class Counter {
 public:
  explicit Counter(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix64(mix64(seed) ^ mix64(stream + 0x9d2c5680ULL))) {}

  // Uniform draw strictly inside (0, 1): 53-bit mantissa, offset half-ulp.
  double uniform(std::uint64_t counter) const {
    const std::uint64_t bits = mix64(key_ ^ (counter * 0xda942042e4dd58b5ULL));
    return static_cast<double>(bits >> 11) * 0x1.0p-53 + 0x1.0p-54;
  }

  // Standard normal via Box-Muller from counters (2c, 2c+1).
  double gauss(std::uint64_t counter) const {
    const double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
};

}  // namespace qlbayes::rng
