#pragma once

#include <cstdint>
#include <random>

namespace hicentro {

// Project-wide generator. Every stochastic operation takes one by reference.
using Rng = std::mt19937_64;

// SplitMix64 finalizer; maps (seed, stream) to an independent child seed so
// parallel tasks get reproducible streams regardless of scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) { return Rng{derive_seed(seed, stream)}; }

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>{lo, hi}(rng);
}

inline double normal(Rng& rng, double mean, double sd) {
  return std::normal_distribution<double>{mean, sd}(rng);
}

}  // namespace hicentro
