#pragma once

// Sequential Monte Carlo ABC with top-quantile acceptance.
//
// Each round simulates N parameter vectors, keeps the M = ceil(accept * N)
// closest to the observation, and weights them by prior / kernel mixture.
// The next round resamples the population multinomially, perturbs each
// resample with an isotropic Gaussian kernel, and reverts any proposal that
// leaves the prior box. The distance is pluggable: 1 - block Pearson, or the
// L2 distance between learned summaries.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hicentro/genome.hpp"
#include "hicentro/metrics.hpp"

namespace hicentro {

// Simulates and scores a batch; simulation n must draw from Rng(seeds[n]).
using BatchDistance =
    std::function<std::vector<double>(const Samples& thetas, std::span<const std::uint64_t> seeds)>;

struct ParticlePopulation {
  std::size_t round{0};
  Samples particles;
  std::vector<double> weights;    // normalized
  std::vector<double> distances;  // distance of each accepted particle
  double threshold{0.0};          // largest accepted distance (implicit epsilon)

  [[nodiscard]] std::size_t size() const noexcept { return particles.size(); }
};

struct AbcConfig {
  std::size_t rounds{11};
  std::size_t n_per_round{1000};
  double accept_fraction{0.05};
  double kernel_sd{32000.0};  // bp; the map resolution by default
  std::uint64_t seed{0};
  bool verbose{false};
};

// ceil(accept_fraction * n).
[[nodiscard]] std::size_t accepted_count(std::size_t n, double accept_fraction);

// Indices of the m smallest distances, ties kept in generation order.
[[nodiscard]] std::vector<std::size_t> select_smallest(std::span<const double> distances, std::size_t m);

// Round 0: N prior draws scored, best fraction kept, uniform weights.
[[nodiscard]] ParticlePopulation abc_round0(const BoxPrior& prior, const BatchDistance& distance, std::size_t n,
                                            double accept_fraction, Rng& rng);

// Multinomial resample of M anchors, then proposal n perturbs anchor n mod M;
// out-of-box proposals revert to their anchor.
[[nodiscard]] Samples perturb(const ParticlePopulation& population, const BoxPrior& prior, double kernel_sd,
                              std::size_t n, Rng& rng);

// w_m proportional to prior(theta_m) / sum_k w_k K(theta_m; theta_k), normalized.
[[nodiscard]] std::vector<double> compute_weights(const Samples& accepted, const ParticlePopulation& previous,
                                                  const BoxPrior& prior, double kernel_sd);

// One SMC round t >= 1 from the previous population.
[[nodiscard]] ParticlePopulation abc_round(const ParticlePopulation& previous, const BoxPrior& prior,
                                           const BatchDistance& distance, std::size_t n, double accept_fraction,
                                           double kernel_sd, Rng& rng);

[[nodiscard]] std::vector<ParticlePopulation> run_smc_abc(const BoxPrior& prior, const BatchDistance& distance,
                                                          const AbcConfig& config);

}  // namespace hicentro
