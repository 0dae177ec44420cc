#pragma once

#include <cstddef>
#include <optional>

#include "hicentro/genome.hpp"
#include "hicentro/random.hpp"

namespace hicentro {

// Peak shape shared by every block of one simulated map.
struct SimParams {
  double sigma2{1.0};       // peak variance, in bin^2
  int alpha{1};             // intensity factor
  double noise_frac{0.10};  // noise mean + sd as a fraction of the block max

  void validate() const;
};

// Overrides applied after the per-map parameter draw.
struct SimOptions {
  std::optional<double> noise_frac;
};

// sigma2 ~ U(0.1, 10), alpha ~ U{1..1000}, noise_frac = 0.10.
[[nodiscard]] SimParams sample_sim_params(Rng& rng);

// Block pairing chromosome i (rows) with chromosome j (columns), i != j.
// Entry (x, y) is alpha * N((x + .5, y + .5); (theta_i / r, theta_j / r), sigma2 I)
// plus N(0.05 m, (0.05 m)^2) noise, m the noiseless block max, clamped at zero.
// Noise is drawn row-major from rng and only when noise_frac > 0.
[[nodiscard]] Block simulate_block(const GenomeSpec& spec, std::size_t i, std::size_t j, double theta_i,
                                   double theta_j, const SimParams& params, Rng& rng);

[[nodiscard]] ContactMap simulate_map(const GenomeSpec& spec, const CentromereVector& theta,
                                      const SimParams& params, Rng& rng);
[[nodiscard]] ContactMap simulate_map(const GenomeSpec& spec, const CentromereVector& theta, Rng& rng,
                                      const SimOptions& options = {});

// Row i of trans blocks. Partner centromeres are fresh prior draws.
[[nodiscard]] BlockRow simulate_block_row(const GenomeSpec& spec, std::size_t i, double theta_i, Rng& rng,
                                          const SimOptions& options = {});

}  // namespace hicentro
