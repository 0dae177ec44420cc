#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "hicentro/genome.hpp"

namespace hicentro {

using Samples = std::vector<std::vector<double>>;

// Pearson correlation of two equally sized vectors; 0 when either side has
// zero variance.
[[nodiscard]] double pearson(std::span<const double> a, std::span<const double> b);

// Mean over upper trans blocks of the flattened-block Pearson correlation.
[[nodiscard]] double block_pearson(const ContactMap& c, const ContactMap& ref);
// Same criterion restricted to one line of blocks.
[[nodiscard]] double block_pearson(const BlockRow& c, const BlockRow& ref);

// Pearson per row of the assembled trans matrix, averaged over rows with
// nonzero variance on both sides; 0 when no row qualifies.
[[nodiscard]] double row_pearson(const ContactMap& c, const ContactMap& ref);

[[nodiscard]] double euclidean(std::span<const double> theta, std::span<const double> theta_ref);
[[nodiscard]] double euclidean_mean(const Samples& samples, std::span<const double> theta_ref);

// W2 to a point mass: root mean squared distance.
[[nodiscard]] double wasserstein2_to_dirac(const Samples& samples, std::span<const double> theta_ref);

// Gaussian-kernel bandwidth; unset means the median heuristic.
struct Bandwidth {
  std::optional<double> value;
};

// Median pairwise distance over samples plus theta_ref (1 if degenerate).
[[nodiscard]] double median_heuristic(const Samples& samples, std::span<const double> theta_ref);
[[nodiscard]] double mmd_to_dirac(const Samples& samples, std::span<const double> theta_ref, Bandwidth bandwidth = {});

// |weighted mean - theta_ref| per dimension. Empty weights mean uniform.
[[nodiscard]] std::vector<double> per_dim_abs_error(const Samples& samples, std::span<const double> weights,
                                                    std::span<const double> theta_ref);

[[nodiscard]] std::vector<double> weighted_mean(const Samples& samples, std::span<const double> weights);

struct SampleMetrics {
  double euclidean_mean{};
  std::vector<double> per_dim_abs_error;
  double mmd{};
  double w2{};
  std::size_t n_samples{};

  [[nodiscard]] nlohmann::json to_json() const;
};

[[nodiscard]] SampleMetrics evaluate_samples(const Samples& samples, std::span<const double> weights,
                                             std::span<const double> theta_ref);

}  // namespace hicentro
