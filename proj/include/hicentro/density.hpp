#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hicentro/genome.hpp"
#include "hicentro/metrics.hpp"

namespace hicentro {

struct DensityGrid {
  std::vector<double> x;
  std::vector<double> density;
  double bandwidth{};
};

// Per-dimension weighted Gaussian KDE on `points` evenly spaced nodes over
// [lower, upper]. Bandwidth is Silverman's rule on the weighted spread and the
// Kish effective size, floored at two grid steps. Kernels are reflected at both
// bounds and the curve is renormalized to unit trapezoid area.
[[nodiscard]] std::vector<DensityGrid> export_density(const Samples& samples, std::span<const double> weights,
                                                      const BoxPrior& support, std::size_t points = 512);

[[nodiscard]] double trapezoid(std::span<const double> x, std::span<const double> y);

}  // namespace hicentro
