#include "hicentro/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hicentro/error.hpp"

namespace hicentro {

double trapezoid(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("trapezoid: length mismatch");
  double s = 0.0;
  for (std::size_t k = 1; k < x.size(); ++k) s += 0.5 * (x[k] - x[k - 1]) * (y[k] + y[k - 1]);
  return s;
}

std::vector<DensityGrid> export_density(const Samples& samples, std::span<const double> weights,
                                        const BoxPrior& support, std::size_t points) {
  if (samples.empty()) throw DomainError("export_density: no samples");
  if (points < 2) throw DomainError("export_density: grid needs at least two points");
  const std::size_t n = samples.size(), D = support.dim();
  if (!weights.empty() && weights.size() != n) throw DomainError("export_density: weights do not match samples");

  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  if (!weights.empty()) {
    double total = 0.0;
    for (double v : weights) {
      if (!(v >= 0.0)) throw DomainError("export_density: negative weight");
      total += v;
    }
    if (!(total > 0.0)) throw DomainError("export_density: weights sum to zero");
    for (std::size_t k = 0; k < n; ++k) w[k] = weights[k] / total;
  }
  double sum_sq = 0.0;
  for (double v : w) sum_sq += v * v;
  const double n_eff = 1.0 / sum_sq;

  std::vector<DensityGrid> out(D);
  for (std::size_t d = 0; d < D; ++d) {
    const double lo = support.lower[d], hi = support.upper[d];
    const double step = (hi - lo) / static_cast<double>(points - 1);
    double mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (samples[k].size() != D) throw DomainError("export_density: sample has the wrong length");
      mean += w[k] * samples[k][d];
    }
    double var = 0.0;
    for (std::size_t k = 0; k < n; ++k) var += w[k] * (samples[k][d] - mean) * (samples[k][d] - mean);
    const double h = std::max(1.06 * std::sqrt(var) * std::pow(n_eff, -0.2), 2.0 * step);

    DensityGrid& g = out[d];
    g.bandwidth = h;
    g.x.resize(points);
    g.density.assign(points, 0.0);
    for (std::size_t p = 0; p < points; ++p) g.x[p] = p + 1 == points ? hi : lo + step * static_cast<double>(p);
    const double norm = 1.0 / (h * std::sqrt(2.0 * std::numbers::pi));
    for (std::size_t k = 0; k < n; ++k) {
      const double c = samples[k][d];
      const double mirrors[3] = {c, 2.0 * lo - c, 2.0 * hi - c};
      for (std::size_t p = 0; p < points; ++p) {
        double acc = 0.0;
        for (double m : mirrors) {
          const double z = (g.x[p] - m) / h;
          acc += std::exp(-0.5 * z * z);
        }
        g.density[p] += w[k] * norm * acc;
      }
    }
    const double area = trapezoid(g.x, g.density);
    if (area > 0.0)
      for (double& v : g.density) v /= area;
  }
  return out;
}

}  // namespace hicentro
