#include "hicentro/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "hicentro/error.hpp"

namespace hicentro {

namespace {

void check_samples(const Samples& samples, std::span<const double> theta_ref) {
  if (samples.empty()) throw DomainError("metrics: empty sample set");
  for (const auto& s : samples) {
    if (s.size() != theta_ref.size()) throw DomainError("metrics: sample dimension mismatch");
  }
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) acc += (a[d] - b[d]) * (a[d] - b[d]);
  return acc;
}

std::span<const double> flat(const Block& b) { return {b.data(), static_cast<std::size_t>(b.size())}; }

void check_same_shape(const Block& a, const Block& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DomainError("metrics: block geometry mismatch");
}

}  // namespace

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DomainError("pearson: length mismatch");
  const auto n = static_cast<double>(a.size());
  if (a.empty()) return 0.0;
  double ma = 0.0, mb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double da = a[k] - ma;
    const double db = b[k] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double block_pearson(const ContactMap& c, const ContactMap& ref) {
  if (!(c.genome() == ref.genome())) throw DomainError("block_pearson: genome mismatch");
  if (c.block_count() == 0) throw DomainError("block_pearson: no blocks");
  double acc = 0.0;
  for (std::size_t k = 0; k < c.block_count(); ++k) {
    check_same_shape(c.blocks()[k], ref.blocks()[k]);
    acc += pearson(flat(c.blocks()[k]), flat(ref.blocks()[k]));
  }
  return acc / static_cast<double>(c.block_count());
}

double block_pearson(const BlockRow& c, const BlockRow& ref) {
  if (c.chromosome != ref.chromosome || c.blocks.size() != ref.blocks.size() || c.blocks.empty()) {
    throw DomainError("block_pearson: block row mismatch");
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < c.blocks.size(); ++k) {
    check_same_shape(c.blocks[k], ref.blocks[k]);
    acc += pearson(flat(c.blocks[k]), flat(ref.blocks[k]));
  }
  return acc / static_cast<double>(c.blocks.size());
}

double row_pearson(const ContactMap& c, const ContactMap& ref) {
  if (!(c.genome() == ref.genome())) throw DomainError("row_pearson: genome mismatch");
  const GenomeSpec& g = c.genome();
  std::vector<double> a, b;
  double acc = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::vector<Block> ca, cb;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (j == i) continue;
      ca.push_back(c.oriented_block(i, j));
      cb.push_back(ref.oriented_block(i, j));
    }
    for (std::size_t x = 0; x < g.bins(i); ++x) {
      a.clear();
      b.clear();
      for (std::size_t k = 0; k < ca.size(); ++k) {
        for (Eigen::Index y = 0; y < ca[k].cols(); ++y) {
          a.push_back(ca[k](static_cast<Eigen::Index>(x), y));
          b.push_back(cb[k](static_cast<Eigen::Index>(x), y));
        }
      }
      const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
      const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
      if (*amin == *amax || *bmin == *bmax) continue;
      acc += pearson(a, b);
      ++used;
    }
  }
  return used ? acc / static_cast<double>(used) : 0.0;
}

double euclidean(std::span<const double> theta, std::span<const double> theta_ref) {
  if (theta.size() != theta_ref.size()) throw DomainError("euclidean: dimension mismatch");
  return std::sqrt(squared_distance(theta, theta_ref));
}

double euclidean_mean(const Samples& samples, std::span<const double> theta_ref) {
  check_samples(samples, theta_ref);
  double acc = 0.0;
  for (const auto& s : samples) acc += euclidean(s, theta_ref);
  return acc / static_cast<double>(samples.size());
}

double wasserstein2_to_dirac(const Samples& samples, std::span<const double> theta_ref) {
  check_samples(samples, theta_ref);
  double acc = 0.0;
  for (const auto& s : samples) acc += squared_distance(s, theta_ref);
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

double median_heuristic(const Samples& samples, std::span<const double> theta_ref) {
  check_samples(samples, theta_ref);
  std::vector<std::span<const double>> pts(samples.begin(), samples.end());
  pts.push_back(theta_ref);
  std::vector<double> dists;
  dists.reserve(pts.size() * (pts.size() - 1) / 2);
  for (std::size_t a = 0; a < pts.size(); ++a)
    for (std::size_t b = a + 1; b < pts.size(); ++b) dists.push_back(std::sqrt(squared_distance(pts[a], pts[b])));
  const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  return *mid > 0.0 ? *mid : 1.0;
}

double mmd_to_dirac(const Samples& samples, std::span<const double> theta_ref, Bandwidth bandwidth) {
  check_samples(samples, theta_ref);
  const double h = bandwidth.value ? *bandwidth.value : median_heuristic(samples, theta_ref);
  if (!(h > 0.0)) throw DomainError("mmd_to_dirac: bandwidth must be positive");
  const double inv = 1.0 / (2.0 * h * h);
  const std::size_t n = samples.size();
  // Symmetric kernel matrix: diagonal terms are exactly 1.
  double kxx = static_cast<double>(n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) kxx += 2.0 * std::exp(-squared_distance(samples[a], samples[b]) * inv);
  double kxy = 0.0;
  for (const auto& s : samples) kxy += std::exp(-squared_distance(s, theta_ref) * inv);
  const double nn = static_cast<double>(n);
  const double mmd2 = kxx / (nn * nn) - 2.0 * kxy / nn + 1.0;
  return std::sqrt(std::max(mmd2, 0.0));
}

std::vector<double> weighted_mean(const Samples& samples, std::span<const double> weights) {
  if (samples.empty()) throw DomainError("weighted_mean: empty sample set");
  if (!weights.empty() && weights.size() != samples.size()) throw DomainError("weighted_mean: weight count mismatch");
  const std::size_t dim = samples.front().size();
  std::vector<double> mean(dim, 0.0);
  double total = 0.0;
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const double w = weights.empty() ? 1.0 : weights[n];
    total += w;
    for (std::size_t d = 0; d < dim; ++d) mean[d] += w * samples[n][d];
  }
  if (!(total > 0.0)) throw DomainError("weighted_mean: weights sum to zero");
  for (double& m : mean) m /= total;
  return mean;
}

std::vector<double> per_dim_abs_error(const Samples& samples, std::span<const double> weights,
                                      std::span<const double> theta_ref) {
  check_samples(samples, theta_ref);
  auto mean = weighted_mean(samples, weights);
  for (std::size_t d = 0; d < mean.size(); ++d) mean[d] = std::abs(mean[d] - theta_ref[d]);
  return mean;
}

nlohmann::json SampleMetrics::to_json() const {
  return {{"euclidean_mean", euclidean_mean},
          {"per_dim_abs_error", per_dim_abs_error},
          {"mmd", mmd},
          {"w2", w2},
          {"n_samples", n_samples}};
}

SampleMetrics evaluate_samples(const Samples& samples, std::span<const double> weights,
                               std::span<const double> theta_ref) {
  SampleMetrics m;
  m.euclidean_mean = euclidean_mean(samples, theta_ref);
  m.per_dim_abs_error = per_dim_abs_error(samples, weights, theta_ref);
  m.mmd = mmd_to_dirac(samples, theta_ref);
  m.w2 = wasserstein2_to_dirac(samples, theta_ref);
  m.n_samples = samples.size();
  return m;
}

}  // namespace hicentro
