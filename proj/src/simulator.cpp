#include "hicentro/simulator.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "hicentro/error.hpp"

namespace hicentro {

namespace {

// exp(-(x + .5 - mu)^2 / (2 sigma2)) for every pixel of one axis.
Eigen::VectorXd axis_profile(std::size_t n, double mu, double sigma2) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(n));
  for (std::size_t x = 0; x < n; ++x) {
    const double d = static_cast<double>(x) + 0.5 - mu;
    g[static_cast<Eigen::Index>(x)] = std::exp(-d * d / (2.0 * sigma2));
  }
  return g;
}

void apply_options(SimParams& params, const SimOptions& options) {
  if (options.noise_frac) params.noise_frac = *options.noise_frac;
  params.validate();
}

}  // namespace

void SimParams::validate() const {
  if (!(sigma2 >= 0.1 && sigma2 <= 10.0) || alpha < 1 || alpha > 1000 || !(noise_frac >= 0.0 && noise_frac <= 1.0)) {
    std::ostringstream msg;
    msg << "simulator: invalid parameters sigma2=" << sigma2 << " alpha=" << alpha << " noise_frac=" << noise_frac;
    throw DomainError(msg.str());
  }
}

SimParams sample_sim_params(Rng& rng) {
  SimParams p;
  p.sigma2 = uniform(rng, 0.1, 10.0);
  p.alpha = std::uniform_int_distribution<int>{1, 1000}(rng);
  p.noise_frac = 0.10;
  return p;
}

Block simulate_block(const GenomeSpec& spec, std::size_t i, std::size_t j, double theta_i, double theta_j,
                     const SimParams& params, Rng& rng) {
  const auto [rows, cols] = block_shape(spec, i, j);
  if (rows == 0 || cols == 0) throw DomainError("simulate_block: empty block");
  const double r = static_cast<double>(spec.resolution());
  const double norm = static_cast<double>(params.alpha) / (2.0 * std::numbers::pi * params.sigma2);

  // The isotropic Gaussian is separable: outer product of the two axis profiles.
  const Eigen::VectorXd gx = axis_profile(rows, theta_i / r, params.sigma2);
  const Eigen::VectorXd gy = axis_profile(cols, theta_j / r, params.sigma2);
  Block block = norm * (gx * gy.transpose());

  if (params.noise_frac > 0.0) {
    const double level = 0.5 * params.noise_frac * block.maxCoeff();
    std::normal_distribution<double> noise{level, level};
    for (Eigen::Index x = 0; x < block.rows(); ++x)
      for (Eigen::Index y = 0; y < block.cols(); ++y) block(x, y) += noise(rng);
    block = block.cwiseMax(0.0);
  }
  return block;
}

ContactMap simulate_map(const GenomeSpec& spec, const CentromereVector& theta, const SimParams& params, Rng& rng) {
  if (!in_prior_support(spec, theta)) throw DomainError("simulate_map: theta outside prior support");
  ContactMap map(spec);
  for (auto [i, j] : spec.pairs()) map.block(i, j) = simulate_block(spec, i, j, theta[i], theta[j], params, rng);
  return map;
}

ContactMap simulate_map(const GenomeSpec& spec, const CentromereVector& theta, Rng& rng,
                        const SimOptions& options) {
  SimParams params = sample_sim_params(rng);
  apply_options(params, options);
  return simulate_map(spec, theta, params, rng);
}

BlockRow simulate_block_row(const GenomeSpec& spec, std::size_t i, double theta_i, Rng& rng,
                            const SimOptions& options) {
  if (!(theta_i >= 1.0 && theta_i <= static_cast<double>(spec.length(i) - 1))) {
    throw DomainError("simulate_block_row: theta outside prior support");
  }
  SimParams params = sample_sim_params(rng);
  apply_options(params, options);
  BlockRow row;
  row.chromosome = i;
  for (std::size_t j = 0; j < spec.size(); ++j) {
    if (j == i) continue;
    const double theta_j = uniform(rng, 1.0, static_cast<double>(spec.length(j) - 1));
    row.partners.push_back(j);
    row.blocks.push_back(simulate_block(spec, i, j, theta_i, theta_j, params, rng));
  }
  return row;
}

}  // namespace hicentro
