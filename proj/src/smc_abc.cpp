#include "hicentro/smc_abc.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <numeric>

#include "hicentro/error.hpp"

namespace hicentro {

namespace {

std::vector<std::uint64_t> simulation_seeds(Rng& rng, std::size_t n) {
  const std::uint64_t round_seed = rng();
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t k = 0; k < n; ++k) seeds[k] = derive_seed(round_seed, k);
  return seeds;
}

ParticlePopulation keep_best(const Samples& thetas, const std::vector<double>& distances, std::size_t m,
                             std::size_t round) {
  if (distances.size() != thetas.size()) throw DomainError("smc-abc: distance count does not match batch size");
  for (double d : distances)
    if (std::isnan(d)) throw DomainError("smc-abc: distance function returned NaN");
  ParticlePopulation pop;
  pop.round = round;
  for (auto k : select_smallest(distances, m)) {
    pop.particles.push_back(thetas[k]);
    pop.distances.push_back(distances[k]);
  }
  pop.threshold = pop.distances.back();
  return pop;
}

}  // namespace

std::size_t accepted_count(std::size_t n, double accept_fraction) {
  if (!(accept_fraction > 0.0 && accept_fraction <= 1.0)) throw ConfigError("smc-abc: accept fraction must be in (0, 1]");
  return static_cast<std::size_t>(std::ceil(accept_fraction * static_cast<double>(n) - 1e-9));
}

std::vector<std::size_t> select_smallest(std::span<const double> distances, std::size_t m) {
  std::vector<std::size_t> idx(distances.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return distances[a] < distances[b]; });
  idx.resize(std::min(m, idx.size()));
  return idx;
}

ParticlePopulation abc_round0(const BoxPrior& prior, const BatchDistance& distance, std::size_t n,
                              double accept_fraction, Rng& rng) {
  if (n < 20) throw DomainError("smc-abc: at least 20 simulations per round are required");
  const std::size_t m = accepted_count(n, accept_fraction);
  Samples thetas;
  thetas.reserve(n);
  for (std::size_t k = 0; k < n; ++k) thetas.push_back(prior.sample(rng));
  const auto seeds = simulation_seeds(rng, n);
  ParticlePopulation pop = keep_best(thetas, distance(thetas, seeds), m, 0);
  pop.weights.assign(pop.size(), 1.0 / static_cast<double>(pop.size()));
  return pop;
}

Samples perturb(const ParticlePopulation& population, const BoxPrior& prior, double kernel_sd, std::size_t n,
                Rng& rng) {
  const std::size_t m = population.size();
  if (m == 0) throw DomainError("perturb: empty population");
  if (population.weights.size() != m) throw DomainError("perturb: weights do not match particles");
  if (!(kernel_sd >= 0.0)) throw DomainError("perturb: kernel sd must be non-negative");

  std::vector<double> cdf(m);
  std::partial_sum(population.weights.begin(), population.weights.end(), cdf.begin());
  const double total = cdf.back();
  if (!(total > 0.0)) throw DomainError("perturb: weights sum to zero");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<std::size_t> anchors(m);
  for (auto& a : anchors) {
    const double target = u01(rng) * total;
    a = std::min<std::size_t>(static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), target) - cdf.begin()), m - 1);
  }

  std::normal_distribution<double> noise(0.0, kernel_sd > 0.0 ? kernel_sd : 1.0);
  Samples out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& anchor = population.particles[anchors[k % m]];
    std::vector<double> theta = anchor;
    if (kernel_sd > 0.0) {
      for (double& v : theta) v += noise(rng);
      if (!prior.contains(theta)) theta = anchor;
    }
    out.push_back(std::move(theta));
  }
  return out;
}

std::vector<double> compute_weights(const Samples& accepted, const ParticlePopulation& previous, const BoxPrior& prior,
                                    double kernel_sd) {
  if (previous.size() == 0 || previous.weights.size() != previous.size()) {
    throw DomainError("compute_weights: malformed previous population");
  }
  if (!(kernel_sd > 0.0)) throw DomainError("compute_weights: kernel sd must be positive");
  const std::size_t dim = prior.dim();
  const double log_norm = -0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi * kernel_sd * kernel_sd);
  std::vector<double> log_w(accepted.size());
  std::vector<double> terms(previous.size());
  for (std::size_t a = 0; a < accepted.size(); ++a) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < previous.size(); ++k) {
      double sq = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = accepted[a][d] - previous.particles[k][d];
        sq += diff * diff;
      }
      terms[k] = std::log(previous.weights[k]) + log_norm - 0.5 * sq / (kernel_sd * kernel_sd);
      mx = std::max(mx, terms[k]);
    }
    if (!std::isfinite(mx)) throw DomainError("compute_weights: zero kernel mixture denominator");
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - mx);
    log_w[a] = prior.log_pdf(accepted[a]) - (mx + std::log(acc));
  }
  const double top = *std::max_element(log_w.begin(), log_w.end());
  if (!std::isfinite(top)) throw DomainError("compute_weights: every accepted particle has zero weight");
  std::vector<double> w(accepted.size());
  double total = 0.0;
  for (std::size_t a = 0; a < w.size(); ++a) total += (w[a] = std::exp(log_w[a] - top));
  for (double& v : w) v /= total;
  return w;
}

ParticlePopulation abc_round(const ParticlePopulation& previous, const BoxPrior& prior, const BatchDistance& distance,
                             std::size_t n, double accept_fraction, double kernel_sd, Rng& rng) {
  if (n < 20) throw DomainError("smc-abc: at least 20 simulations per round are required");
  const Samples thetas = perturb(previous, prior, kernel_sd, n, rng);
  const auto seeds = simulation_seeds(rng, n);
  ParticlePopulation pop = keep_best(thetas, distance(thetas, seeds), accepted_count(n, accept_fraction), previous.round + 1);
  pop.weights = compute_weights(pop.particles, previous, prior, kernel_sd);
  return pop;
}

std::vector<ParticlePopulation> run_smc_abc(const BoxPrior& prior, const BatchDistance& distance,
                                            const AbcConfig& config) {
  if (config.rounds == 0) throw ConfigError("smc-abc: at least one round is required");
  Rng rng(config.seed);
  std::vector<ParticlePopulation> rounds;
  rounds.push_back(abc_round0(prior, distance, config.n_per_round, config.accept_fraction, rng));
  for (std::size_t t = 1; t < config.rounds; ++t) {
    if (config.verbose) std::cerr << "[abc] round " << t - 1 << " threshold " << rounds.back().threshold << '\n';
    rounds.push_back(abc_round(rounds.back(), prior, distance, config.n_per_round, config.accept_fraction,
                               config.kernel_sd, rng));
  }
  return rounds;
}

}  // namespace hicentro
