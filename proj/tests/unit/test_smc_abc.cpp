#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "hicentro/error.hpp"
#include "hicentro/hic_io.hpp"
#include "hicentro/simulator.hpp"
#include "hicentro/smc_abc.hpp"
#include "oracles.hpp"

using namespace hicentro;
using namespace hicentro::oracle;

namespace {

BatchDistance to_point(std::vector<double> target) {
  return [target](const Samples& thetas, std::span<const std::uint64_t>) {
    std::vector<double> d;
    for (const auto& t : thetas) d.push_back(euclidean(t, target));
    return d;
  };
}

BatchDistance pearson_distance(const GenomeSpec& g, ContactMap ref, SimOptions options = {}) {
  return [g, ref = std::move(ref), options](const Samples& thetas, std::span<const std::uint64_t> seeds) {
    std::vector<double> d;
    for (std::size_t n = 0; n < thetas.size(); ++n) {
      Rng rng(seeds[n]);
      d.push_back(1.0 - block_pearson(simulate_map(g, thetas[n], rng, options), ref));
    }
    return d;
  };
}

}  // namespace

TEST_CASE("accepted count is the ceiling of the fraction") {
  CHECK(accepted_count(1000, 0.05) == 50);
  CHECK(accepted_count(20, 0.05) == 1);
  CHECK(accepted_count(101, 0.05) == 6);
  CHECK_THROWS_AS((void)accepted_count(10, 0.0), ConfigError);
  const BoxPrior prior = BoxPrior::from_genome(yeast_small_genome());
  Rng rng(1);
  CHECK_THROWS_AS((void)abc_round0(prior, to_point({1, 1, 1}), 19, 0.05, rng), DomainError);
}

TEST_CASE("selection keeps exactly the smallest distances in generation order") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> d(200);
    for (double& v : d) v = std::floor(uniform(rng, 0, 30));  // many ties
    const auto idx = select_smallest(d, 10);
    std::vector<std::pair<double, std::size_t>> full;
    for (std::size_t k = 0; k < d.size(); ++k) full.emplace_back(d[k], k);
    std::sort(full.begin(), full.end());
    for (std::size_t k = 0; k < 10; ++k) CHECK(idx[k] == full[k].second);
  }
}

TEST_CASE("round zero keeps the zero-distance draw with uniform weights") {
  const BoxPrior prior = BoxPrior::from_genome(yeast_small_genome());
  Rng probe(3);
  Samples draws;
  for (int k = 0; k < 1000; ++k) draws.push_back(prior.sample(probe));
  const std::vector<double> star = draws[417];
  Rng rng(3);
  const ParticlePopulation pop = abc_round0(prior, to_point(star), 1000, 0.05, rng);
  CHECK(pop.size() == 50);
  CHECK(pop.particles.front() == star);
  CHECK(pop.distances.front() == 0.0);
  for (double w : pop.weights) CHECK(w == 1.0 / 50.0);
  CHECK(pop.threshold == pop.distances.back());
  CHECK(std::is_sorted(pop.distances.begin(), pop.distances.end()));
}

TEST_CASE("zero kernel width returns exact resamples") {
  const BoxPrior prior = BoxPrior::from_genome(yeast_small_genome());
  Rng rng(4);
  const ParticlePopulation pop = random_population(prior, 7, rng, 20000);
  const Samples out = perturb(pop, prior, 0.0, 500, rng);
  CHECK(out.size() == 500);
  for (const auto& t : out) CHECK(std::find(pop.particles.begin(), pop.particles.end(), t) != pop.particles.end());

  ParticlePopulation single;
  single.particles = {{100000, 400000, 150000}};
  single.weights = {1.0};
  for (const auto& t : perturb(single, prior, 32000, 300, rng)) {
    CHECK(prior.contains(t));
    CHECK(euclidean(t, single.particles[0]) < 10 * 32000);
  }
}

TEST_CASE("proposal n uses resample n mod M") {
  const BoxPrior prior = BoxPrior::from_genome(yeast_small_genome());
  Rng rng(5);
  const ParticlePopulation pop = random_population(prior, 5, rng, 30000);
  const Samples out = perturb(pop, prior, 0.0, 23, rng);
  for (std::size_t n = 5; n < out.size(); ++n) CHECK(out[n] == out[n % 5]);
}

TEST_CASE("perturbation offsets have the kernel spread") {
  const GenomeSpec g = yeast_small_genome();
  const BoxPrior prior = BoxPrior::from_genome(g);
  ParticlePopulation pop;
  pop.particles = {{115000, 406000, 158000}};
  pop.weights = {1.0};
  Rng rng(6);
  const double r = 32000;
  const Samples out = perturb(pop, prior, r, 100000, rng);
  double sq = 0;
  std::size_t count = 0, reverted = 0;
  for (const auto& t : out) {
    if (t == pop.particles[0]) {
      ++reverted;
      continue;
    }
    CHECK(prior.contains(t));
    for (std::size_t d = 0; d < 3; ++d) {
      const double off = t[d] - pop.particles[0][d];
      sq += off * off;
      ++count;
    }
  }
  CHECK(reverted < 100);
  const double sd = std::sqrt(sq / static_cast<double>(count));
  CHECK(std::abs(sd - r) < 0.02 * r);
}

TEST_CASE("out of box proposals revert the whole vector") {
  const BoxPrior prior = BoxPrior::from_genome(yeast_small_genome());
  ParticlePopulation edge;
  edge.particles = {{2.0, 400000, 150000}};
  edge.weights = {1.0};
  Rng rng(7);
  std::size_t reverted = 0;
  for (const auto& t : perturb(edge, prior, 32000, 2000, rng)) {
    CHECK(prior.contains(t));
    if (t == edge.particles[0]) ++reverted;
  }
  // Roughly half the draws push the first coordinate below 1.
  CHECK(reverted > 800);
  CHECK(reverted < 1200);
}

TEST_CASE("weights match the brute force formula") {
  const BoxPrior prior = BoxPrior::from_genome(yeast_small_genome());
  Rng rng(8);
  ParticlePopulation one;
  one.particles = {{100000, 300000, 200000}};
  one.weights = {1.0};
  CHECK(compute_weights(one.particles, one, prior, 32000) == std::vector<double>{1.0});

  for (std::size_t m : {3u, 10u, 50u}) {
    const ParticlePopulation prev = random_population(prior, m, rng, 30000);
    const Samples accepted = perturb(prev, prior, 32000, m, rng);
    const auto w = compute_weights(accepted, prev, prior, 32000);
    const auto oracle = brute_weights(accepted, prev, prior, 32000);
    for (std::size_t k = 0; k < m; ++k) CHECK(std::abs(w[k] - oracle[k]) <= 1e-12);
    CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("uniform prior leaves only the kernel mixture") {
  const BoxPrior prior = BoxPrior::from_genome(yeast_small_genome());
  Rng rng(9);
  const ParticlePopulation prev = random_population(prior, 6, rng, 20000);
  const Samples accepted = perturb(prev, prior, 32000, 6, rng);
  const auto w = compute_weights(accepted, prev, prior, 32000);
  std::vector<double> inv;
  for (const auto& a : accepted) {
    double den = 0;
    for (std::size_t k = 0; k < prev.size(); ++k) {
      const double d = euclidean(a, prev.particles[k]);
      den += prev.weights[k] * std::exp(-d * d / (2.0 * 32000.0 * 32000.0));
    }
    inv.push_back(1.0 / den);
  }
  const double total = std::accumulate(inv.begin(), inv.end(), 0.0);
  for (std::size_t k = 0; k < w.size(); ++k) CHECK(w[k] == doctest::Approx(inv[k] / total).epsilon(1e-12));
}

TEST_CASE("one round reduces to round zero") {
  const BoxPrior prior = BoxPrior::from_genome(yeast_small_genome());
  const auto dist = to_point({100000, 300000, 200000});
  AbcConfig cfg;
  cfg.rounds = 1;
  cfg.n_per_round = 200;
  cfg.seed = 10;
  const auto rounds = run_smc_abc(prior, dist, cfg);
  Rng rng(10);
  const auto direct = abc_round0(prior, dist, 200, 0.05, rng);
  REQUIRE(rounds.size() == 1);
  CHECK(rounds[0].particles == direct.particles);
}

TEST_CASE("pearson selection is invariant to affine changes of the reference") {
  const GenomeSpec g = yeast_small_genome();
  const Reference ref = make_reference(g, {151000, 238000, 114000}, 11, ReferenceMode::raw);
  ContactMap shifted = ref.map;
  double a = 0.25;
  for (Block& b : shifted.blocks()) {
    b = (a * b.array() + 8.0).matrix();
    a *= 4.0;
  }
  const BoxPrior prior = BoxPrior::from_genome(g);
  Rng r1(12), r2(12);
  const auto p1 = abc_round0(prior, pearson_distance(g, ref.map), 1000, 0.05, r1);
  const auto p2 = abc_round0(prior, pearson_distance(g, shifted), 1000, 0.05, r2);
  CHECK(p1.particles == p2.particles);
}

TEST_CASE("noiseless pearson abc recovers the centromeres") {
  const GenomeSpec g = yeast_small_genome();
  const CentromereVector theta{151000, 238000, 114000};
  const SimOptions quiet{0.0};
  Rng sim(13);
  const ContactMap ref = simulate_map(g, theta, sim, quiet);
  AbcConfig cfg;
  cfg.seed = 14;
  const BoxPrior prior = BoxPrior::from_genome(g);
  const auto rounds = run_smc_abc(prior, pearson_distance(g, ref, quiet), cfg);
  REQUIRE(rounds.size() == 11);
  for (const auto& pop : rounds) {
    CHECK(pop.size() == 50);
    for (const auto& p : pop.particles) REQUIRE(prior.contains(p));
    CHECK(std::accumulate(pop.weights.begin(), pop.weights.end(), 0.0) == doctest::Approx(1.0));
  }
  const auto err = per_dim_abs_error(rounds.back().particles, {}, theta);
  for (double e : err) CHECK(e < 32000.0);
}

TEST_CASE("abc on a perfect summary concentrates within the kernel scale") {
  const BoxPrior prior = BoxPrior::from_genome(yeast_small_genome());
  const std::vector<double> theta{151000, 238000, 114000};
  AbcConfig cfg;
  cfg.seed = 15;
  const auto rounds = run_smc_abc(prior, to_point(theta), cfg);
  const auto& last = rounds.back();
  CHECK(wasserstein2_to_dirac(last.particles, theta) <= cfg.kernel_sd);
  CHECK(last.threshold <= rounds.front().threshold);
}
