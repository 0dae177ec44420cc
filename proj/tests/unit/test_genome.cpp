#include <doctest.h>

#include <cmath>
#include <limits>

#include "hicentro/error.hpp"
#include "hicentro/genome.hpp"

using namespace hicentro;

namespace {
GenomeSpec toy() { return GenomeSpec({{"a", 64000}, {"b", 96000}, {"c", 100001}}, 32000); }
}  // namespace

TEST_CASE("bp_to_bin floors and clamps the last window") {
  const GenomeSpec g = yeast_small_genome();
  CHECK(bp_to_bin(0, g, 0) == 0);
  CHECK(bp_to_bin(32000, g, 0) == 1);
  CHECK(bp_to_bin(230218, g, 0) == 7);
  CHECK(bp_to_bin(31999.9, g, 0) == 0);
  CHECK_THROWS_AS((void)bp_to_bin(-1, g, 0), DomainError);
  CHECK_THROWS_AS((void)bp_to_bin(230219, g, 0), DomainError);
  CHECK(bin_to_bp(0, g) == 16000.0);
  CHECK(bin_to_bp(7, g) == 240000.0);
}

TEST_CASE("bin centre round trip stays within one resolution") {
  const GenomeSpec g = yeast_genome();
  Rng rng(11);
  for (int k = 0; k < 2000; ++k) {
    const std::size_t c = static_cast<std::size_t>(k) % g.size();
    const double p = uniform(rng, 0.0, static_cast<double>(g.length(c)));
    CHECK(std::abs(bin_to_bp(bp_to_bin(p, g, c), g) - p) <= static_cast<double>(g.resolution()));
  }
}

TEST_CASE("block shapes use ceiling division") {
  const GenomeSpec t = toy();
  CHECK(block_shape(t, 0, 1) == std::pair<std::size_t, std::size_t>{2, 3});
  CHECK(t.bins(2) == 4);
  const GenomeSpec g = yeast_small_genome();
  CHECK(block_shape(g, 0, 1) == std::pair<std::size_t, std::size_t>{8, 26});
  CHECK_THROWS_AS((void)block_shape(g, 1, 1), DomainError);
  for (auto [i, j] : g.pairs()) {
    auto [r, c] = block_shape(g, i, j);
    auto [r2, c2] = block_shape(g, j, i);
    CHECK(r == c2);
    CHECK(c == r2);
  }
}

TEST_CASE("genome geometry") {
  const GenomeSpec g = yeast_genome();
  CHECK(g.size() == 16);
  CHECK(g.pair_count() == 120);
  std::size_t total = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(g.offset(i) == total);
    total += g.bins(i);
  }
  CHECK(g.total_bins() == total);
  std::size_t k = 0;
  for (auto [i, j] : g.pairs()) CHECK(g.pair_index(i, j) == k++);
  CHECK_THROWS_AS(GenomeSpec({{"a", 64000}}, 32000), DomainError);
  CHECK_THROWS_AS(GenomeSpec({{"a", 64000}, {"b", 1000}}, 32000), DomainError);
}

TEST_CASE("genome json round trip and hash") {
  const GenomeSpec g = yeast_genome();
  const GenomeSpec back = GenomeSpec::from_json(g.to_json());
  CHECK(back == g);
  CHECK(back.hash() == g.hash());
  CHECK(yeast_small_genome().hash() != g.hash());
}

TEST_CASE("prior draws stay in support and average to the midpoint") {
  const GenomeSpec g = yeast_small_genome();
  Rng rng(5);
  std::vector<double> mean(g.size(), 0.0);
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const auto theta = sample_prior(g, rng);
    REQUIRE(in_prior_support(g, theta));
    for (std::size_t i = 0; i < g.size(); ++i) mean[i] += theta[i] / n;
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double l = static_cast<double>(g.length(i));
    CHECK(std::abs(mean[i] - l / 2) < 0.01 * l);
  }
  Rng a(99), b(99);
  CHECK(sample_prior(g, a) == sample_prior(g, b));
}

TEST_CASE("prior density is flat on the box and zero outside") {
  const GenomeSpec g = yeast_small_genome();
  double expected = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) expected -= std::log(static_cast<double>(g.length(i)) - 2.0);
  const std::vector<double> inside1{1.0, 1.0, 1.0}, inside2{200000, 400000, 316619};
  CHECK(prior_logpdf(g, inside1) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(prior_logpdf(g, inside2) == prior_logpdf(g, inside1));
  const std::vector<double> outside{0.5, 1000, 1000};
  CHECK(prior_logpdf(g, outside) == -std::numeric_limits<double>::infinity());
  const BoxPrior box = BoxPrior::from_genome(g);
  CHECK(box.log_pdf(inside2) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_FALSE(box.contains(outside));
}

TEST_CASE("block rows orient the chromosome on rows") {
  const GenomeSpec g = toy();
  ContactMap m(g);
  m.block(0, 1).setConstant(1.0);
  m.block(0, 2).setConstant(2.0);
  m.block(1, 2)(0, 3) = 5.0;
  const BlockRow row = extract_block_row(m, 2);
  REQUIRE(row.blocks.size() == 2);
  CHECK(row.partners == std::vector<std::size_t>{0, 1});
  for (const Block& b : row.blocks) CHECK(static_cast<std::size_t>(b.rows()) == g.bins(2));
  CHECK(row.blocks[1](3, 0) == 5.0);

  const Eigen::MatrixXd full = m.assemble();
  CHECK(full.isApprox(full.transpose()));
  const ContactMap back = ContactMap::from_assembled(g, full);
  for (std::size_t k = 0; k < m.block_count(); ++k) CHECK(back.blocks()[k] == m.blocks()[k]);
}
