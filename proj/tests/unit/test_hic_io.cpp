#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "hicentro/error.hpp"
#include "hicentro/hic_io.hpp"
#include "hicentro/simulator.hpp"
#include "oracles.hpp"

using namespace hicentro;
using namespace hicentro::oracle;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("hicentro_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("save then load is bit identical") {
  const GenomeSpec g = yeast_small_genome();
  Rng rng(1);
  const ContactMap m = simulate_map(g, sample_prior(g, rng), rng);
  TempDir dir("roundtrip");
  MapMetadata meta;
  meta.genome_hash = g.hash();
  meta.resolution = g.resolution();
  meta.theta_ref = CentromereVector{1.5, 2.25, 3.125};
  meta.seed = 42;
  save_map(m, dir.path, meta);
  const ContactMap back = load_map(dir.path, g);
  for (std::size_t k = 0; k < m.block_count(); ++k) CHECK(back.blocks()[k] == m.blocks()[k]);
  const MapMetadata rm = load_map_metadata(dir.path);
  CHECK(rm.theta_ref == meta.theta_ref);
  CHECK(rm.seed == meta.seed);
  CHECK(rm.genome_hash == g.hash());
}

TEST_CASE("load errors name the offending block") {
  const GenomeSpec g = yeast_small_genome();
  Rng rng(2);
  const ContactMap m = simulate_map(g, sample_prior(g, rng), rng);
  TempDir dir("errors");
  save_map(m, dir.path);

  const fs::path victim = dir.path / "block_0_2.tsv";
  write_tsv(victim, Block::Ones(3, 3));
  try {
    (void)load_map(dir.path, g);
    FAIL("expected a load error");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find("(0,2)") != std::string::npos);
  }

  std::ofstream(victim, std::ios::trunc).close();
  CHECK_THROWS_AS((void)load_map(dir.path, g), LoadError);

  Block neg = m.block(0, 2);
  neg(1, 1) = -1.0;
  write_tsv(victim, neg);
  CHECK_THROWS_WITH_AS((void)load_map(dir.path, g), doctest::Contains("cell (1,1)"), LoadError);

  std::ofstream(victim, std::ios::trunc) << "1\tx\n";
  CHECK_THROWS_AS((void)read_tsv(victim), LoadError);

  CHECK_THROWS_AS((void)load_map(dir.path, yeast_genome()), LoadError);
}

TEST_CASE("ice on the two by two example") {
  Eigen::MatrixXd m(2, 2);
  m << 0, 2, 2, 0;
  const IceResult r = ice_normalize(m);
  CHECK(r.converged);
  CHECK(r.matrix(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.matrix(0, 0) == 0.0);
}

TEST_CASE("ice leaves a doubly stochastic matrix alone") {
  Eigen::MatrixXd m(3, 3);
  m << 0.2, 0.3, 0.5, 0.3, 0.6, 0.1, 0.5, 0.1, 0.4;
  const IceResult r = ice_normalize(m);
  CHECK(r.iterations == 0);
  CHECK((r.matrix - m).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("ice converges on random symmetric matrices and keeps structure") {
  Rng rng(17);
  for (int k = 0; k < 20; ++k) {
    const std::size_t n = 3 + static_cast<std::size_t>(k);
    Eigen::MatrixXd m = random_symmetric(n, rng);
    m(0, n - 1) = m(n - 1, 0) = 0.0;
    const IceResult r = ice_normalize(m);
    REQUIRE(r.converged);
    CHECK(r.iterations <= 200);
    const Eigen::VectorXd sums = r.matrix.rowwise().sum();
    CHECK((sums.array() - 1.0).abs().maxCoeff() <= 1e-6);
    CHECK((r.matrix - r.matrix.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.matrix(0, n - 1) == 0.0);
    const Eigen::MatrixXd rebuilt = r.bias.asDiagonal() * m * r.bias.asDiagonal();
    CHECK((rebuilt - r.matrix).cwiseAbs().maxCoeff() <= 1e-12);
    const IceResult scaled = ice_normalize(37.5 * m);
    CHECK((scaled.matrix - r.matrix).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("ice reports zero rows and rejects bad input") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 3);
  m(0, 1) = m(1, 0) = 4.0;
  const IceResult r = ice_normalize(m);
  CHECK(r.zero_rows == std::vector<std::size_t>{2});
  CHECK(r.matrix.row(2).sum() == 0.0);
  Eigen::MatrixXd asym = m;
  asym(0, 2) = 1.0;
  CHECK_THROWS_AS((void)ice_normalize(asym), DomainError);
  CHECK_THROWS_AS((void)ice_normalize(Eigen::MatrixXd::Ones(2, 3)), DomainError);
}

TEST_CASE("normalized references have unit row sums") {
  const GenomeSpec g = yeast_genome();
  Rng rng(3);
  const CentromereVector theta = sample_prior(g, rng);
  const Reference ref = make_reference(g, theta, 5, ReferenceMode::normalized);
  const Eigen::MatrixXd full = ref.map.assemble();
  for (Eigen::Index k = 0; k < full.rows(); ++k) {
    const double s = full.row(k).sum();
    if (s > 0.0) CHECK(std::abs(s - 1.0) <= 1e-6);
  }
  CHECK(ref.meta.normalized);
  CHECK(ref.meta.theta_ref == theta);
  const Reference again = make_reference(g, theta, 5, ReferenceMode::normalized);
  for (std::size_t k = 0; k < ref.map.block_count(); ++k) CHECK(again.map.blocks()[k] == ref.map.blocks()[k]);
}

TEST_CASE("trans-only balancing is impossible when one chromosome outweighs the rest") {
  // chrII has 26 bins but its partners only 8 + 10 columns, so its rows cannot all reach 1.
  const GenomeSpec g = yeast_small_genome();
  Rng rng(4);
  const ContactMap m = simulate_map(g, sample_prior(g, rng), rng);
  const IceResult r = ice_normalize(m.assemble());
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 200);
  CHECK(r.matrix.allFinite());
}

TEST_CASE("shortest formatting round trips") {
  Rng rng(6);
  for (int k = 0; k < 1000; ++k) {
    const double v = std::exp(uniform(rng, -30, 30));
    CHECK(std::stod(format_double(v)) == v);
  }
}
