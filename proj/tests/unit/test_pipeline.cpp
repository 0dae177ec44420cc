#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "hicentro/error.hpp"
#include "hicentro/pipeline.hpp"
#include "hicentro/snpe.hpp"

using namespace hicentro;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("hicentro_pipe_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig quick(Method method, std::uint64_t seed, std::size_t rounds = 3, std::size_t n = 200) {
  ExperimentConfig c;
  c.genome = yeast_small_genome();
  c.method = method;
  c.rounds = rounds;
  c.n_per_round = n;
  c.seed = seed;
  c.density_points = 64;
  c.summary.n_train = 64;
  c.summary.train.epochs = 1;
  c.snpe.flow = FlowConfig{2, 16, 5.0};
  c.snpe.train.max_epochs = 5;
  c.snpe.posterior_samples = 100;
  return c;
}

std::vector<std::vector<double>> read_report(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> row;
    for (int col = 0; std::getline(ls, cell, ','); ++col)
      if (col != 1) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_CASE("method names round trip") {
  for (Method m : {Method::abc_pearson, Method::abc_cnn, Method::snpe}) CHECK(parse_method(to_string(m)) == m);
  CHECK_THROWS_AS((void)parse_method("abc"), ConfigError);
  CHECK_THROWS_AS((void)parse_method("SNPE"), ConfigError);
}

TEST_CASE("config json round trips and rejects unknown keys") {
  ExperimentConfig c = quick(Method::snpe, 9);
  c.chromosomes = std::vector<std::size_t>{0, 2};
  c.kernel_sd = 5000.0;
  c.reference.theta_ref = CentromereVector{1e5, 2e5, 1e5};
  const auto j = c.to_json();
  const ExperimentConfig back = ExperimentConfig::from_json(j);
  CHECK(back.to_json() == j);
  CHECK(back.chromosomes == c.chromosomes);
  CHECK(back.kernel() == 5000.0);
  CHECK(back.genome == c.genome);

  auto bad = j;
  bad["rouns"] = 3;
  CHECK_THROWS_WITH_AS((void)ExperimentConfig::from_json(bad), doctest::Contains("rouns"), ConfigError);
  bad = j;
  bad["method"] = "mcmc";
  CHECK_THROWS_AS((void)ExperimentConfig::from_json(bad), ConfigError);
  bad = j;
  bad["n_per_round"] = 10;
  bad["method"] = "abc-pearson";
  CHECK_THROWS_AS((void)ExperimentConfig::from_json(bad), ConfigError);
  bad = j;
  bad["chromosomes"] = {"chrIV"};
  CHECK_THROWS_AS((void)ExperimentConfig::from_json(bad), ConfigError);
  CHECK(quick(Method::abc_pearson, 1).kernel() == 32000.0);
}

TEST_CASE("default abc run has eleven populations of fifty") {
  ExperimentConfig c = quick(Method::abc_pearson, 3, 11, 1000);
  const ExperimentResult r = run_experiment(c);
  REQUIRE(r.tasks.size() == 1);
  REQUIRE(r.tasks[0].rounds.size() == 11);
  for (std::size_t t = 0; t < 11; ++t) {
    const auto& round = r.tasks[0].rounds[t];
    CHECK(round.round == t + 1);
    CHECK(round.samples.size() == 50);
    CHECK(round.metrics.has_value());
    for (const auto& s : round.samples) CHECK(r.tasks[0].prior.contains(s));
  }
  CHECK(r.tasks[0].density.size() == 3);
  CHECK(r.resolution == 32000);
}

TEST_CASE("same seed gives byte identical outputs") {
  TempDir a("det_a"), b("det_b"), c("det_c");
  ExperimentConfig cfg = quick(Method::abc_pearson, 5);
  (void)run_experiment(cfg, a.path);
  (void)run_experiment(cfg, b.path);
  cfg.jobs = 4;
  (void)run_experiment(cfg, c.path);
  for (const char* f : {"metrics.json", "report.csv", "density.csv", "rounds/round_03.csv"}) {
    CHECK(slurp(a.path / f) == slurp(b.path / f));
    CHECK(slurp(a.path / f) == slurp(c.path / f));
  }
  TempDir d("det_d");
  cfg.seed = 6;
  (void)run_experiment(cfg, d.path);
  CHECK(slurp(a.path / "metrics.json") != slurp(d.path / "metrics.json"));
}

TEST_CASE("report metrics recompute from the saved samples") {
  TempDir dir("report");
  (void)run_experiment(quick(Method::abc_pearson, 7), dir.path);
  const auto metrics = nlohmann::json::parse(slurp(dir.path / "metrics.json"));
  CHECK(metrics.at("resolution") == 32000);
  CHECK(nlohmann::json::parse(slurp(dir.path / "task.json")).at("resolution") == 32000);
  const auto theta_ref = metrics.at("tasks")[0].at("theta_ref").get<std::vector<double>>();
  const auto rows = read_report(dir.path / "report.csv");
  REQUIRE(rows.size() == 3);
  for (std::size_t t = 0; t < 3; ++t) {
    const auto table = read_samples_csv(dir.path / "rounds" / ("round_0" + std::to_string(t + 1) + ".csv"));
    CHECK(table.columns.front() == "chrI");
    const SampleMetrics m = evaluate_samples(table.samples, {}, theta_ref);
    CHECK(rows[t][0] == t + 1);
    CHECK(rows[t][1] == doctest::Approx(m.euclidean_mean).epsilon(1e-9));
    CHECK(rows[t][2] == doctest::Approx(m.mmd).epsilon(1e-9));
    CHECK(rows[t][3] == doctest::Approx(m.w2).epsilon(1e-9));
    for (std::size_t d = 0; d < 3; ++d) CHECK(rows[t][4 + d] == doctest::Approx(m.per_dim_abs_error[d]).epsilon(1e-9));
  }
}

TEST_CASE("per-chromosome runs write one directory per chromosome") {
  TempDir dir("perchrom");
  ExperimentConfig c = quick(Method::abc_pearson, 8, 2, 100);
  c.genome = yeast_genome();
  c.mode = SummaryMode::per_chromosome;
  c.jobs = 4;
  const ExperimentResult r = run_experiment(c, dir.path);
  REQUIRE(r.tasks.size() == 16);
  for (std::size_t i = 0; i < 16; ++i) {
    const fs::path sub = dir.path / c.genome.name(i);
    CHECK(fs::is_regular_file(sub / "report.csv"));
    CHECK(fs::is_regular_file(sub / "density.csv"));
    CHECK(fs::is_regular_file(sub / "rounds" / "round_02.csv"));
    CHECK(r.tasks[i].name == c.genome.name(i));
    CHECK(r.tasks[i].prior.dim() == 1);
    CHECK(r.tasks[i].rounds.back().samples.size() == 5);
  }
  CHECK(fs::is_regular_file(dir.path / "report.csv"));

  TempDir subset("subset");
  c.chromosomes = std::vector<std::size_t>{3, 11};
  c.jobs = 1;
  const ExperimentResult s = run_experiment(c, subset.path);
  REQUIRE(s.tasks.size() == 2);
  CHECK(slurp(subset.path / "chrIV" / "report.csv") == slurp(dir.path / "chrIV" / "report.csv"));
}

TEST_CASE("snpe and cnn runs use a supplied summary") {
  const ExperimentConfig c = quick(Method::snpe, 10, 2, 100);
  const SummaryNet net(c.genome, SummaryMode::joint, {}, 1);
  TempDir dir("snpe");
  const ExperimentResult r = run_experiment(c, dir.path, &net);
  REQUIRE(r.tasks[0].rounds.size() == 2);
  CHECK(r.tasks[0].rounds[1].samples.size() == 100);
  CHECK(!r.summary_training.has_value());
  const PosteriorEstimate est = PosteriorEstimate::load(dir.path / "posterior.ckpt");
  CHECK(est.round == 2);
  CHECK(est.context == net.summarize(experiment_reference(c).map));

  ExperimentConfig cnn = quick(Method::abc_cnn, 10);
  const ExperimentResult rc = run_experiment(cnn, {}, &net);
  CHECK(rc.tasks[0].rounds.size() == 3);

  const SummaryNet wrong(yeast_genome(), SummaryMode::joint, {}, 1);
  CHECK_THROWS_AS((void)run_experiment(cnn, {}, &wrong), StageError);
}

TEST_CASE("summary pretraining runs inside the experiment") {
  TempDir dir("pretrain");
  const ExperimentResult r = run_experiment(quick(Method::abc_cnn, 11, 2, 100), dir.path);
  REQUIRE(r.summary_training.has_value());
  CHECK(r.summary_training->epochs_run == 1);
  CHECK(fs::is_regular_file(dir.path / "summary.ckpt"));
  const auto timings = nlohmann::json::parse(slurp(dir.path / "timings.json"));
  for (const char* stage : {"setup", "reference", "summary", "inference", "evaluate", "export"})
    CHECK(timings.contains(stage));
}

TEST_CASE("kde concentrates on repeated samples") {
  const BoxPrior box{{0.0}, {100000.0}};
  const Samples same(200, std::vector<double>{40000.0});
  const auto grid = export_density(same, {}, box, 512).front();
  const double step = 100000.0 / 511.0;
  CHECK(grid.bandwidth == doctest::Approx(2.0 * step));
  double inside = 0.0, total = trapezoid(grid.x, grid.density);
  std::vector<double> xs, ys;
  for (std::size_t p = 0; p < grid.x.size(); ++p) {
    if (std::abs(grid.x[p] - 40000.0) <= 3.0 * grid.bandwidth) {
      xs.push_back(grid.x[p]);
      ys.push_back(grid.density[p]);
    }
  }
  inside = trapezoid(xs, ys);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(inside / total > 0.99);
}

TEST_CASE("kde of uniform samples is flat and integrates to one") {
  const BoxPrior box{{0.0, 0.0}, {230218.0, 813184.0}};
  Rng rng(12);
  Samples s;
  for (int k = 0; k < 10000; ++k) s.push_back(box.sample(rng));
  const auto grids = export_density(s, {}, box, 512);
  for (const auto& g : grids) {
    CHECK(trapezoid(g.x, g.density) == doctest::Approx(1.0).epsilon(0.01));
    const auto [lo, hi] = std::minmax_element(g.density.begin(), g.density.end());
    CHECK(*hi / *lo < 2.0);
    CHECK(g.x.front() == 0.0);
    CHECK(g.x.size() == 512);
  }
  CHECK(grids[1].x.back() == 813184.0);

  std::vector<double> w(s.size(), 0.0);
  w[0] = 1.0;
  CHECK_THROWS_AS((void)export_density(s, std::vector<double>{1.0}, box), DomainError);
  const auto point = export_density(s, w, box, 512);
  CHECK(trapezoid(point[0].x, point[0].density) == doctest::Approx(1.0).epsilon(1e-12));
}
