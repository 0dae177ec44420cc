// hicentro_acceptance: end-to-end acceptance suite.
//
// Prints one line per criterion, "criterion N: PASS|FAIL <title> | <detail>",
// preceded by indented progress lines. Exit status is 1 when any criterion
// fails. Budgets and tolerances are pinned below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hicentro/error.hpp"
#include "hicentro/flow.hpp"
#include "hicentro/hic_io.hpp"
#include "hicentro/metrics.hpp"
#include "hicentro/pipeline.hpp"
#include "hicentro/simulator.hpp"
#include "hicentro/smc_abc.hpp"
#include "hicentro/summary.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace hicentro;
using nlohmann::json;

namespace {

// ---- pinned budgets and tolerances ------------------------------------------

constexpr std::size_t kSeeds = 5;
constexpr std::size_t kRounds = 11;
constexpr std::size_t kPerRound = 1000;
constexpr std::size_t kSeedsToPass = 4;
constexpr std::size_t kSeedsForOrdering = 3;
constexpr double kMethodBudget = 30 * 60.0;  // s per method run, pretraining included

constexpr std::size_t kChromosomesToPass = 10;
constexpr double kGenomeBudget = 5 * 3600.0;  // s, all methods together
// Whole-genome summary and flow budgets (defaults would take ~5.5 h on one core).
constexpr std::size_t kRowTrain = 5000;
constexpr std::size_t kRowEpochs = 30;
constexpr std::size_t kRowPatience = 10;
constexpr std::size_t kRowFlowEpochs = 60;
constexpr std::size_t kRowFlowPatience = 10;

constexpr double kMapBudgetMs = 50.0;
constexpr double kExact = 1e-12;
constexpr double kSeparable = 1e-9;
constexpr double kIceRowSum = 1e-6;
constexpr double kIceScale = 1e-9;
constexpr double kGradient = 1e-4;
constexpr double kInverse = 1e-6;
constexpr double kQuadrature = 0.01;
constexpr double kPosteriorMean = 0.05;  // fraction of the posterior sd
constexpr double kKernelSpread = 0.02;

// ---- plumbing ---------------------------------------------------------------

struct Outcome {
  bool pass{false};
  std::string detail;
};

struct Options {
  fs::path workdir;
  fs::path data;
  std::set<int> only;
  std::size_t jobs{1};
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 0) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void note(const std::string& line) { std::cout << "  " << line << std::endl; }

const RoundResult& final_round(const TaskResult& task) { return task.rounds.back(); }

bool below(const std::vector<double>& errors, double r) {
  return std::all_of(errors.begin(), errors.end(), [r](double e) { return e < r; });
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt(x);
  return s;
}

// ---- criteria 1 and 2: small-genome recovery and method ordering -------------

struct SmallRun {
  std::map<Method, std::vector<double>> euclid;        // per seed
  std::map<Method, std::vector<bool>> recovered;       // per seed
  std::map<Method, double> slowest;                    // s, worst run
};

SmallRun run_small_genome(const Options& opt) {
  const fs::path genome_path = opt.data / "genomes" / "sc_r64_chr1-3_32kb.json";
  ExperimentConfig base;
  base.genome = GenomeSpec::load(genome_path);
  base.genome_path = genome_path;
  base.rounds = kRounds;
  base.n_per_round = kPerRound;
  base.jobs = opt.jobs;
  base.mode = SummaryMode::joint;
  const double r = static_cast<double>(base.genome.resolution());
  const fs::path dir = opt.workdir / "small_genome";
  fs::create_directories(dir);

  // One summary network per genome, shared by every seed of both learned methods.
  auto t0 = std::chrono::steady_clock::now();
  SummaryTrainReport report;
  SummaryNet net = pretrain_summary(base, &report);
  const double pretrain = seconds_since(t0);
  net.save(dir / "summary.ckpt");
  note("summary pretraining " + fmt(pretrain, 1) + " s, " + std::to_string(report.epochs_run) +
       " epochs, val mse " + fmt(report.best_val_loss(), 5));

  SmallRun out;
  for (std::size_t s = 1; s <= kSeeds; ++s) {
    for (Method m : {Method::abc_pearson, Method::abc_cnn, Method::snpe}) {
      ExperimentConfig cfg = base;
      cfg.method = m;
      cfg.seed = s;
      cfg.reference.seed = s;
      t0 = std::chrono::steady_clock::now();
      const ExperimentResult res =
          run_experiment(cfg, dir / to_string(m) / ("seed_" + std::to_string(s)), m == Method::abc_pearson ? nullptr : &net);
      const double elapsed = seconds_since(t0) + (m == Method::abc_pearson ? 0.0 : pretrain);
      const SampleMetrics& met = *final_round(res.tasks.front()).metrics;
      out.euclid[m].push_back(met.euclidean_mean);
      out.recovered[m].push_back(below(met.per_dim_abs_error, r));
      out.slowest[m] = std::max(out.slowest[m], elapsed);
      note("seed " + std::to_string(s) + " " + to_string(m) + ": errors [" + join(met.per_dim_abs_error) +
           "] bp, euclidean " + fmt(met.euclidean_mean) + ", " + fmt(elapsed, 1) + " s");
    }
  }
  return out;
}

Outcome criterion1(const SmallRun& run) {
  Outcome o{true, ""};
  for (Method m : {Method::abc_pearson, Method::abc_cnn, Method::snpe}) {
    const auto& ok = run.recovered.at(m);
    const std::size_t passed = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), true));
    const double slow = run.slowest.at(m);
    o.pass = o.pass && passed >= kSeedsToPass && slow <= kMethodBudget;
    o.detail += (o.detail.empty() ? "" : "; ") + to_string(m) + " " + std::to_string(passed) + "/" +
                std::to_string(kSeeds) + " seeds below r, slowest run " + fmt(slow / 60.0, 1) + " min";
  }
  return o;
}

Outcome criterion2(const SmallRun& run) {
  std::size_t held = 0;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    const double snpe = run.euclid.at(Method::snpe)[s], cnn = run.euclid.at(Method::abc_cnn)[s],
                 pearson = run.euclid.at(Method::abc_pearson)[s];
    if (snpe <= cnn && cnn <= pearson) ++held;
  }
  // A qualitative claim: reported and flagged, never failed.
  Outcome o{true, "snpe <= abc-cnn <= abc-pearson in " + std::to_string(held) + "/" + std::to_string(kSeeds) + " seeds"};
  if (held < kSeedsForOrdering) o.detail += " [FLAG: ordering below " + std::to_string(kSeedsForOrdering) + "/5]";
  return o;
}

// ---- criterion 3: whole-genome 1D mode ---------------------------------------

Outcome criterion3(const Options& opt) {
  const fs::path genome_path = opt.data / "genomes" / "sc_r64_32kb.json";
  ExperimentConfig base;
  base.genome = GenomeSpec::load(genome_path);
  base.genome_path = genome_path;
  base.mode = SummaryMode::per_chromosome;
  base.rounds = kRounds;
  base.n_per_round = kPerRound;
  base.jobs = opt.jobs;
  base.seed = 1;
  base.reference.seed = 1;
  base.summary.n_train = kRowTrain;
  base.summary.train.epochs = kRowEpochs;
  base.summary.train.patience = kRowPatience;
  base.snpe.train.max_epochs = kRowFlowEpochs;
  base.snpe.train.patience = kRowFlowPatience;
  const GenomeSpec& g = base.genome;
  const double r = static_cast<double>(g.resolution());
  const fs::path dir = opt.workdir / "whole_genome";
  fs::create_directories(dir);

  auto t0 = std::chrono::steady_clock::now();
  SummaryTrainReport report;
  SummaryNet net = pretrain_summary(base, &report);
  double total = seconds_since(t0);
  net.save(dir / "summary.ckpt");
  note("row summary pretraining " + fmt(total, 1) + " s, " + std::to_string(report.epochs_run) + " epochs");

  std::vector<std::vector<double>> errors(g.size());
  std::vector<std::string> winners(g.size());
  for (Method m : {Method::abc_pearson, Method::abc_cnn, Method::snpe}) {
    ExperimentConfig cfg = base;
    cfg.method = m;
    t0 = std::chrono::steady_clock::now();
    const ExperimentResult res = run_experiment(cfg, dir / to_string(m), m == Method::abc_pearson ? nullptr : &net);
    const double elapsed = seconds_since(t0);
    total += elapsed;
    std::size_t good = 0;
    for (std::size_t t = 0; t < res.tasks.size(); ++t) {
      const double e = final_round(res.tasks[t]).metrics->per_dim_abs_error.front();
      errors[t].push_back(e);
      if (e < r) {
        ++good;
        winners[t] += (winners[t].empty() ? "" : ",") + to_string(m);
      }
    }
    note(to_string(m) + ": " + std::to_string(good) + "/16 chromosomes below r, " + fmt(elapsed, 1) + " s");
  }
  std::size_t covered = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    note(g.name(i) + " errors [" + join(errors[i]) + "] bp" + (winners[i].empty() ? "" : " <- " + winners[i]));
    if (!winners[i].empty()) ++covered;
  }
  return {covered >= kChromosomesToPass && total <= kGenomeBudget,
          std::to_string(covered) + "/16 chromosomes below r with at least one method, total " + fmt(total / 60.0, 1) +
              " min"};
}

// ---- criterion 4: simulator ----------------------------------------------------

Outcome criterion4(const Options& opt) {
  const GenomeSpec g = GenomeSpec::load(opt.data / "genomes" / "sc_r64_32kb.json");
  const double r = static_cast<double>(g.resolution());
  Rng rng(4);
  double worst_axis = 0.0, worst_sep = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto theta = sample_prior(g, rng);
    const std::size_t i = std::uniform_int_distribution<std::size_t>{0, g.size() - 2}(rng);
    const std::size_t j = std::uniform_int_distribution<std::size_t>{i + 1, g.size() - 1}(rng);
    SimParams p = sample_sim_params(rng);
    p.noise_frac = 0.0;
    const Block b = simulate_block(g, i, j, theta[i], theta[j], p, rng);
    Eigen::Index x = 0, y = 0;
    b.maxCoeff(&x, &y);
    worst_axis = std::max({worst_axis, std::abs(bin_to_bp(static_cast<std::size_t>(x), g) - theta[i]),
                           std::abs(bin_to_bp(static_cast<std::size_t>(y), g) - theta[j])});
    // Rank one: every 2x2 minor vanishes.
    for (Eigen::Index a = 0; a + 1 < b.rows(); ++a)
      for (Eigen::Index c = 0; c + 1 < b.cols(); ++c) {
        const double lhs = b(a, c) * b(a + 1, c + 1), rhs = b(a, c + 1) * b(a + 1, c);
        const double scale = std::max(std::abs(lhs), std::abs(rhs));
        if (scale > 0.0) worst_sep = std::max(worst_sep, std::abs(lhs - rhs) / scale);
      }
  }
  const int maps = 50;
  const auto t0 = std::chrono::steady_clock::now();
  double checksum = 0.0;
  for (int k = 0; k < maps; ++k) checksum += simulate_map(g, sample_prior(g, rng), rng).block(0, 1)(0, 0);
  const double ms = 1000.0 * seconds_since(t0) / maps;
  return {worst_axis <= r / 2 && worst_sep <= kSeparable && ms <= kMapBudgetMs && std::isfinite(checksum),
          "argmax off by at most " + fmt(worst_axis) + " bp (limit " + fmt(r / 2) + "), separability " +
              sci(worst_sep) + ", " + fmt(ms, 2) + " ms per 16-chromosome map"};
}

// ---- criterion 5: metric oracles ---------------------------------------------

Outcome criterion5(const Options& opt) {
  const GenomeSpec g = GenomeSpec::load(opt.data / "genomes" / "sc_r64_chr1-3_32kb.json");
  Rng rng(5);
  double worst = 0.0, self = 0.0;
  for (int k = 0; k < 100; ++k) {
    const ContactMap a = simulate_map(g, sample_prior(g, rng), rng);
    const ContactMap b = simulate_map(g, sample_prior(g, rng), rng);
    worst = std::max(worst, std::abs(block_pearson(a, b) - oracle::naive_block_pearson(a, b)));
    worst = std::max(worst, std::abs(row_pearson(a, b) - oracle::naive_row_pearson(a, b)));
    self = std::max({self, std::abs(block_pearson(a, a) - 1.0), std::abs(row_pearson(a, a) - 1.0)});

    const Samples s = oracle::cloud(rng, 2 + static_cast<std::size_t>(k) % 60, 3, uniform(rng, 0.5, 3.0));
    const std::vector<double> t{normal(rng, 0, 1), normal(rng, 0, 1), normal(rng, 0, 1)};
    const double bw = uniform(rng, 0.3, 4.0);
    worst = std::max(worst, std::abs(mmd_to_dirac(s, t, Bandwidth{bw}) - oracle::naive_mmd(s, t, bw)));
    worst = std::max(worst, std::abs(wasserstein2_to_dirac(s, t) - oracle::naive_w2(s, t)));
  }
  // ABC selection depends on distance ranks only.
  bool affine = true;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> d(1000), e(1000);
    for (double& v : d) v = uniform(rng, 0.0, 2.0);
    const double a = uniform(rng, 0.01, 100.0), c = uniform(rng, -5.0, 5.0);
    for (std::size_t n = 0; n < d.size(); ++n) e[n] = a * d[n] + c;
    affine = affine && select_smallest(d, 50) == select_smallest(e, 50);
  }
  return {worst <= kExact && self <= kExact && affine,
          "max oracle gap " + sci(worst) + ", self-correlation gap " + sci(self) + ", affine selection " + (affine ? "identical" : "differs")};
}

// ---- criterion 6: ICE --------------------------------------------------------

Outcome criterion6() {
  Rng rng(6);
  double worst_sum = 0.0, worst_scale = 0.0;
  std::size_t most_iters = 0;
  bool converged = true;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 2 + static_cast<std::size_t>(k) % 60;
    Eigen::MatrixXd m = oracle::random_symmetric(n, rng);
    if (n > 3 && k % 2) m(1, n - 2) = m(n - 2, 1) = 0.0;
    const IceResult res = ice_normalize(m);
    converged = converged && res.converged;
    most_iters = std::max(most_iters, res.iterations);
    const Eigen::VectorXd sums = res.matrix.rowwise().sum();
    for (Eigen::Index x = 0; x < sums.size(); ++x)
      if (sums(x) != 0.0) worst_sum = std::max(worst_sum, std::abs(sums(x) - 1.0));
    const IceResult scaled = ice_normalize(uniform(rng, 1e-3, 1e3) * m);
    worst_scale = std::max(worst_scale, (scaled.matrix - res.matrix).cwiseAbs().maxCoeff());
  }
  return {converged && most_iters <= 200 && worst_sum <= kIceRowSum && worst_scale <= kIceScale,
          "row sums within " + sci(worst_sum) + " of 1 after at most " + std::to_string(most_iters) +
              " iterations, scale gap " + sci(worst_scale)};
}

// ---- criterion 7: autodiff ---------------------------------------------------

Outcome criterion7() {
  double worst = 0.0;
  for (int k = 0; k < 20; ++k) worst = std::max(worst, oracle::check_configuration(k));
  return {worst < kGradient, "worst relative gradient error " + sci(worst) + " over 20 networks"};
}

// ---- criterion 8: flow -------------------------------------------------------

ConditionalMaf jiggled_flow(std::size_t dim, std::size_t ctx, std::uint64_t seed, double sd) {
  ConditionalMaf f(dim, ctx, FlowConfig{3, 16, 5.0}, seed);
  Rng rng(seed + 1000);
  for (auto* p : f.parameters())
    for (double& v : p->value.data) v += normal(rng, 0.0, sd);
  ad::Tensor x({200, dim}), c({200, ctx});
  for (double& v : x.data) v = normal(rng, 3.0, 2.0);
  for (double& v : c.data) v = normal(rng, 0.0, 0.5);
  f.fit_standardization(x, c);
  return f;
}

Outcome criterion8() {
  Rng rng(8);
  double worst_inv = 0.0;
  for (std::size_t dim : {1u, 3u, 16u}) {
    const ConditionalMaf f = jiggled_flow(dim, 4, 80 + dim, 0.3);
    ad::Tensor x({1000, dim}), c({1000, 4});
    for (double& v : x.data) v = normal(rng, 0.0, 2.0);
    for (double& v : c.data) v = normal(rng, 0.0, 1.0);
    const ad::Tensor back = f.inverse(f.forward(x, c).z, c);
    for (std::size_t k = 0; k < x.size(); ++k) worst_inv = std::max(worst_inv, std::abs(back[k] - x[k]));
  }

  double worst_mass = 0.0;
  const ConditionalMaf f1 = jiggled_flow(1, 2, 90, 0.5);
  for (double cv : {-1.0, 0.0, 0.7}) {
    // The grid spans the sampled range with generous margins on both sides.
    Rng draw(94);
    const ad::Tensor probe = f1.sample(20000, std::vector<double>{cv, cv}, draw);
    const auto [smin, smax] = std::minmax_element(probe.data.begin(), probe.data.end());
    const double pad = 2.0 * (*smax - *smin);
    const std::size_t n = 200001;
    const double lo = *smin - pad, h = (*smax - *smin + 2.0 * pad) / static_cast<double>(n - 1);
    ad::Tensor x({n, 1});
    for (std::size_t k = 0; k < n; ++k) x[k] = lo + h * static_cast<double>(k);
    const auto lp = f1.log_prob(x, ad::Tensor({n, 2}, std::vector<double>(2 * n, cv)));
    double mass = 0.0;
    for (std::size_t k = 0; k < n; ++k) mass += std::exp(lp[k]) * h * ((k == 0 || k + 1 == n) ? 0.5 : 1.0);
    worst_mass = std::max(worst_mass, std::abs(mass - 1.0));
  }

  // theta ~ N(0, 1), c = theta + N(0, 0.5^2)  =>  theta | c ~ N(0.8 c, 0.2).
  const std::size_t n = 20000;
  ad::Tensor x({n, 1}), c({n, 1});
  for (std::size_t k = 0; k < n; ++k) {
    x[k] = normal(rng, 0.0, 1.0);
    c[k] = x[k] + normal(rng, 0.0, 0.5);
  }
  ConditionalMaf f(1, 1, FlowConfig{2, 16, 5.0}, 91);
  f.fit_standardization(x, c);
  FlowTrainConfig tc;
  tc.max_epochs = 150;
  tc.patience = 150;
  tc.batch_size = 512;
  tc.lr = 5e-4;
  tc.seed = 92;
  (void)train_flow(f, x, c, tc);
  const double sd = std::sqrt(0.2);
  double worst_mean = 0.0;
  for (double cv : {-1.0, 0.0, 1.0}) {
    Rng draw(93);
    const ad::Tensor s = f.sample(20000, std::vector<double>{cv}, draw);
    double mean = 0.0;
    for (double v : s.data) mean += v / static_cast<double>(s.size());
    worst_mean = std::max(worst_mean, std::abs(mean - 0.8 * cv) / sd);
  }
  return {worst_inv < kInverse && worst_mass <= kQuadrature && worst_mean <= kPosteriorMean,
          "round trip " + sci(worst_inv) + ", quadrature off by " + fmt(100 * worst_mass, 3) +
              "%, posterior mean off by " + fmt(100 * worst_mean, 2) + "% of sd"};
}

// ---- criterion 9: SMC-ABC internals -----------------------------------------

Outcome criterion9(const Options& opt) {
  const GenomeSpec g = GenomeSpec::load(opt.data / "genomes" / "sc_r64_chr1-3_32kb.json");
  const BoxPrior prior = BoxPrior::from_genome(g);
  const double r = static_cast<double>(g.resolution());
  Rng rng(9);
  double worst_w = 0.0;
  for (std::size_t m : {3u, 10u, 50u, 50u, 50u}) {
    const ParticlePopulation prev = oracle::random_population(prior, m, rng, 30000);
    const Samples accepted = perturb(prev, prior, r, m, rng);
    const auto w = compute_weights(accepted, prev, prior, r);
    const auto ref = oracle::brute_weights(accepted, prev, prior, r);
    for (std::size_t k = 0; k < m; ++k) worst_w = std::max(worst_w, std::abs(w[k] - ref[k]));
  }

  ParticlePopulation pop;
  pop.particles = {{115000, 406000, 158000}};
  pop.weights = {1.0};
  double sq = 0.0;
  std::size_t count = 0;
  for (const auto& t : perturb(pop, prior, r, 100000, rng)) {
    if (t == pop.particles[0]) continue;
    for (std::size_t d = 0; d < 3; ++d) {
      sq += (t[d] - pop.particles[0][d]) * (t[d] - pop.particles[0][d]);
      ++count;
    }
  }
  const double spread = std::sqrt(sq / static_cast<double>(count));

  const ContactMap ref = make_reference(g, *known_centromeres(g), 9, ReferenceMode::raw).map;
  const BatchDistance distance = [&](const Samples& thetas, std::span<const std::uint64_t> seeds) {
    std::vector<double> d;
    for (std::size_t n = 0; n < thetas.size(); ++n) {
      Rng sim(seeds[n]);
      d.push_back(1.0 - block_pearson(simulate_map(g, thetas[n], sim), ref));
    }
    return d;
  };
  AbcConfig ac;
  ac.rounds = kRounds;
  ac.n_per_round = kPerRound;
  ac.kernel_sd = r;
  ac.seed = 9;
  std::size_t outside = 0, particles = 0;
  for (const auto& p : run_smc_abc(prior, distance, ac))
    for (const auto& t : p.particles) {
      ++particles;
      if (!prior.contains(t)) ++outside;
    }
  return {worst_w <= kExact && std::abs(spread - r) <= kKernelSpread * r && outside == 0,
          "weight gap " + sci(worst_w) + ", kernel sd " + fmt(spread) + " bp (" +
              fmt(100 * std::abs(spread / r - 1.0), 2) + "% off), " + std::to_string(outside) + " of " +
              std::to_string(particles) + " particles outside the prior"};
}

// ---- criterion 10: determinism ------------------------------------------------

Outcome criterion10(const Options& opt) {
  const fs::path dir = opt.workdir / "determinism";
  fs::remove_all(dir);
  std::vector<std::string> differ;
  std::size_t compared = 0;
  auto twice = [&](const std::string& name, ExperimentConfig cfg) {
    const fs::path a = dir / (name + "_a"), b = dir / (name + "_b");
    (void)run_experiment(cfg, a);
    cfg.jobs = std::max<std::size_t>(opt.jobs, 1) + 3;  // thread count must not matter either
    (void)run_experiment(cfg, b);
    ++compared;
    if (slurp(a / "metrics.json") != slurp(b / "metrics.json")) differ.push_back(name);
  };
  ExperimentConfig base;
  base.genome = GenomeSpec::load(opt.data / "genomes" / "sc_r64_chr1-3_32kb.json");
  base.rounds = 3;
  base.n_per_round = 300;
  base.seed = 10;
  base.jobs = opt.jobs;
  base.summary.n_train = 300;
  base.summary.train.epochs = 3;
  base.snpe.train.max_epochs = 10;
  for (Method m : {Method::abc_pearson, Method::abc_cnn, Method::snpe}) {
    ExperimentConfig cfg = base;
    cfg.method = m;
    twice("joint_" + to_string(m), cfg);
  }
  ExperimentConfig rows = base;
  rows.genome = GenomeSpec::load(opt.data / "genomes" / "sc_r64_32kb.json");
  rows.mode = SummaryMode::per_chromosome;
  rows.method = Method::abc_cnn;
  rows.chromosomes = std::vector<std::size_t>{0, 6, 11, 15};
  twice("per_chromosome_abc-cnn", rows);
  std::string detail = std::to_string(compared - differ.size()) + "/" + std::to_string(compared) +
                       " experiments byte-identical across reruns and thread counts";
  for (const auto& d : differ) detail += "; differs: " + d;
  return {differ.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hicentro acceptance suite"};
  Options opt;
  std::string workdir = "acceptance_runs", data = HICENTRO_DATA_DIR;
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Directory for experiment outputs");
  app.add_option("--data", data, "Directory holding genomes/");
  app.add_option("--only", only, "Run only these criteria (1-10)")->delimiter(',');
  app.add_option("--jobs", opt.jobs, "Worker threads for simulation");
  CLI11_PARSE(app, argc, argv);
  opt.workdir = workdir;
  opt.data = data;
  opt.only = {only.begin(), only.end()};
  fs::create_directories(opt.workdir);

  const std::vector<std::string> titles{"",
                                        "small-genome recovery",
                                        "method ordering",
                                        "whole-genome 1D mode",
                                        "simulator correctness",
                                        "metric oracles",
                                        "ICE normalization",
                                        "autodiff gradients",
                                        "flow",
                                        "SMC-ABC internals",
                                        "determinism"};
  auto wanted = [&](int k) { return opt.only.empty() || opt.only.contains(k); };
  std::map<int, Outcome> results;
  auto run = [&](int k, const std::function<Outcome()>& body) {
    if (!wanted(k)) return;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      results[k] = body();
    } catch (const std::exception& e) {
      results[k] = {false, std::string("error: ") + e.what()};
    }
    note("criterion " + std::to_string(k) + " took " + fmt(seconds_since(t0), 1) + " s");
    std::cout << "criterion " << k << ": " << (results[k].pass ? "PASS" : "FAIL") << ' ' << titles[k] << " | "
              << results[k].detail << std::endl;
  };

  // Cheap property suites first, then the long inference runs.
  run(4, [&] { return criterion4(opt); });
  run(5, [&] { return criterion5(opt); });
  run(6, criterion6);
  run(7, criterion7);
  run(8, criterion8);
  run(9, [&] { return criterion9(opt); });
  run(10, [&] { return criterion10(opt); });
  if (wanted(1) || wanted(2)) {
    std::optional<SmallRun> small;
    std::string failure;
    try {
      small = run_small_genome(opt);
    } catch (const std::exception& e) {
      failure = std::string("error: ") + e.what();
    }
    run(1, [&] { return small ? criterion1(*small) : Outcome{false, failure}; });
    run(2, [&] { return small ? criterion2(*small) : Outcome{false, failure}; });
  }
  run(3, [&] { return criterion3(opt); });

  json summary = json::object();
  bool all = true;
  std::cout << "\nsummary\n";
  for (const auto& [k, o] : results) {
    all = all && o.pass;
    summary[std::to_string(k)] = {{"title", titles[k]}, {"pass", o.pass}, {"detail", o.detail}};
    std::cout << "criterion " << k << ": " << (o.pass ? "PASS" : "FAIL") << ' ' << titles[k] << " | " << o.detail
              << '\n';
  }
  std::ofstream(opt.workdir / "acceptance.json") << summary.dump(2) << '\n';
  return all ? 0 : 1;
}
