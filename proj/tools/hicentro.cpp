// hicentro: command line front end for simulation, normalization, summary
// training, inference and reporting.
//
// Exit codes: 0 success, 2 configuration or input error, 3 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hicentro/error.hpp"
#include "hicentro/hic_io.hpp"
#include "hicentro/metrics.hpp"
#include "hicentro/pipeline.hpp"
#include "hicentro/simulator.hpp"
#include "hicentro/snpe.hpp"
#include "hicentro/summary.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hicentro;

namespace {

std::uint64_t default_seed() {
  if (const char* env = std::getenv("HICENTRO_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("HICENTRO_SEED is not an unsigned integer: ") + env);
    }
  }
  return 0;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ConfigError("not a number: '" + cell + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

CentromereVector theta_or_known(const GenomeSpec& genome, const std::string& theta) {
  if (!theta.empty()) {
    auto v = parse_list(theta);
    if (v.size() != genome.size()) throw ConfigError("--theta needs one value per chromosome");
    return v;
  }
  auto known = known_centromeres(genome);
  if (!known) throw ConfigError("--theta is required for this genome");
  return *known;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

struct Options {
  std::string genome, theta, out, in, mode = "joint", ref_mode = "raw", method, config, reference, summary;
  std::string samples, results, checkpoint, context, theta_ref;
  std::uint64_t seed = 0;
  bool seed_set = false, prior = false, noise_free = false, weighted = false, naive = false;
  std::size_t n_train = 5000, epochs = 200, patience = 20, batch = 32, rounds = 11, n_per_round = 1000, jobs = 1;
  std::size_t max_iters = 200;
  double lr = 5e-4, accept = 0.05, kernel_sd = 0.0, tol = 1e-6;
};

int cmd_simulate(const Options& o) {
  const GenomeSpec genome = GenomeSpec::load(o.genome);
  Rng rng(o.seed);
  const CentromereVector theta = o.prior ? sample_prior(genome, rng) : theta_or_known(genome, o.theta);
  SimOptions so;
  if (o.noise_free) so.noise_frac = 0.0;
  const ContactMap map = simulate_map(genome, theta, rng, so);
  save_map(map, o.out, MapMetadata{genome.hash(), genome.resolution(), theta, o.seed, false});
  print_json({{"out", o.out}, {"theta", theta}, {"seed", o.seed}});
  return 0;
}

int cmd_make_reference(const Options& o) {
  const GenomeSpec genome = GenomeSpec::load(o.genome);
  const Reference ref = make_reference(genome, theta_or_known(genome, o.theta), o.seed, parse_reference_mode(o.ref_mode));
  save_map(ref.map, o.out, ref.meta);
  print_json({{"out", o.out}, {"theta_ref", *ref.meta.theta_ref}, {"seed", o.seed}, {"normalized", ref.meta.normalized}});
  return 0;
}

int cmd_normalize(const Options& o) {
  const GenomeSpec genome = GenomeSpec::load(o.genome);
  const ContactMap map = load_map(o.in, genome);
  MapMetadata meta = load_map_metadata(o.in);
  const IceOptions io{o.max_iters, o.tol};
  const IceResult r = ice_normalize(map.assemble(), io);
  meta.normalized = true;
  save_map(ContactMap::from_assembled(genome, r.matrix), o.out, meta);
  print_json({{"out", o.out}, {"iterations", r.iterations}, {"converged", r.converged}, {"zero_rows", r.zero_rows}});
  return r.converged ? 0 : 3;
}

int cmd_train_summary(const Options& o) {
  ExperimentConfig c;
  c.genome = GenomeSpec::load(o.genome);
  c.mode = parse_summary_mode(o.mode);
  c.seed = o.seed;
  c.summary.n_train = o.n_train;
  c.summary.train.lr = o.lr;
  c.summary.train.epochs = o.epochs;
  c.summary.train.patience = o.patience;
  c.summary.train.batch_size = o.batch;
  SummaryTrainReport rep;
  SummaryNet net = pretrain_summary(c, &rep);
  net.save(o.out);
  print_json({{"out", o.out},
              {"epochs_run", rep.epochs_run},
              {"best_epoch", rep.best_epoch},
              {"initial_val_loss", rep.initial_val_loss()},
              {"best_val_loss", rep.best_val_loss()}});
  return 0;
}

int cmd_infer(const Options& o, const CLI::App& app) {
  json j = o.config.empty() ? json::object() : read_json(o.config);
  const fs::path base = o.config.empty() ? fs::current_path() : fs::path(o.config).parent_path();
  auto given = [&](const char* flag) { return app.count(flag) > 0; };
  if (given("--genome")) j["genome"] = fs::absolute(o.genome).string();
  if (!j.contains("genome")) throw ConfigError("a genome is required (--genome or config)");
  if (given("--reference")) j["reference"]["path"] = fs::absolute(o.reference).string();
  if (given("--theta-ref")) j["reference"]["theta_ref"] = parse_list(o.theta_ref);
  if (given("--method")) j["method"] = o.method;
  if (given("--mode")) j["mode"] = o.mode;
  if (given("--rounds")) j["rounds"] = o.rounds;
  if (given("--n-per-round")) j["n_per_round"] = o.n_per_round;
  if (given("--accept")) j["accept_fraction"] = o.accept;
  if (given("--kernel-sd")) j["kernel_sd"] = o.kernel_sd;
  if (given("--jobs")) j["jobs"] = o.jobs;
  if (given("--summary")) j["summary"]["checkpoint"] = fs::absolute(o.summary).string();
  if (given("--n-train")) j["summary"]["n_train"] = o.n_train;
  if (given("--naive")) j["snpe"]["atomic"] = false;
  if (o.seed_set || !j.contains("seed")) j["seed"] = o.seed;
  const ExperimentConfig config = ExperimentConfig::from_json(j, base);
  const ExperimentResult r = run_experiment(config, o.out);
  json summary{{"out", o.out}, {"method", to_string(r.method)}, {"mode", to_string(r.mode)}, {"tasks", json::array()}};
  for (const auto& t : r.tasks) {
    json tj{{"name", t.name}, {"posterior_mean", weighted_mean(t.rounds.back().samples, {})}};
    if (t.rounds.back().metrics) tj["per_dim_abs_error"] = t.rounds.back().metrics->per_dim_abs_error;
    summary["tasks"].push_back(tj);
  }
  print_json(summary);
  return 0;
}

int cmd_evaluate(const Options& o) {
  const SamplesTable t = read_samples_csv(o.samples);
  std::vector<double> ref;
  if (!o.theta_ref.empty()) {
    ref = parse_list(o.theta_ref);
  } else if (!o.genome.empty()) {
    ref = theta_or_known(GenomeSpec::load(o.genome), "");
  } else {
    throw ConfigError("evaluate needs --theta-ref or --genome");
  }
  if (ref.size() != t.columns.size() - 2) throw ConfigError("theta_ref length does not match the samples");
  const SampleMetrics m = evaluate_samples(t.samples, o.weighted ? std::span<const double>(t.weights) : std::span<const double>{}, ref);
  print_json(m.to_json());
  return 0;
}

// Rebuilds the per-round report of one task directory from its exported samples.
std::string report_dir(const fs::path& dir) {
  const json meta = read_json(dir / "task.json");
  if (meta.at("theta_ref").is_null()) throw ConfigError(dir.string() + ": no theta_ref recorded");
  TaskResult task;
  task.theta_ref = meta.at("theta_ref").get<CentromereVector>();
  for (const auto& n : meta.at("chromosomes")) task.dim_names.push_back(n.get<std::string>());
  task.prior.lower.assign(task.theta_ref->size(), 0.0);
  task.prior.upper.assign(task.theta_ref->size(), 1.0);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir / "rounds")) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (std::size_t k = 0; k < files.size(); ++k) {
    const SamplesTable t = read_samples_csv(files[k]);
    RoundResult r;
    r.round = k + 1;
    r.metrics = evaluate_samples(t.samples, {}, *task.theta_ref);
    task.rounds.push_back(std::move(r));
  }
  return round_report(task, parse_method(meta.at("method").get<std::string>()));
}

int cmd_report(const Options& o) {
  const fs::path dir = o.results;
  std::string text;
  if (fs::exists(dir / "rounds")) {
    text = report_dir(dir);
  } else {
    std::vector<fs::path> subs;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory() && fs::exists(e.path() / "rounds")) subs.push_back(e.path());
    if (subs.empty()) throw ConfigError(dir.string() + " holds no results");
    std::sort(subs.begin(), subs.end());
    for (const auto& s : subs) text += "# " + s.filename().string() + "\n" + report_dir(s);
  }
  if (o.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream(o.out) << text;
  }
  return 0;
}

int cmd_logprob(const Options& o) {
  const PosteriorEstimate e = PosteriorEstimate::load(o.checkpoint);
  const auto theta = parse_list(o.theta);
  const std::vector<double> context = o.context.empty() ? e.context : parse_list(o.context);
  const double lp = e.posterior.log_prob(theta, context);
  print_json({{"theta", theta}, {"context", context}, {"log_prob", std::isfinite(lp) ? json(lp) : json(nullptr)},
              {"in_support", std::isfinite(lp)}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Centromere inference from Hi-C contact maps"};
  app.require_subcommand(1);
  Options o;
  try {
    o.seed = default_seed();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  auto seed_opt = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t v) { o.seed = v, o.seed_set = true; }, "Random seed (default $HICENTRO_SEED or 0)");
  };

  auto* sim = app.add_subcommand("simulate", "Simulate one contact map");
  sim->add_option("--genome", o.genome, "Genome spec JSON")->required();
  sim->add_option("--theta", o.theta, "Comma-separated centromere positions (bp)");
  sim->add_flag("--prior", o.prior, "Draw the centromeres from the prior");
  sim->add_flag("--noise-free", o.noise_free, "Disable the noise model");
  sim->add_option("--out", o.out, "Output map directory")->required();
  seed_opt(sim);

  auto* mkref = app.add_subcommand("make-reference", "Simulate a reference map at known centromeres");
  mkref->add_option("--genome", o.genome)->required();
  mkref->add_option("--theta", o.theta, "Centromeres (default: known positions)");
  mkref->add_option("--mode", o.ref_mode, "raw or normalized");
  mkref->add_option("--out", o.out)->required();
  seed_opt(mkref);

  auto* norm = app.add_subcommand("normalize", "ICE-normalize a map");
  norm->add_option("--genome", o.genome)->required();
  norm->add_option("--in", o.in)->required();
  norm->add_option("--out", o.out)->required();
  norm->add_option("--max-iters", o.max_iters);
  norm->add_option("--tol", o.tol);

  auto* train = app.add_subcommand("train-summary", "Train a summary network");
  train->add_option("--genome", o.genome)->required();
  train->add_option("--mode", o.mode, "joint or per-chromosome");
  train->add_option("--n-train", o.n_train);
  train->add_option("--lr", o.lr);
  train->add_option("--epochs", o.epochs);
  train->add_option("--patience", o.patience);
  train->add_option("--batch", o.batch);
  train->add_option("--out", o.out, "Checkpoint path")->required();
  seed_opt(train);

  auto* infer = app.add_subcommand("infer", "Run an inference experiment");
  infer->add_option("--config", o.config, "Experiment config JSON (flags override)");
  infer->add_option("--genome", o.genome);
  infer->add_option("--reference", o.reference, "Reference map directory");
  infer->add_option("--theta-ref", o.theta_ref, "True centromeres for metrics");
  infer->add_option("--method", o.method, "abc-pearson, abc-cnn or snpe");
  infer->add_option("--mode", o.mode, "joint or per-chromosome");
  infer->add_option("--rounds", o.rounds);
  infer->add_option("--n-per-round", o.n_per_round);
  infer->add_option("--accept", o.accept);
  infer->add_option("--kernel-sd", o.kernel_sd);
  infer->add_option("--jobs", o.jobs);
  infer->add_option("--summary", o.summary, "Pretrained summary checkpoint");
  infer->add_option("--n-train", o.n_train);
  infer->add_flag("--naive", o.naive, "SNPE without the atomic correction");
  infer->add_option("--out", o.out, "Results directory")->required();
  seed_opt(infer);

  auto* eval = app.add_subcommand("evaluate", "Metrics of a samples CSV");
  eval->add_option("--samples", o.samples)->required();
  eval->add_option("--theta-ref", o.theta_ref);
  eval->add_option("--genome", o.genome, "Use the known centromeres of this genome");
  eval->add_flag("--weighted", o.weighted, "Weight the mean error by the weight column");

  auto* report = app.add_subcommand("report", "Per-round metric curves from a results directory");
  report->add_option("--results", o.results)->required();
  report->add_option("--out", o.out, "CSV path (default stdout)");

  auto* logprob = app.add_subcommand("logprob", "Evaluate a trained posterior");
  logprob->add_option("--checkpoint", o.checkpoint)->required();
  logprob->add_option("--theta", o.theta)->required();
  logprob->add_option("--context", o.context, "Summary vector (default: the stored observation)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim) return cmd_simulate(o);
    if (*mkref) return cmd_make_reference(o);
    if (*norm) return cmd_normalize(o);
    if (*train) return cmd_train_summary(o);
    if (*infer) return cmd_infer(o, *infer);
    if (*eval) return cmd_evaluate(o);
    if (*report) return cmd_report(o);
    if (*logprob) return cmd_logprob(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const LoadError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
