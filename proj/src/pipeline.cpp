#include "hicentro/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "hicentro/error.hpp"
#include "hicentro/parallel.hpp"
#include "hicentro/simulator.hpp"
#include "hicentro/smc_abc.hpp"
#include "hicentro/snpe.hpp"

namespace hicentro {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kChunk = 256;

// Stream tags for derive_seed.
constexpr std::uint64_t kSummaryData = 0x53554d44;
constexpr std::uint64_t kSummaryNet = 0x53554d4e;
constexpr std::uint64_t kSummaryTrain = 0x53554d54;
constexpr std::uint64_t kTask = 0x5441534b;
constexpr std::uint64_t kPosterior = 0x504f5354;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  out << text;
}

fs::path resolve(const fs::path& p, const fs::path& base) { return p.is_absolute() || base.empty() ? p : base / p; }

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json summary_train_json(const SummaryTrainConfig& c) {
  return {{"epochs", c.epochs},         {"patience", c.patience}, {"batch_size", c.batch_size},
          {"lr", c.lr},                 {"val_fraction", c.val_fraction}};
}

SummaryTrainConfig summary_train_from(const json& j) {
  SummaryTrainConfig c;
  take(j, "epochs", c.epochs);
  take(j, "patience", c.patience);
  take(j, "batch_size", c.batch_size);
  take(j, "lr", c.lr);
  take(j, "val_fraction", c.val_fraction);
  return c;
}

json flow_train_json(const FlowTrainConfig& c) {
  return {{"max_epochs", c.max_epochs}, {"patience", c.patience},         {"batch_size", c.batch_size},
          {"lr", c.lr},                 {"val_fraction", c.val_fraction}, {"atoms", c.atoms}};
}

FlowTrainConfig flow_train_from(const json& j) {
  FlowTrainConfig c;
  take(j, "max_epochs", c.max_epochs);
  take(j, "patience", c.patience);
  take(j, "batch_size", c.batch_size);
  take(j, "lr", c.lr);
  take(j, "val_fraction", c.val_fraction);
  take(j, "atoms", c.atoms);
  return c;
}

std::string dim_name(const TaskResult& task, std::size_t d) {
  return d < task.dim_names.size() ? task.dim_names[d] : "theta_" + std::to_string(d);
}

std::string two_digits(std::size_t k) { return (k < 10 ? "0" : "") + std::to_string(k); }

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_{std::chrono::steady_clock::now()};
};

// Everything a task needs about its observation type.
template <typename Obs>
struct TaskModel {
  std::function<Obs(const CentromereVector&, std::uint64_t)> simulate;
  std::function<double(const Obs&)> correlation;           // with the reference
  std::function<Samples(std::span<const Obs>)> summarize;  // bp
};

template <typename Obs>
std::vector<Obs> simulate_chunk(const TaskModel<Obs>& model, const Samples& thetas,
                                std::span<const std::uint64_t> seeds, std::size_t begin, std::size_t end,
                                std::size_t jobs) {
  std::vector<Obs> out(end - begin);
  parallel_for(end - begin, jobs, [&](std::size_t k) { out[k] = model.simulate(thetas[begin + k], seeds[begin + k]); });
  return out;
}

template <typename Obs>
Samples batch_summaries(const TaskModel<Obs>& model, const Samples& thetas, std::span<const std::uint64_t> seeds,
                        std::size_t jobs) {
  Samples out;
  out.reserve(thetas.size());
  for (std::size_t s = 0; s < thetas.size(); s += kChunk) {
    const auto chunk = simulate_chunk(model, thetas, seeds, s, std::min(thetas.size(), s + kChunk), jobs);
    auto part = model.summarize(chunk);
    for (auto& v : part) out.push_back(std::move(v));
  }
  return out;
}

template <typename Obs>
TaskResult run_task(const ExperimentConfig& config, TaskResult task, const TaskModel<Obs>& model,
                    const std::optional<std::vector<double>>& observed_summary, std::uint64_t seed,
                    std::size_t jobs, const fs::path& checkpoint) {
  const std::size_t T = config.rounds;
  if (config.method == Method::snpe) {
    BatchFeatures features = [&](const Samples& thetas, std::span<const std::uint64_t> seeds) {
      return batch_summaries(model, thetas, seeds, jobs);
    };
    SnpeConfig sc;
    sc.rounds = T;
    sc.n_per_round = config.n_per_round;
    sc.flow = config.snpe.flow;
    sc.train = config.snpe.train;
    sc.atomic = config.snpe.atomic;
    sc.seed = seed;
    sc.verbose = config.snpe.train.verbose;
    auto rounds = run_snpe(task.prior, features, observed_summary.value(), sc);
    if (!checkpoint.empty()) {
      fs::create_directories(checkpoint.parent_path());
      rounds.back().estimate.save(checkpoint);
    }
    for (auto& r : rounds) {
      Rng rng(derive_seed(seed, kPosterior + r.estimate.round));
      RoundResult rr;
      rr.round = r.estimate.round;
      rr.samples = r.estimate.sample(config.snpe.posterior_samples, rng);
      rr.weights.assign(rr.samples.size(), 1.0 / static_cast<double>(rr.samples.size()));
      rr.scores = r.estimate.posterior.log_prob(rr.samples, r.estimate.context);
      task.rounds.push_back(std::move(rr));
    }
    return task;
  }

  BatchDistance distance;
  if (config.method == Method::abc_pearson) {
    distance = [&](const Samples& thetas, std::span<const std::uint64_t> seeds) {
      std::vector<double> d(thetas.size());
      parallel_for(thetas.size(), jobs,
                   [&](std::size_t k) { d[k] = 1.0 - model.correlation(model.simulate(thetas[k], seeds[k])); });
      return d;
    };
  } else {
    distance = [&](const Samples& thetas, std::span<const std::uint64_t> seeds) {
      const Samples s = batch_summaries(model, thetas, seeds, jobs);
      std::vector<double> d(s.size());
      for (std::size_t k = 0; k < s.size(); ++k) d[k] = euclidean(s[k], *observed_summary);
      return d;
    };
  }
  AbcConfig ac;
  ac.rounds = T;
  ac.n_per_round = config.n_per_round;
  ac.accept_fraction = config.accept_fraction;
  ac.kernel_sd = config.kernel();
  ac.seed = seed;
  for (auto& pop : run_smc_abc(task.prior, distance, ac)) {
    RoundResult rr;
    rr.round = pop.round + 1;
    rr.samples = std::move(pop.particles);
    rr.weights = std::move(pop.weights);
    rr.scores = std::move(pop.distances);
    rr.threshold = pop.threshold;
    task.rounds.push_back(std::move(rr));
  }
  return task;
}

void evaluate_task(TaskResult& task, std::size_t density_points) {
  for (auto& r : task.rounds) {
    // ABC metrics use the plain mean of the accepted set (the top fraction).
    if (task.theta_ref) r.metrics = evaluate_samples(r.samples, {}, *task.theta_ref);
  }
  if (!task.rounds.empty()) {
    const auto& last = task.rounds.back();
    task.density = export_density(last.samples, last.weights, task.prior, density_points);
  }
}

json task_json(const TaskResult& task, const GenomeSpec& genome) {
  json j;
  j["name"] = task.name;
  j["chromosomes"] = json::array();
  for (auto c : task.chromosomes) j["chromosomes"].push_back(genome.name(c));
  j["theta_ref"] = task.theta_ref ? json(*task.theta_ref) : json(nullptr);
  j["rounds"] = json::array();
  for (const auto& r : task.rounds) {
    json rj{{"round", r.round}, {"n_samples", r.samples.size()}};
    if (r.threshold) rj["threshold"] = *r.threshold;
    rj["posterior_mean"] = weighted_mean(r.samples, {});
    if (r.metrics) rj["metrics"] = r.metrics->to_json();
    j["rounds"].push_back(std::move(rj));
  }
  return j;
}

void write_task(const fs::path& dir, const TaskResult& task, const GenomeSpec& genome, Method method) {
  fs::create_directories(dir / "rounds");
  for (const auto& r : task.rounds) write_samples_csv(dir / "rounds" / ("round_" + two_digits(r.round) + ".csv"), task, r);
  write_text(dir / "report.csv", round_report(task, method));
  write_density_csv(dir / "density.csv", task);
  json j = task_json(task, genome);
  j["method"] = to_string(method);
  j["resolution"] = genome.resolution();
  write_text(dir / "task.json", j.dump(2) + "\n");
}

}  // namespace

Method parse_method(const std::string& s) {
  if (s == "abc-pearson") return Method::abc_pearson;
  if (s == "abc-cnn") return Method::abc_cnn;
  if (s == "snpe") return Method::snpe;
  throw ConfigError("unknown method '" + s + "' (expected abc-pearson, abc-cnn or snpe)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::abc_pearson: return "abc-pearson";
    case Method::abc_cnn: return "abc-cnn";
    case Method::snpe: return "snpe";
  }
  return "?";
}

std::optional<CentromereVector> known_centromeres(const GenomeSpec& genome) {
  static const std::map<std::string, double> table{
      {"chrI", 151524},   {"chrII", 238207},  {"chrIII", 114385}, {"chrIV", 449711},
      {"chrV", 151987},   {"chrVI", 148510},  {"chrVII", 496920}, {"chrVIII", 105586},
      {"chrIX", 355629},  {"chrX", 436307},   {"chrXI", 440129},  {"chrXII", 150828},
      {"chrXIII", 268031}, {"chrXIV", 628758}, {"chrXV", 326584},  {"chrXVI", 555957}};
  CentromereVector out;
  for (std::size_t i = 0; i < genome.size(); ++i) {
    auto it = table.find(genome.name(i));
    if (it == table.end() || it->second >= static_cast<double>(genome.length(i)) - 1.0) return std::nullopt;
    out.push_back(it->second);
  }
  return out;
}

// ---- config -------------------------------------------------------------------

json ExperimentConfig::to_json() const {
  json j;
  j["genome"] = genome.to_json();
  json ref{{"seed", reference.seed}, {"mode", reference.mode == ReferenceMode::raw ? "raw" : "normalized"}};
  if (reference.path) ref["path"] = reference.path->string();
  if (reference.theta_ref) ref["theta_ref"] = *reference.theta_ref;
  j["reference"] = ref;
  j["method"] = to_string(method);
  j["mode"] = to_string(mode);
  j["rounds"] = rounds;
  j["n_per_round"] = n_per_round;
  j["accept_fraction"] = accept_fraction;
  j["kernel_sd"] = kernel();
  j["seed"] = seed;
  j["jobs"] = jobs;
  if (chromosomes) {
    j["chromosomes"] = json::array();
    for (auto c : *chromosomes) j["chromosomes"].push_back(genome.name(c));
  }
  json sj{{"n_train", summary.n_train}, {"net", summary.net.to_json()}, {"train", summary_train_json(summary.train)}};
  if (summary.checkpoint) sj["checkpoint"] = summary.checkpoint->string();
  j["summary"] = sj;
  j["snpe"] = {{"flow", snpe.flow.to_json()},
               {"train", flow_train_json(snpe.train)},
               {"atomic", snpe.atomic},
               {"posterior_samples", snpe.posterior_samples}};
  j["density_points"] = density_points;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base) {
  static const std::set<std::string> known{"genome", "reference", "method",  "mode",     "rounds",
                                           "n_per_round", "accept_fraction", "kernel_sd", "seed", "jobs",
                                           "chromosomes", "summary", "snpe", "density_points"};
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
  ExperimentConfig c;
  try {
    const json& g = j.at("genome");
    if (g.is_string()) {
      c.genome_path = resolve(g.get<std::string>(), base);
      c.genome = GenomeSpec::load(*c.genome_path);
    } else {
      c.genome = GenomeSpec::from_json(g);
    }
    if (j.contains("reference")) {
      const json& r = j.at("reference");
      if (r.contains("path")) c.reference.path = resolve(r.at("path").get<std::string>(), base);
      if (r.contains("theta_ref")) c.reference.theta_ref = r.at("theta_ref").get<CentromereVector>();
      take(r, "seed", c.reference.seed);
      if (r.contains("mode")) c.reference.mode = parse_reference_mode(r.at("mode").get<std::string>());
    }
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    if (j.contains("mode")) c.mode = parse_summary_mode(j.at("mode").get<std::string>());
    take(j, "rounds", c.rounds);
    take(j, "n_per_round", c.n_per_round);
    take(j, "accept_fraction", c.accept_fraction);
    if (j.contains("kernel_sd")) c.kernel_sd = j.at("kernel_sd").get<double>();
    take(j, "seed", c.seed);
    take(j, "jobs", c.jobs);
    if (j.contains("chromosomes")) {
      std::vector<std::size_t> idx;
      for (const auto& e : j.at("chromosomes")) {
        if (e.is_number_unsigned()) {
          idx.push_back(e.get<std::size_t>());
          continue;
        }
        const auto name = e.get<std::string>();
        std::size_t k = 0;
        while (k < c.genome.size() && c.genome.name(k) != name) ++k;
        if (k == c.genome.size()) throw ConfigError("unknown chromosome '" + name + "'");
        idx.push_back(k);
      }
      c.chromosomes = idx;
    }
    if (j.contains("summary")) {
      const json& s = j.at("summary");
      if (s.contains("checkpoint")) c.summary.checkpoint = resolve(s.at("checkpoint").get<std::string>(), base);
      take(s, "n_train", c.summary.n_train);
      if (s.contains("net")) c.summary.net = SummaryConfig::from_json(s.at("net"));
      if (s.contains("train")) c.summary.train = summary_train_from(s.at("train"));
    }
    if (j.contains("snpe")) {
      const json& s = j.at("snpe");
      if (s.contains("flow")) c.snpe.flow = FlowConfig::from_json(s.at("flow"));
      if (s.contains("train")) c.snpe.train = flow_train_from(s.at("train"));
      take(s, "atomic", c.snpe.atomic);
      take(s, "posterior_samples", c.snpe.posterior_samples);
    }
    take(j, "density_points", c.density_points);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  } catch (const LoadError& e) {
    throw ConfigError(e.what());
  }
  if (c.rounds == 0) throw ConfigError("rounds must be positive");
  if (c.method != Method::snpe && c.n_per_round < 20) throw ConfigError("n_per_round must be at least 20 for ABC");
  if (c.n_per_round < 2) throw ConfigError("n_per_round must be at least 2");
  if (!(c.accept_fraction > 0.0 && c.accept_fraction <= 1.0)) throw ConfigError("accept_fraction must be in (0, 1]");
  if (c.kernel_sd && !(*c.kernel_sd > 0.0)) throw ConfigError("kernel_sd must be positive");
  if (c.jobs == 0) throw ConfigError("jobs must be positive");
  if (c.snpe.posterior_samples == 0) throw ConfigError("posterior_samples must be positive");
  if (c.chromosomes)
    for (auto k : *c.chromosomes)
      if (k >= c.genome.size()) throw ConfigError("chromosome index out of range");
  if (c.reference.theta_ref && c.reference.theta_ref->size() != c.genome.size()) {
    throw ConfigError("reference.theta_ref must have one entry per chromosome");
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  return from_json(read_json_file(path), path.parent_path());
}

// ---- stages -------------------------------------------------------------------

Reference experiment_reference(const ExperimentConfig& config) {
  const auto& ref = config.reference;
  if (ref.path) {
    Reference r{load_map(*ref.path, config.genome), load_map_metadata(*ref.path)};
    if (ref.theta_ref) r.meta.theta_ref = ref.theta_ref;
    return r;
  }
  auto theta = ref.theta_ref ? ref.theta_ref : known_centromeres(config.genome);
  if (!theta) throw ConfigError("synthetic reference needs reference.theta_ref for this genome");
  return make_reference(config.genome, *theta, ref.seed, ref.mode);
}

SummaryNet pretrain_summary(const ExperimentConfig& config, SummaryTrainReport* report) {
  const GenomeSpec& genome = config.genome;
  const std::uint64_t data_seed = derive_seed(config.seed, kSummaryData);
  Rng rng(data_seed);
  SummaryNet net(genome, config.mode, config.summary.net, derive_seed(config.seed, kSummaryNet));
  SummaryTrainConfig tc = config.summary.train;
  tc.seed = derive_seed(config.seed, kSummaryTrain);
  const std::size_t n = config.summary.n_train;
  SummaryTrainReport rep;
  if (config.mode == SummaryMode::joint) {
    JointDataset data;
    const BoxPrior prior = BoxPrior::from_genome(genome);
    for (std::size_t k = 0; k < n; ++k) data.thetas.push_back(prior.sample(rng));
    data.map_at = [&genome, &data, data_seed](std::size_t k) {
      Rng r(derive_seed(data_seed, k + 1));
      return simulate_map(genome, data.thetas[k], r);
    };
    rep = train_summary(net, data, tc);
  } else {
    RowDataset data;
    std::vector<BoxPrior> priors;
    for (std::size_t i = 0; i < genome.size(); ++i) priors.push_back(BoxPrior::from_chromosome(genome, i));
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t c = k % genome.size();
      data.chromosomes.push_back(c);
      data.thetas.push_back(priors[c].sample(rng).front());
    }
    data.row_at = [&genome, &data, data_seed](std::size_t k) {
      Rng r(derive_seed(data_seed, k + 1));
      return simulate_block_row(genome, data.chromosomes[k], data.thetas[k], r);
    };
    rep = train_summary(net, data, tc);
  }
  if (report) *report = std::move(rep);
  return net;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const fs::path& out_dir, const SummaryNet* summary) {
  const GenomeSpec& genome = config.genome;
  ExperimentResult result;
  result.method = config.method;
  result.mode = config.mode;
  result.resolution = genome.resolution();
  json timings = json::object();
  Stopwatch clock;

  auto stage = [&](const std::string& name, auto&& body) {
    try {
      body();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    timings[name] = clock.lap();
  };

  if (!out_dir.empty()) {
    stage("setup", [&] {
      fs::create_directories(out_dir);
      write_text(out_dir / "config.json", config.to_json().dump(2) + "\n");
    });
  }

  Reference reference;
  stage("reference", [&] { reference = experiment_reference(config); });
  std::optional<CentromereVector> theta_ref = config.reference.theta_ref;
  if (!theta_ref) theta_ref = reference.meta.theta_ref;
  if (!theta_ref) theta_ref = known_centromeres(genome);

  std::optional<SummaryNet> owned;
  const SummaryNet* net = summary;
  if (config.method != Method::abc_pearson && !net) {
    stage("summary", [&] {
      if (config.summary.checkpoint) {
        owned.emplace(SummaryNet::load(*config.summary.checkpoint));
      } else {
        SummaryTrainReport rep;
        owned.emplace(pretrain_summary(config, &rep));
        result.summary_training = std::move(rep);
        if (!out_dir.empty()) owned->save(out_dir / "summary.ckpt");
      }
    });
    net = &*owned;
  }
  if (net && (net->genome() != genome || net->mode() != config.mode)) {
    throw StageError("summary", "summary net was trained for a different genome or mode");
  }

  if (config.mode == SummaryMode::joint) {
    stage("inference", [&] {
      TaskResult task;
      task.name = "joint";
      for (std::size_t i = 0; i < genome.size(); ++i) {
        task.chromosomes.push_back(i);
        task.dim_names.push_back(genome.name(i));
      }
      task.theta_ref = theta_ref;
      task.prior = BoxPrior::from_genome(genome);
      TaskModel<ContactMap> model;
      model.simulate = [&genome](const CentromereVector& th, std::uint64_t s) {
        Rng r(s);
        return simulate_map(genome, th, r);
      };
      model.correlation = [&reference](const ContactMap& m) { return block_pearson(m, reference.map); };
      std::optional<std::vector<double>> observed;
      if (net) {
        model.summarize = [net](std::span<const ContactMap> maps) { return net->summarize(maps); };
        observed = net->summarize(reference.map);
      }
      result.tasks.push_back(
          run_task(config, std::move(task), model, observed, derive_seed(config.seed, kTask), config.jobs,
                   out_dir.empty() ? fs::path{} : out_dir / "posterior.ckpt"));
    });
  } else {
    std::vector<std::size_t> chroms;
    if (config.chromosomes) {
      chroms = *config.chromosomes;
    } else {
      for (std::size_t i = 0; i < genome.size(); ++i) chroms.push_back(i);
    }
    result.tasks.resize(chroms.size());
    const std::size_t outer = std::min(config.jobs, chroms.size());
    const std::size_t inner = outer > 1 ? 1 : config.jobs;
    stage("inference", [&] {
      parallel_for(chroms.size(), outer, [&](std::size_t t) {
        const std::size_t i = chroms[t];
        try {
          TaskResult task;
          task.name = genome.name(i);
          task.chromosomes = {i};
          task.dim_names = {genome.name(i)};
          if (theta_ref) task.theta_ref = CentromereVector{(*theta_ref)[i]};
          task.prior = BoxPrior::from_chromosome(genome, i);
          const BlockRow ref_row = extract_block_row(reference.map, i);
          TaskModel<BlockRow> model;
          model.simulate = [&genome, i](const CentromereVector& th, std::uint64_t s) {
            Rng r(s);
            return simulate_block_row(genome, i, th.front(), r);
          };
          model.correlation = [&ref_row](const BlockRow& row) { return block_pearson(row, ref_row); };
          std::optional<std::vector<double>> observed;
          if (net) {
            model.summarize = [net](std::span<const BlockRow> rows) {
              Samples out;
              for (double v : net->summarize(rows)) out.push_back({v});
              return out;
            };
            observed = std::vector<double>{net->summarize(ref_row)};
          }
          const fs::path ckpt = out_dir.empty() ? fs::path{} : out_dir / genome.name(i) / "posterior.ckpt";
          result.tasks[t] =
              run_task(config, std::move(task), model, observed, derive_seed(config.seed, kTask + 1 + i), inner, ckpt);
          evaluate_task(result.tasks[t], config.density_points);
          if (!out_dir.empty()) write_task(out_dir / genome.name(i), result.tasks[t], genome, config.method);
        } catch (const std::exception& e) {
          throw StageError("inference:" + genome.name(i), e.what());
        }
      });
    });
  }

  if (config.mode == SummaryMode::joint) {
    stage("evaluate", [&] {
      for (auto& t : result.tasks) evaluate_task(t, config.density_points);
    });
    if (!out_dir.empty()) stage("export", [&] { write_task(out_dir, result.tasks.front(), genome, config.method); });
  }

  if (!out_dir.empty()) {
    stage("export-summary", [&] {
      json metrics = result.metrics_json();
      metrics["genome"] = genome.to_json();
      write_text(out_dir / "metrics.json", metrics.dump(2) + "\n");
      if (config.mode == SummaryMode::per_chromosome) {
        std::ostringstream csv;
        csv << "task,round,method,euclidean_mean,mmd,w2,abs_error\n";
        for (const auto& t : result.tasks)
          for (const auto& r : t.rounds) {
            if (!r.metrics) continue;
            csv << t.name << ',' << r.round << ',' << to_string(config.method) << ','
                << format_double(r.metrics->euclidean_mean) << ',' << format_double(r.metrics->mmd) << ','
                << format_double(r.metrics->w2) << ',' << format_double(r.metrics->per_dim_abs_error.front()) << '\n';
          }
        write_text(out_dir / "report.csv", csv.str());
      }
    });
    write_text(out_dir / "timings.json", timings.dump(2) + "\n");
  }
  return result;
}

json ExperimentResult::metrics_json() const {
  json j;
  j["method"] = to_string(method);
  j["mode"] = to_string(mode);
  j["resolution"] = resolution;
  j["tasks"] = json::array();
  for (const auto& t : tasks) {
    json tj{{"name", t.name}, {"theta_ref", t.theta_ref ? json(*t.theta_ref) : json(nullptr)}};
    tj["rounds"] = json::array();
    for (const auto& r : t.rounds) {
      json rj{{"round", r.round}, {"n_samples", r.samples.size()}};
      if (r.threshold) rj["threshold"] = *r.threshold;
      rj["posterior_mean"] = weighted_mean(r.samples, {});
      if (r.metrics) rj["metrics"] = r.metrics->to_json();
      tj["rounds"].push_back(std::move(rj));
    }
    j["tasks"].push_back(std::move(tj));
  }
  if (summary_training) {
    j["summary_training"] = {{"initial_val_loss", summary_training->initial_val_loss()},
                             {"best_val_loss", summary_training->best_val_loss()},
                             {"best_epoch", summary_training->best_epoch},
                             {"epochs_run", summary_training->epochs_run}};
  }
  return j;
}

// ---- export -------------------------------------------------------------------

std::string round_report(const TaskResult& task, Method method) {
  std::ostringstream out;
  out << "round,method,euclidean_mean,mmd,w2";
  const std::size_t D = task.prior.dim();
  for (std::size_t d = 0; d < D; ++d) out << ",err_" << dim_name(task, d);
  out << '\n';
  for (const auto& r : task.rounds) {
    if (!r.metrics) continue;
    out << r.round << ',' << to_string(method) << ',' << format_double(r.metrics->euclidean_mean) << ','
        << format_double(r.metrics->mmd) << ',' << format_double(r.metrics->w2);
    for (double e : r.metrics->per_dim_abs_error) out << ',' << format_double(e);
    out << '\n';
  }
  return out.str();
}

void write_samples_csv(const fs::path& path, const TaskResult& task, const RoundResult& round) {
  std::ostringstream out;
  for (std::size_t d = 0; d < task.prior.dim(); ++d) out << dim_name(task, d) << ',';
  out << "weight,score\n";
  for (std::size_t k = 0; k < round.samples.size(); ++k) {
    for (double v : round.samples[k]) out << format_double(v) << ',';
    out << format_double(round.weights.at(k)) << ',' << format_double(round.scores.at(k)) << '\n';
  }
  write_text(path, out.str());
}

SamplesTable read_samples_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  SamplesTable t;
  std::string line;
  if (!std::getline(in, line)) throw LoadError(path.string() + ": empty samples file");
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) t.columns.push_back(cell);
  }
  if (t.columns.size() < 3 || t.columns[t.columns.size() - 2] != "weight" || t.columns.back() != "score") {
    throw LoadError(path.string() + ": expected theta columns followed by weight,score");
  }
  const std::size_t D = t.columns.size() - 2;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> vals;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw LoadError(path.string() + ": line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (vals.size() != D + 2) throw LoadError(path.string() + ": line " + std::to_string(lineno) + ": wrong column count");
    t.samples.emplace_back(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(D));
    t.weights.push_back(vals[D]);
    t.scores.push_back(vals[D + 1]);
  }
  return t;
}

void write_density_csv(const fs::path& path, const TaskResult& task) {
  std::ostringstream out;
  out << "chromosome,x,density,bandwidth\n";
  for (std::size_t d = 0; d < task.density.size(); ++d) {
    const auto& g = task.density[d];
    for (std::size_t p = 0; p < g.x.size(); ++p)
      out << dim_name(task, d) << ',' << format_double(g.x[p]) << ',' << format_double(g.density[p]) << ','
          << format_double(g.bandwidth) << '\n';
  }
  write_text(path, out.str());
}

}  // namespace hicentro
