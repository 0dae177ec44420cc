#pragma once

// Experiment orchestration: reference, summary pretraining, inference rounds,
// evaluation and export. Joint mode runs one task over the whole genome;
// per-chromosome mode runs one 1D task per chromosome on its BlockRow only.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hicentro/density.hpp"
#include "hicentro/flow.hpp"
#include "hicentro/genome.hpp"
#include "hicentro/hic_io.hpp"
#include "hicentro/metrics.hpp"
#include "hicentro/summary.hpp"

namespace hicentro {

enum class Method { abc_pearson, abc_cnn, snpe };

[[nodiscard]] Method parse_method(const std::string& s);
[[nodiscard]] std::string to_string(Method m);

// Centromere midpoints of S. cerevisiae R64 for chromosomes named chrI..chrXVI.
[[nodiscard]] std::optional<CentromereVector> known_centromeres(const GenomeSpec& genome);

struct ReferenceSettings {
  std::optional<std::filesystem::path> path;  // map directory; synthetic when unset
  std::optional<CentromereVector> theta_ref;  // truth for metrics (defaults to known centromeres)
  std::uint64_t seed{1};
  ReferenceMode mode{ReferenceMode::raw};
};

struct SummarySettings {
  std::optional<std::filesystem::path> checkpoint;  // pretrained net; trained when unset
  std::size_t n_train{5000};
  SummaryConfig net;
  SummaryTrainConfig train;
};

struct SnpeSettings {
  FlowConfig flow;
  FlowTrainConfig train;
  bool atomic{true};
  std::size_t posterior_samples{1000};
};

struct ExperimentConfig {
  GenomeSpec genome;
  std::optional<std::filesystem::path> genome_path;
  ReferenceSettings reference;
  Method method{Method::abc_pearson};
  SummaryMode mode{SummaryMode::joint};
  std::size_t rounds{11};
  std::size_t n_per_round{1000};
  double accept_fraction{0.05};
  std::optional<double> kernel_sd;  // defaults to the resolution
  std::uint64_t seed{0};
  std::size_t jobs{1};
  std::optional<std::vector<std::size_t>> chromosomes;  // per-chromosome subset
  SummarySettings summary;
  SnpeSettings snpe;
  std::size_t density_points{512};

  [[nodiscard]] double kernel() const { return kernel_sd.value_or(static_cast<double>(genome.resolution())); }
  [[nodiscard]] nlohmann::json to_json() const;
  // Relative paths resolve against base_dir.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
};

struct RoundResult {
  std::size_t round{};  // 1-based
  Samples samples;
  std::vector<double> weights;
  std::vector<double> scores;  // ABC distances, or posterior log densities
  std::optional<double> threshold;
  std::optional<SampleMetrics> metrics;
};

struct TaskResult {
  std::string name;  // "joint" or the chromosome name
  std::vector<std::size_t> chromosomes;
  std::vector<std::string> dim_names;  // chromosome name per dimension
  std::optional<CentromereVector> theta_ref;
  BoxPrior prior;
  std::vector<RoundResult> rounds;
  std::vector<DensityGrid> density;  // final round
};

struct ExperimentResult {
  Method method{};
  SummaryMode mode{};
  bp_t resolution{};
  std::vector<TaskResult> tasks;
  std::optional<SummaryTrainReport> summary_training;

  // Deterministic: depends on (config, seed) only.
  [[nodiscard]] nlohmann::json metrics_json() const;
};

// Reference map of the experiment (loaded or simulated).
[[nodiscard]] Reference experiment_reference(const ExperimentConfig& config);

// Summary pretraining stage as run_experiment performs it.
[[nodiscard]] SummaryNet pretrain_summary(const ExperimentConfig& config, SummaryTrainReport* report = nullptr);

// Runs the experiment; when out_dir is non-empty writes config.json,
// metrics.json, report.csv, density.csv, per-round samples and timings.json.
// A supplied summary net replaces the pretraining stage.
ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir = {},
                                const SummaryNet* summary = nullptr);

// One row per round: round, method, euclidean_mean, mmd, w2, err_<name>...
[[nodiscard]] std::string round_report(const TaskResult& task, Method method);

// Samples CSV: one column per dimension, then weight and score.
void write_samples_csv(const std::filesystem::path& path, const TaskResult& task, const RoundResult& round);
struct SamplesTable {
  std::vector<std::string> columns;
  Samples samples;
  std::vector<double> weights;
  std::vector<double> scores;
};
[[nodiscard]] SamplesTable read_samples_csv(const std::filesystem::path& path);

void write_density_csv(const std::filesystem::path& path, const TaskResult& task);

}  // namespace hicentro
