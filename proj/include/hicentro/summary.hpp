#pragma once

// Learned summary statistic S(C) ~ E[theta | C]: a CNN trunk followed by an
// MLP, trained by least squares regression of theta on simulated maps.
//
// Joint mode reads the whole assembled trans map and predicts all L
// centromeres. Per-chromosome mode reads one BlockRow: every partner block is
// zero-padded to (max bins, max bins), passed through the shared trunk, the
// features are mean-pooled across partners, and the chromosome's own head
// predicts theta_i.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hicentro/genome.hpp"
#include "hicentro/metrics.hpp"
#include "hicentro/nn.hpp"

namespace hicentro {

enum class SummaryMode { joint, per_chromosome };

[[nodiscard]] SummaryMode parse_summary_mode(const std::string& s);
[[nodiscard]] std::string to_string(SummaryMode mode);

struct SummaryConfig {
  std::vector<std::size_t> channels{8, 16};
  std::size_t kernel{3};
  std::size_t stride{2};
  std::size_t hidden{128};  // MLP hidden width (joint MLP or each head)
  bool max_normalize{true};

  [[nodiscard]] nlohmann::json to_json() const;
  static SummaryConfig from_json(const nlohmann::json& j);
};

struct SummaryTrainConfig {
  std::size_t epochs{200};
  std::size_t patience{20};
  std::size_t batch_size{32};
  double lr{5e-4};
  double val_fraction{0.1};
  std::uint64_t seed{0};
  bool verbose{false};
};

struct SummaryTrainReport {
  std::vector<double> train_loss;  // per-epoch mean batch loss (scaled units)
  std::vector<double> val_loss;    // index 0 is the untrained net
  std::size_t best_epoch{0};
  std::size_t epochs_run{0};
  [[nodiscard]] double initial_val_loss() const { return val_loss.front(); }
  [[nodiscard]] double best_val_loss() const { return val_loss.at(best_epoch); }
};

// Training pairs generated on demand: theta is kept, maps are rebuilt from a
// callback (usually a seeded simulation) each time they are needed.
struct JointDataset {
  Samples thetas;
  std::function<ContactMap(std::size_t)> map_at;
  [[nodiscard]] std::size_t size() const { return thetas.size(); }
};

struct RowDataset {
  std::vector<std::size_t> chromosomes;
  std::vector<double> thetas;
  std::function<BlockRow(std::size_t)> row_at;
  [[nodiscard]] std::size_t size() const { return thetas.size(); }
};

class SummaryNet {
 public:
  SummaryNet(GenomeSpec genome, SummaryMode mode, SummaryConfig config = {}, std::uint64_t seed = 0);

  SummaryNet(const SummaryNet&) = delete;
  SummaryNet& operator=(const SummaryNet&) = delete;
  SummaryNet(SummaryNet&&) = default;
  SummaryNet& operator=(SummaryNet&&) = default;

  [[nodiscard]] const GenomeSpec& genome() const noexcept { return genome_; }
  [[nodiscard]] SummaryMode mode() const noexcept { return mode_; }
  [[nodiscard]] const SummaryConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] std::size_t head_count() const noexcept { return heads_.size(); }
  [[nodiscard]] std::size_t output_dim() const;

  // Network inputs, preprocessed (per-block max normalization when enabled).
  [[nodiscard]] ad::Tensor joint_input(std::span<const ContactMap> maps) const;
  [[nodiscard]] ad::Tensor row_input(std::span<const BlockRow> rows) const;

  // Scaled outputs (theta / length). joint: [B, L]; head: [B, 1].
  ad::Var forward_joint(ad::Graph& g, const ad::Tensor& input);
  ad::Var forward_joint(ad::Graph& g, const ad::Tensor& input) const;
  ad::Var forward_head(ad::Graph& g, const ad::Tensor& input, std::size_t chrom);
  ad::Var forward_head(ad::Graph& g, const ad::Tensor& input, std::size_t chrom) const;

  // Deterministic forward passes rescaled to bp.
  [[nodiscard]] std::vector<double> summarize(const ContactMap& map) const;
  [[nodiscard]] Samples summarize(std::span<const ContactMap> maps) const;
  [[nodiscard]] double summarize(const BlockRow& row) const;
  [[nodiscard]] std::vector<double> summarize(std::span<const BlockRow> rows) const;

  [[nodiscard]] std::vector<nn::Parameter*> parameters();
  [[nodiscard]] std::vector<nn::Parameter*> trunk_parameters();
  [[nodiscard]] std::vector<nn::Parameter*> head_parameters(std::size_t chrom);

  void save(const std::filesystem::path& path);
  static SummaryNet load(const std::filesystem::path& path);

 private:
  struct Head {
    nn::Dense hidden;
    nn::Dense out;
  };

  template <typename Self>
  static ad::Var trunk(Self& self, ad::Graph& g, const ad::Tensor& input);
  template <typename Self>
  static ad::Var apply_joint(Self& self, ad::Graph& g, const ad::Tensor& input);
  template <typename Self>
  static ad::Var apply_head(Self& self, ad::Graph& g, const ad::Tensor& input, std::size_t chrom);

  void check_map(const ContactMap& map) const;
  void check_row(const BlockRow& row) const;
  [[nodiscard]] std::size_t input_side() const;
  [[nodiscard]] std::size_t trunk_features() const;

  GenomeSpec genome_;
  SummaryMode mode_;
  SummaryConfig config_;
  std::uint64_t seed_;
  std::vector<nn::Conv2d> convs_;
  std::vector<Head> heads_;  // one head in joint mode (hidden -> L), L heads otherwise
};

// Minimizes (1/N) sum ||S(C^n) - theta^n||^2 in scaled units with Adam,
// holding out a validation split for early stopping; the best-validation
// parameters are kept and rounded to f32.
SummaryTrainReport train_summary(SummaryNet& net, const JointDataset& data, const SummaryTrainConfig& config);
SummaryTrainReport train_summary(SummaryNet& net, const RowDataset& data, const SummaryTrainConfig& config);

// Mean squared scaled error over a dataset, evaluated batch by batch.
[[nodiscard]] double summary_loss(const SummaryNet& net, const JointDataset& data, std::span<const std::size_t> indices);
[[nodiscard]] double summary_loss(const SummaryNet& net, const RowDataset& data, std::span<const std::size_t> indices);

}  // namespace hicentro
