#pragma once

// Conditional masked autoregressive flow p(x | c).
//
// Density direction: each transform maps x to z = (x - mu(x_<d, c)) * exp(-alpha(x_<d, c))
// with a MADE network (two tanh hidden layers, context fed to the first), and
// the order of the coordinates is reversed between transforms. The output
// layers start at zero so a fresh flow is the identity. Inputs and contexts
// are z-scored with statistics fitted once and frozen.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "hicentro/autodiff.hpp"
#include "hicentro/nn.hpp"
#include "hicentro/random.hpp"

namespace hicentro {

struct FlowConfig {
  std::size_t transforms{5};
  std::size_t hidden{50};
  double scale_clamp{5.0};  // alpha = clamp * tanh(raw / clamp)

  [[nodiscard]] nlohmann::json to_json() const;
  static FlowConfig from_json(const nlohmann::json& j);
};

enum class FlowLoss { nll, atomic };

struct FlowTrainConfig {
  std::size_t max_epochs{200};
  std::size_t patience{20};
  std::size_t batch_size{128};
  double lr{1e-3};
  double val_fraction{0.1};
  FlowLoss loss{FlowLoss::nll};
  std::size_t atoms{10};
  std::uint64_t seed{0};
  bool verbose{false};
};

struct FlowTrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;  // index 0 is before the first update
  std::size_t best_epoch{0};
  std::size_t epochs_run{0};
};

class ConditionalMaf {
 public:
  ConditionalMaf() = default;
  ConditionalMaf(std::size_t dim, std::size_t context_dim, FlowConfig config = {}, std::uint64_t seed = 0);

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] std::size_t context_dim() const noexcept { return context_dim_; }
  [[nodiscard]] const FlowConfig& config() const noexcept { return config_; }

  // Fits the frozen z-score statistics (rows are samples). Zero spread maps to 1.
  void fit_standardization(const ad::Tensor& x, const ad::Tensor& c);
  [[nodiscard]] const std::vector<double>& x_mean() const noexcept { return x_mean_; }
  [[nodiscard]] const std::vector<double>& x_scale() const noexcept { return x_scale_; }

  // log p(x | c) per row, [B, 1], on the tape (trainable or frozen binding).
  ad::Var log_prob(ad::Graph& g, const ad::Tensor& x, const ad::Tensor& c);
  ad::Var log_prob(ad::Graph& g, const ad::Tensor& x, const ad::Tensor& c) const;

  [[nodiscard]] std::vector<double> log_prob(const ad::Tensor& x, const ad::Tensor& c) const;

  struct Forward {
    ad::Tensor z;                     // [B, D]
    std::vector<double> log_det;      // log |dz/dx| per row
    std::vector<std::vector<double>> layer_log_det;  // [transform][row], standardization excluded
  };
  [[nodiscard]] Forward forward(const ad::Tensor& x, const ad::Tensor& c) const;
  [[nodiscard]] ad::Tensor inverse(const ad::Tensor& z, const ad::Tensor& c) const;

  // n draws at a single context.
  [[nodiscard]] ad::Tensor sample(std::size_t n, std::span<const double> context, Rng& rng) const;

  [[nodiscard]] std::vector<nn::Parameter*> parameters();

  [[nodiscard]] nlohmann::json header() const;
  static ConditionalMaf from_header(const nlohmann::json& header);

 private:
  struct Made {
    nn::MaskedDense input;
    nn::Dense context;
    nn::MaskedDense hidden;
    nn::MaskedDense mu;
    nn::MaskedDense alpha;
  };
  struct Step {
    ad::Var mu;
    ad::Var alpha;
  };

  template <typename Self>
  static Step apply_made(Self& self, ad::Graph& g, std::size_t k, ad::Var x, ad::Var c);
  template <typename Self>
  static ad::Var apply_log_prob(Self& self, ad::Graph& g, const ad::Tensor& x, const ad::Tensor& c);

  void check(const ad::Tensor& x, const ad::Tensor& c) const;
  [[nodiscard]] ad::Tensor standardize_x(const ad::Tensor& x) const;
  [[nodiscard]] ad::Tensor standardize_c(const ad::Tensor& c) const;
  [[nodiscard]] double log_scale_sum() const;

  std::size_t dim_{0};
  std::size_t context_dim_{0};
  FlowConfig config_;
  std::uint64_t seed_{0};
  std::vector<double> x_mean_, x_scale_, c_mean_, c_scale_;
  std::vector<Made> made_;
  std::vector<std::size_t> reverse_;
};

// Minimizes the mean loss over rows of (x, c) with Adam and early stopping on
// a held-out split; restores the best-validation parameters, rounded to f32.
// The atomic loss contrasts each row against atoms-1 other parameter rows of
// its batch: -log q(x_b | c_b) + logsumexp_k log q(x_k | c_b). log_jacobian,
// when given, is added to every log q (density of the original coordinates).
FlowTrainReport train_flow(ConditionalMaf& flow, const ad::Tensor& x, const ad::Tensor& c,
                           const FlowTrainConfig& config, std::span<const double> log_jacobian = {});

// Mean loss of one batch (rows idx) as built by the trainer; exposed for tests.
ad::Var flow_batch_loss(ad::Graph& g, ConditionalMaf& flow, const ad::Tensor& x, const ad::Tensor& c,
                        std::span<const std::size_t> idx, FlowLoss loss, std::size_t atoms,
                        std::span<const double> log_jacobian, Rng& rng);

}  // namespace hicentro
