#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hicentro/autodiff.hpp"
#include "hicentro/random.hpp"

namespace hicentro::nn {

using ad::Parameter;
using ad::Tensor;
using ad::Var;

// Trainable binding records gradients; const binding is a frozen constant.
inline Var bind(ad::Graph& g, Parameter& p) { return g.parameter(p); }
inline Var bind(ad::Graph& g, const Parameter& p) { return g.constant(p.value); }

// Fully connected layer y = x W + b; W is [in, out], Xavier-uniform, b zero.
class Dense {
 public:
  Dense() = default;
  Dense(std::size_t in, std::size_t out, Rng& rng, const std::string& name);

  Var operator()(ad::Graph& g, Var x);
  Var operator()(ad::Graph& g, Var x) const;

  [[nodiscard]] std::size_t in() const { return weight.value.dim(0); }
  [[nodiscard]] std::size_t out() const { return weight.value.dim(1); }

  Parameter weight;
  Parameter bias;
};

// Dense layer whose weight is multiplied by a fixed 0/1 mask ([in, out]).
class MaskedDense {
 public:
  MaskedDense() = default;
  MaskedDense(Tensor mask, Rng& rng, const std::string& name);

  Var operator()(ad::Graph& g, Var x);
  Var operator()(ad::Graph& g, Var x) const;

  Tensor mask;
  Parameter weight;
  Parameter bias;
};

// Valid-padding 2D convolution, Kaiming-uniform weights, zero bias.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride, Rng& rng,
         const std::string& name);

  Var operator()(ad::Graph& g, Var x);
  Var operator()(ad::Graph& g, Var x) const;

  [[nodiscard]] std::size_t out_size(std::size_t in_size) const;

  Parameter weight;
  Parameter bias;
  std::size_t stride{1};
};

struct AdamConfig {
  double lr{5e-4};
  double beta1{0.9};
  double beta2{0.999};
  double eps{1e-8};
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config = {});

  // One bias-corrected update from the accumulated gradients.
  void step();
  void zero_grad();

  [[nodiscard]] std::size_t steps() const noexcept { return t_; }
  [[nodiscard]] const AdamConfig& config() const noexcept { return config_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_{0};
};

[[nodiscard]] std::size_t parameter_count(std::span<Parameter* const> params);
[[nodiscard]] bool all_finite(std::span<Parameter* const> params);

// Rounds every parameter to single precision so checkpoints reload exactly.
void snap_to_f32(std::span<Parameter* const> params);

// Copies parameter values (used to keep best-validation snapshots).
[[nodiscard]] std::vector<ad::Buffer> snapshot(std::span<Parameter* const> params);
void restore(std::span<Parameter* const> params, const std::vector<ad::Buffer>& values);

// Checkpoint file: one line of JSON header, then the parameters as a flat
// little-endian f32 blob in header order. The header gains a "parameters"
// list of {name, shape} and "blob_bytes".
void save_checkpoint(const std::filesystem::path& path, nlohmann::json header, std::span<Parameter* const> params);
[[nodiscard]] nlohmann::json read_checkpoint_header(const std::filesystem::path& path);
// Fills params (names and shapes must match the header); returns the header.
nlohmann::json load_checkpoint(const std::filesystem::path& path, std::span<Parameter* const> params);

}  // namespace hicentro::nn
