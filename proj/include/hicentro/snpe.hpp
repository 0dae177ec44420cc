#pragma once

// Sequential neural posterior estimation.
//
// The flow lives on u = logit((theta - lower) / (upper - lower)), so its
// density has unbounded support while theta stays inside the prior box.
// Round 1 fits plain maximum likelihood on prior draws. Later rounds draw
// from the current posterior at the observed summary and train on all data
// so far with the atomic (contrastive) loss, which keeps the estimate a
// posterior under the original prior.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "hicentro/flow.hpp"
#include "hicentro/genome.hpp"
#include "hicentro/metrics.hpp"

namespace hicentro {

// Flow wrapped in the prior-box transform.
class BoundedPosterior {
 public:
  BoundedPosterior() = default;
  BoundedPosterior(BoxPrior prior, ConditionalMaf flow);

  [[nodiscard]] const BoxPrior& prior() const noexcept { return prior_; }
  [[nodiscard]] ConditionalMaf& flow() noexcept { return flow_; }
  [[nodiscard]] const ConditionalMaf& flow() const noexcept { return flow_; }
  [[nodiscard]] std::size_t dim() const noexcept { return prior_.dim(); }

  // Internal coordinates; throws DomainError outside the open box.
  [[nodiscard]] std::vector<double> to_internal(std::span<const double> theta) const;
  [[nodiscard]] std::vector<double> from_internal(std::span<const double> u) const;
  // log |du / dtheta|; -inf on the boundary.
  [[nodiscard]] double log_jacobian(std::span<const double> theta) const;

  // log p(theta | context) in bp coordinates; -inf outside the open box.
  [[nodiscard]] double log_prob(std::span<const double> theta, std::span<const double> context) const;
  [[nodiscard]] std::vector<double> log_prob(const Samples& thetas, std::span<const double> context) const;

  // iid draws kept only inside the prior support. Throws DomainError when
  // more than 99.9% of the draws are rejected.
  [[nodiscard]] Samples sample(std::size_t n, std::span<const double> context, Rng& rng) const;

  void save(const std::filesystem::path& path, const nlohmann::json& extra = {});
  static BoundedPosterior load(const std::filesystem::path& path, nlohmann::json* header = nullptr);

 private:
  BoxPrior prior_;
  ConditionalMaf flow_;
};

struct PosteriorEstimate {
  std::size_t round{0};           // 1-based
  std::vector<double> context;    // summary of the observation, bp
  BoundedPosterior posterior;
  FlowTrainReport training;

  [[nodiscard]] Samples sample(std::size_t n, Rng& rng) const { return posterior.sample(n, context, rng); }
  [[nodiscard]] double log_prob(std::span<const double> theta) const { return posterior.log_prob(theta, context); }
  void save(const std::filesystem::path& path);
  static PosteriorEstimate load(const std::filesystem::path& path);
};

// Simulates and summarizes a batch; simulation n must draw from Rng(seeds[n]).
using BatchFeatures = std::function<Samples(const Samples& thetas, std::span<const std::uint64_t> seeds)>;

struct SnpeConfig {
  std::size_t rounds{11};
  std::size_t n_per_round{1000};
  FlowConfig flow;
  FlowTrainConfig train;
  bool atomic{true};  // false: retrain on all rounds with the plain NLL
  std::uint64_t seed{0};
  bool verbose{false};
};

struct SnpeRound {
  PosteriorEstimate estimate;
  Samples proposals;  // parameters simulated in this round
};

[[nodiscard]] std::vector<SnpeRound> run_snpe(const BoxPrior& prior, const BatchFeatures& features,
                                              const std::vector<double>& observed, const SnpeConfig& config);

}  // namespace hicentro
