#include "hicentro/snpe.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "hicentro/error.hpp"

namespace hicentro {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

nlohmann::json report_json(const FlowTrainReport& r) {
  return {{"train_loss", r.train_loss},
          {"val_loss", r.val_loss},
          {"best_epoch", r.best_epoch},
          {"epochs_run", r.epochs_run}};
}

FlowTrainReport report_from_json(const nlohmann::json& j) {
  FlowTrainReport r;
  r.train_loss = j.at("train_loss").get<std::vector<double>>();
  r.val_loss = j.at("val_loss").get<std::vector<double>>();
  r.best_epoch = j.at("best_epoch").get<std::size_t>();
  r.epochs_run = j.at("epochs_run").get<std::size_t>();
  return r;
}

}  // namespace

BoundedPosterior::BoundedPosterior(BoxPrior prior, ConditionalMaf flow) : prior_(std::move(prior)), flow_(std::move(flow)) {
  if (prior_.dim() != flow_.dim()) throw ShapeError("posterior: prior and flow dimensions differ");
  for (std::size_t d = 0; d < prior_.dim(); ++d)
    if (!(prior_.upper[d] > prior_.lower[d])) throw DomainError("posterior: empty prior interval");
}

std::vector<double> BoundedPosterior::to_internal(std::span<const double> theta) const {
  if (theta.size() != dim()) throw ShapeError("posterior: theta has the wrong length");
  std::vector<double> u(theta.size());
  for (std::size_t d = 0; d < theta.size(); ++d) {
    const double p = (theta[d] - prior_.lower[d]) / (prior_.upper[d] - prior_.lower[d]);
    if (!(p > 0.0 && p < 1.0)) throw DomainError("posterior: theta outside the open prior box");
    u[d] = std::log(p) - std::log1p(-p);
  }
  return u;
}

std::vector<double> BoundedPosterior::from_internal(std::span<const double> u) const {
  if (u.size() != dim()) throw ShapeError("posterior: u has the wrong length");
  std::vector<double> theta(u.size());
  for (std::size_t d = 0; d < u.size(); ++d) {
    const double p = 1.0 / (1.0 + std::exp(-u[d]));
    theta[d] = prior_.lower[d] + p * (prior_.upper[d] - prior_.lower[d]);
  }
  return theta;
}

double BoundedPosterior::log_jacobian(std::span<const double> theta) const {
  if (theta.size() != dim()) throw ShapeError("posterior: theta has the wrong length");
  double s = 0.0;
  for (std::size_t d = 0; d < theta.size(); ++d) {
    const double width = prior_.upper[d] - prior_.lower[d];
    const double p = (theta[d] - prior_.lower[d]) / width;
    if (!(p > 0.0 && p < 1.0)) return kNegInf;
    s -= std::log(width) + std::log(p) + std::log1p(-p);
  }
  return s;
}

double BoundedPosterior::log_prob(std::span<const double> theta, std::span<const double> context) const {
  return log_prob(Samples{std::vector<double>(theta.begin(), theta.end())}, context).front();
}

std::vector<double> BoundedPosterior::log_prob(const Samples& thetas, std::span<const double> context) const {
  if (context.size() != flow_.context_dim()) throw ShapeError("posterior: context has the wrong length");
  const std::size_t D = dim(), C = context.size();
  std::vector<double> out(thetas.size(), kNegInf);
  std::vector<std::size_t> inside;
  std::vector<double> xs, cs, lj;
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    if (thetas[k].size() != D) throw ShapeError("posterior: theta has the wrong length");
    const double j = log_jacobian(thetas[k]);
    if (!std::isfinite(j)) continue;
    const auto u = to_internal(thetas[k]);
    xs.insert(xs.end(), u.begin(), u.end());
    cs.insert(cs.end(), context.begin(), context.end());
    lj.push_back(j);
    inside.push_back(k);
  }
  if (inside.empty()) return out;
  const auto lp = flow_.log_prob(ad::Tensor({inside.size(), D}, std::move(xs)), ad::Tensor({inside.size(), C}, std::move(cs)));
  for (std::size_t r = 0; r < inside.size(); ++r) out[inside[r]] = lp[r] + lj[r];
  return out;
}

Samples BoundedPosterior::sample(std::size_t n, std::span<const double> context, Rng& rng) const {
  Samples out;
  out.reserve(n);
  std::size_t drawn = 0;
  while (out.size() < n) {
    const std::size_t want = std::max<std::size_t>(n - out.size(), 64);
    const ad::Tensor u = flow_.sample(want, context, rng);
    drawn += want;
    const std::size_t D = dim();
    for (std::size_t r = 0; r < want && out.size() < n; ++r) {
      bool finite = true;
      for (std::size_t d = 0; d < D; ++d) finite = finite && std::isfinite(u[r * D + d]);
      if (!finite) continue;
      auto theta = from_internal(std::span<const double>(u.data.data() + r * D, D));
      if (prior_.contains(theta) && std::isfinite(log_jacobian(theta))) out.push_back(std::move(theta));
    }
    if (drawn >= 10000 && static_cast<double>(out.size()) < 1e-3 * static_cast<double>(drawn)) {
      throw DomainError("posterior sampling: more than 99.9% of draws rejected; posterior escaped the prior support");
    }
  }
  return out;
}

void BoundedPosterior::save(const std::filesystem::path& path, const nlohmann::json& extra) {
  nlohmann::json header = flow_.header();
  header["kind"] = "posterior";
  header["lower"] = prior_.lower;
  header["upper"] = prior_.upper;
  if (extra.is_object())
    for (auto it = extra.begin(); it != extra.end(); ++it) header[it.key()] = it.value();
  const auto params = flow_.parameters();
  nn::save_checkpoint(path, header, params);
}

BoundedPosterior BoundedPosterior::load(const std::filesystem::path& path, nlohmann::json* header_out) {
  const nlohmann::json header = nn::read_checkpoint_header(path);
  if (header.value("kind", "") != "posterior") throw LoadError(path.string() + " is not a posterior checkpoint");
  BoxPrior prior;
  try {
    prior.lower = header.at("lower").get<std::vector<double>>();
    prior.upper = header.at("upper").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": malformed prior bounds: " + e.what());
  }
  ConditionalMaf flow = ConditionalMaf::from_header(header);
  const auto params = flow.parameters();
  nn::load_checkpoint(path, params);
  if (header_out) *header_out = header;
  return BoundedPosterior(std::move(prior), std::move(flow));
}

void PosteriorEstimate::save(const std::filesystem::path& path) {
  posterior.save(path, {{"round", round}, {"context", context}, {"training", report_json(training)}});
}

PosteriorEstimate PosteriorEstimate::load(const std::filesystem::path& path) {
  nlohmann::json header;
  PosteriorEstimate e;
  e.posterior = BoundedPosterior::load(path, &header);
  try {
    e.round = header.at("round").get<std::size_t>();
    e.context = header.at("context").get<std::vector<double>>();
    if (header.contains("training")) e.training = report_from_json(header.at("training"));
  } catch (const nlohmann::json::exception& ex) {
    throw LoadError(path.string() + ": malformed posterior metadata: " + ex.what());
  }
  if (e.context.size() != e.posterior.flow().context_dim()) throw LoadError(path.string() + ": context length mismatch");
  return e;
}

std::vector<SnpeRound> run_snpe(const BoxPrior& prior, const BatchFeatures& features,
                                const std::vector<double>& observed, const SnpeConfig& config) {
  if (config.rounds == 0) throw ConfigError("snpe: at least one round is required");
  if (config.n_per_round < 2) throw ConfigError("snpe: at least two simulations per round are required");
  if (observed.empty()) throw DomainError("snpe: empty observed summary");
  for (double v : observed)
    if (!std::isfinite(v)) throw DomainError("snpe: observed summary is not finite");

  const std::size_t D = prior.dim(), C = observed.size(), N = config.n_per_round;
  Rng rng(config.seed);
  BoundedPosterior current(prior, ConditionalMaf(D, C, config.flow, derive_seed(config.seed, 1)));
  std::vector<double> xs, cs, lj;
  std::vector<SnpeRound> rounds;

  for (std::size_t t = 1; t <= config.rounds; ++t) {
    Samples proposals;
    if (t == 1) {
      proposals.reserve(N);
      for (std::size_t k = 0; k < N; ++k) proposals.push_back(prior.sample(rng));
    } else {
      proposals = current.sample(N, observed, rng);
    }
    const std::uint64_t round_seed = rng();
    std::vector<std::uint64_t> seeds(N);
    for (std::size_t k = 0; k < N; ++k) seeds[k] = derive_seed(round_seed, k);
    const Samples feats = features(proposals, seeds);
    if (feats.size() != N) throw DomainError("snpe: feature batch has the wrong size");

    for (std::size_t k = 0; k < N; ++k) {
      if (feats[k].size() != C) throw ShapeError("snpe: summary length differs from the observed summary");
      const double j = current.log_jacobian(proposals[k]);
      if (!std::isfinite(j)) continue;  // exactly on the prior boundary
      bool finite = true;
      for (double v : feats[k]) finite = finite && std::isfinite(v);
      if (!finite) throw DomainError("snpe: simulator produced a non-finite summary");
      const auto u = current.to_internal(proposals[k]);
      xs.insert(xs.end(), u.begin(), u.end());
      cs.insert(cs.end(), feats[k].begin(), feats[k].end());
      lj.push_back(j);
    }
    const std::size_t rows = lj.size();
    const ad::Tensor X({rows, D}, xs);
    const ad::Tensor Cx({rows, C}, cs);
    if (t == 1) current.flow().fit_standardization(X, Cx);

    FlowTrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, 100 + t);
    tc.loss = (t == 1 || !config.atomic) ? FlowLoss::nll : FlowLoss::atomic;
    FlowTrainReport report = train_flow(current.flow(), X, Cx, tc, lj);
    if (config.verbose) {
      std::cerr << "[snpe] round " << t << " rows " << rows << " epochs " << report.epochs_run << " best val "
                << report.val_loss.at(report.best_epoch) << '\n';
    }
    rounds.push_back({PosteriorEstimate{t, observed, current, std::move(report)}, std::move(proposals)});
  }
  return rounds;
}

}  // namespace hicentro
