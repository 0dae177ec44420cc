#include "hicentro/flow.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <numeric>

#include "hicentro/error.hpp"

namespace hicentro {

namespace {

using ad::Tensor;
using ad::Var;

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Tensor made_mask(std::size_t in, std::size_t out, auto&& connect) {
  Tensor m({in, out});
  for (std::size_t a = 0; a < in; ++a)
    for (std::size_t b = 0; b < out; ++b) m[a * out + b] = connect(a, b) ? 1.0 : 0.0;
  return m;
}

void zero(nn::Parameter& p) { std::fill(p.value.data.begin(), p.value.data.end(), 0.0); }

std::vector<double> column_mean(const Tensor& t) {
  const std::size_t n = t.dim(0), d = t.dim(1);
  std::vector<double> m(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < d; ++k) m[k] += t[r * d + k];
  for (double& v : m) v /= static_cast<double>(n);
  return m;
}

std::vector<double> column_sd(const Tensor& t, const std::vector<double>& mean) {
  const std::size_t n = t.dim(0), d = t.dim(1);
  std::vector<double> s(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < d; ++k) s[k] += (t[r * d + k] - mean[k]) * (t[r * d + k] - mean[k]);
  for (double& v : s) {
    v = std::sqrt(v / static_cast<double>(n));
    if (!(v > 1e-12) || !std::isfinite(v)) v = 1.0;
  }
  return s;
}

Tensor zscore(const Tensor& t, const std::vector<double>& mean, const std::vector<double>& scale) {
  Tensor out = t;
  const std::size_t d = mean.size();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (out[k] - mean[k % d]) / scale[k % d];
  return out;
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  const std::size_t d = t.dim(1);
  Tensor out({rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(rows[r] * d), d,
                out.data.begin() + static_cast<std::ptrdiff_t>(r * d));
  return out;
}

std::vector<double> to_vector(const nlohmann::json& j) { return j.get<std::vector<double>>(); }

}  // namespace

nlohmann::json FlowConfig::to_json() const {
  return {{"transforms", transforms}, {"hidden", hidden}, {"scale_clamp", scale_clamp}};
}

FlowConfig FlowConfig::from_json(const nlohmann::json& j) {
  FlowConfig c;
  c.transforms = j.value("transforms", c.transforms);
  c.hidden = j.value("hidden", c.hidden);
  c.scale_clamp = j.value("scale_clamp", c.scale_clamp);
  if (c.transforms == 0 || c.hidden == 0 || !(c.scale_clamp > 0.0)) throw ConfigError("flow: invalid architecture");
  return c;
}

ConditionalMaf::ConditionalMaf(std::size_t dim, std::size_t context_dim, FlowConfig config, std::uint64_t seed)
    : dim_(dim),
      context_dim_(context_dim),
      config_(config),
      seed_(seed),
      x_mean_(dim, 0.0),
      x_scale_(dim, 1.0),
      c_mean_(context_dim, 0.0),
      c_scale_(context_dim, 1.0) {
  if (dim == 0) throw DomainError("flow: dimension must be positive");
  if (config.transforms == 0 || config.hidden == 0) throw ConfigError("flow: invalid architecture");
  Rng rng(seed);
  const std::size_t H = config.hidden, D = dim;
  // MADE degrees: input d has degree d+1, hidden unit h has degree h mod D,
  // output d may see hidden units of degree <= d.
  auto hdeg = [D](std::size_t h) { return h % D; };
  const Tensor in_mask = made_mask(D, H, [&](std::size_t d, std::size_t h) { return hdeg(h) >= d + 1; });
  const Tensor hid_mask = made_mask(H, H, [&](std::size_t a, std::size_t b) { return hdeg(b) >= hdeg(a); });
  const Tensor out_mask = made_mask(H, D, [&](std::size_t h, std::size_t d) { return hdeg(h) <= d; });
  for (std::size_t k = 0; k < config.transforms; ++k) {
    const std::string p = "maf" + std::to_string(k);
    Made m;
    m.input = nn::MaskedDense(in_mask, rng, p + ".input");
    if (context_dim > 0) m.context = nn::Dense(context_dim, H, rng, p + ".context");
    m.hidden = nn::MaskedDense(hid_mask, rng, p + ".hidden");
    m.mu = nn::MaskedDense(out_mask, rng, p + ".mu");
    m.alpha = nn::MaskedDense(out_mask, rng, p + ".alpha");
    zero(m.mu.weight);
    zero(m.alpha.weight);
    made_.push_back(std::move(m));
  }
  reverse_.resize(D);
  for (std::size_t d = 0; d < D; ++d) reverse_[d] = D - 1 - d;
}

void ConditionalMaf::check(const Tensor& x, const Tensor& c) const {
  if (x.shape.size() != 2 || x.dim(1) != dim_) throw ShapeError("flow: x must be [B, " + std::to_string(dim_) + "]");
  if (c.shape.size() != 2 || c.dim(1) != context_dim_ || c.dim(0) != x.dim(0)) {
    throw ShapeError("flow: context must be [B, " + std::to_string(context_dim_) + "] matching x");
  }
}

void ConditionalMaf::fit_standardization(const Tensor& x, const Tensor& c) {
  check(x, c);
  if (x.dim(0) == 0) throw DomainError("flow: cannot standardize an empty dataset");
  x_mean_ = column_mean(x);
  x_scale_ = column_sd(x, x_mean_);
  if (context_dim_ > 0) {
    c_mean_ = column_mean(c);
    c_scale_ = column_sd(c, c_mean_);
  }
}

Tensor ConditionalMaf::standardize_x(const Tensor& x) const { return zscore(x, x_mean_, x_scale_); }
Tensor ConditionalMaf::standardize_c(const Tensor& c) const {
  return context_dim_ > 0 ? zscore(c, c_mean_, c_scale_) : c;
}

double ConditionalMaf::log_scale_sum() const {
  double s = 0.0;
  for (double v : x_scale_) s += std::log(v);
  return s;
}

template <typename Self>
ConditionalMaf::Step ConditionalMaf::apply_made(Self& self, ad::Graph& g, std::size_t k, Var x, Var c) {
  auto& m = self.made_[k];
  Var h = m.input(g, x);
  if (self.context_dim_ > 0) h = ad::add(h, m.context(g, c));
  h = ad::tanh(h);
  h = ad::tanh(m.hidden(g, h));
  const double clamp = self.config_.scale_clamp;
  Var alpha = ad::scale(ad::tanh(ad::scale(m.alpha(g, h), 1.0 / clamp)), clamp);
  return {m.mu(g, h), alpha};
}

template <typename Self>
Var ConditionalMaf::apply_log_prob(Self& self, ad::Graph& g, const Tensor& x, const Tensor& c) {
  self.check(x, c);
  Var cur = g.constant(self.standardize_x(x));
  Var ctx = g.constant(self.standardize_c(c));
  Var alpha_sum;
  const std::size_t K = self.made_.size();
  for (std::size_t k = 0; k < K; ++k) {
    auto [mu, alpha] = apply_made(self, g, k, cur, ctx);
    Var z = ad::mul(ad::sub(cur, mu), ad::exp(ad::scale(alpha, -1.0)));
    Var a = ad::sum_cols(alpha);
    alpha_sum = k == 0 ? a : ad::add(alpha_sum, a);
    cur = k + 1 < K ? ad::permute_cols(z, self.reverse_) : z;
  }
  const double constant = -0.5 * static_cast<double>(self.dim_) * kLog2Pi - self.log_scale_sum();
  Var quad = ad::add(ad::scale(ad::sum_cols(ad::square(cur)), 0.5), alpha_sum);
  return ad::add_scalar(ad::scale(quad, -1.0), constant);
}

Var ConditionalMaf::log_prob(ad::Graph& g, const Tensor& x, const Tensor& c) { return apply_log_prob(*this, g, x, c); }
Var ConditionalMaf::log_prob(ad::Graph& g, const Tensor& x, const Tensor& c) const {
  return apply_log_prob(*this, g, x, c);
}

std::vector<double> ConditionalMaf::log_prob(const Tensor& x, const Tensor& c) const {
  ad::Graph g;
  const ad::Buffer& lp = log_prob(g, x, c).value().data;
  return {lp.begin(), lp.end()};
}

ConditionalMaf::Forward ConditionalMaf::forward(const Tensor& x, const Tensor& c) const {
  check(x, c);
  const std::size_t B = x.dim(0), D = dim_;
  Forward out;
  out.log_det.assign(B, -log_scale_sum());
  Tensor cur = standardize_x(x);
  const Tensor cs = standardize_c(c);
  for (std::size_t k = 0; k < made_.size(); ++k) {
    ad::Graph g;
    auto [mu, alpha] = apply_made(*this, g, k, g.constant(cur), g.constant(cs));
    const Tensor& mv = mu.value();
    const Tensor& av = alpha.value();
    std::vector<double> ld(B, 0.0);
    Tensor z({B, D});
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t d = 0; d < D; ++d) {
        const std::size_t i = b * D + d;
        z[i] = (cur[i] - mv[i]) * std::exp(-av[i]);
        ld[b] -= av[i];
      }
      out.log_det[b] += ld[b];
    }
    out.layer_log_det.push_back(std::move(ld));
    if (k + 1 < made_.size()) {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t d = 0; d < D; ++d) cur[b * D + d] = z[b * D + reverse_[d]];
    } else {
      cur = std::move(z);
    }
  }
  out.z = std::move(cur);
  return out;
}

Tensor ConditionalMaf::inverse(const Tensor& z, const Tensor& c) const {
  check(z, c);
  const std::size_t B = z.dim(0), D = dim_;
  const Tensor cs = standardize_c(c);
  Tensor y = z;
  Tensor x({B, D});
  for (std::size_t kk = made_.size(); kk-- > 0;) {
    std::fill(x.data.begin(), x.data.end(), 0.0);
    for (std::size_t d = 0; d < D; ++d) {
      ad::Graph g;
      auto [mu, alpha] = apply_made(*this, g, kk, g.constant(x), g.constant(cs));
      const Tensor& mv = mu.value();
      const Tensor& av = alpha.value();
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t i = b * D + d;
        x[i] = y[i] * std::exp(av[i]) + mv[i];
      }
    }
    if (kk > 0) {
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t d = 0; d < D; ++d) y[b * D + reverse_[d]] = x[b * D + d];
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = x[i] * x_scale_[i % D] + x_mean_[i % D];
  return x;
}

Tensor ConditionalMaf::sample(std::size_t n, std::span<const double> context, Rng& rng) const {
  if (context.size() != context_dim_) throw ShapeError("flow: context has the wrong length");
  Tensor z({n, dim_});
  for (double& v : z.data) v = normal(rng, 0.0, 1.0);
  Tensor c({n, context_dim_});
  for (std::size_t r = 0; r < n; ++r) std::copy(context.begin(), context.end(), c.data.begin() + static_cast<std::ptrdiff_t>(r * context_dim_));
  return inverse(z, c);
}

std::vector<nn::Parameter*> ConditionalMaf::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& m : made_) {
    out.insert(out.end(), {&m.input.weight, &m.input.bias});
    if (context_dim_ > 0) out.insert(out.end(), {&m.context.weight, &m.context.bias});
    out.insert(out.end(), {&m.hidden.weight, &m.hidden.bias, &m.mu.weight, &m.mu.bias, &m.alpha.weight, &m.alpha.bias});
  }
  return out;
}

nlohmann::json ConditionalMaf::header() const {
  return {{"kind", "flow"},   {"dim", dim_},         {"context_dim", context_dim_}, {"config", config_.to_json()},
          {"seed", seed_},    {"x_mean", x_mean_},   {"x_scale", x_scale_},         {"c_mean", c_mean_},
          {"c_scale", c_scale_}};
}

ConditionalMaf ConditionalMaf::from_header(const nlohmann::json& h) {
  try {
    ConditionalMaf f(h.at("dim").get<std::size_t>(), h.at("context_dim").get<std::size_t>(),
                     FlowConfig::from_json(h.at("config")), h.at("seed").get<std::uint64_t>());
    f.x_mean_ = to_vector(h.at("x_mean"));
    f.x_scale_ = to_vector(h.at("x_scale"));
    f.c_mean_ = to_vector(h.at("c_mean"));
    f.c_scale_ = to_vector(h.at("c_scale"));
    if (f.x_mean_.size() != f.dim_ || f.x_scale_.size() != f.dim_ || f.c_mean_.size() != f.context_dim_ ||
        f.c_scale_.size() != f.context_dim_) {
      throw LoadError("flow checkpoint: standardization has the wrong length");
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("flow checkpoint: malformed header: ") + e.what());
  }
}

// ---- training ---------------------------------------------------------------

namespace {

template <typename Flow>
Var batch_loss(ad::Graph& g, Flow& flow, const Tensor& x, const Tensor& c, std::span<const std::size_t> idx,
               FlowLoss loss, std::size_t atoms, std::span<const double> log_jacobian, Rng& rng) {
  const std::size_t B = idx.size();
  const std::size_t K = std::min(atoms, B);
  if (loss == FlowLoss::nll || K < 2) {
    Var lp = flow.log_prob(g, gather_rows(x, idx), gather_rows(c, idx));
    if (!log_jacobian.empty()) {
      Tensor lj({B, 1});
      for (std::size_t b = 0; b < B; ++b) lj[b] = log_jacobian[idx[b]];
      lp = ad::add(lp, g.constant(std::move(lj)));
    }
    return ad::scale(ad::mean(lp), -1.0);
  }
  // Row b*K + k pairs atom k with context b; atom 0 is the true parameter.
  std::vector<std::size_t> theta_rows(B * K), ctx_rows(B * K), others;
  for (std::size_t b = 0; b < B; ++b) {
    others.clear();
    for (std::size_t o = 0; o < B; ++o)
      if (o != b) others.push_back(o);
    for (std::size_t k = 0; k + 1 < K; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, others.size() - 1);
      std::swap(others[k], others[pick(rng)]);
    }
    theta_rows[b * K] = idx[b];
    for (std::size_t k = 1; k < K; ++k) theta_rows[b * K + k] = idx[others[k - 1]];
    for (std::size_t k = 0; k < K; ++k) ctx_rows[b * K + k] = idx[b];
  }
  Var lp = flow.log_prob(g, gather_rows(x, theta_rows), gather_rows(c, ctx_rows));
  if (!log_jacobian.empty()) {
    Tensor lj({B * K, 1});
    for (std::size_t r = 0; r < B * K; ++r) lj[r] = log_jacobian[theta_rows[r]];
    lp = ad::add(lp, g.constant(std::move(lj)));
  }
  Var table = ad::reshape(lp, {B, K});
  return ad::mean(ad::sub(ad::logsumexp_rows(table), ad::slice_cols(table, 0, 1)));
}

template <typename Flow>
double dataset_loss(Flow& flow, const Tensor& x, const Tensor& c, std::span<const std::size_t> rows,
                    const FlowTrainConfig& config, std::span<const double> log_jacobian) {
  Rng rng(derive_seed(config.seed, 0x76616cULL));
  double total = 0.0;
  for (std::size_t s = 0; s < rows.size(); s += config.batch_size) {
    const auto batch = rows.subspan(s, std::min(config.batch_size, rows.size() - s));
    ad::Graph g;
    total += batch_loss(g, flow, x, c, batch, config.loss, config.atoms, log_jacobian, rng).item() *
             static_cast<double>(batch.size());
  }
  return total / static_cast<double>(rows.size());
}

}  // namespace

Var flow_batch_loss(ad::Graph& g, ConditionalMaf& flow, const Tensor& x, const Tensor& c,
                    std::span<const std::size_t> idx, FlowLoss loss, std::size_t atoms,
                    std::span<const double> log_jacobian, Rng& rng) {
  return batch_loss(g, flow, x, c, idx, loss, atoms, log_jacobian, rng);
}

FlowTrainReport train_flow(ConditionalMaf& flow, const Tensor& x, const Tensor& c, const FlowTrainConfig& config,
                           std::span<const double> log_jacobian) {
  if (x.shape.size() != 2 || c.shape.size() != 2 || x.dim(0) != c.dim(0)) throw ShapeError("train_flow: x/c mismatch");
  const std::size_t n = x.dim(0);
  if (n < 2) throw DomainError("train_flow: need at least two training rows");
  if (!log_jacobian.empty() && log_jacobian.size() != n) throw ShapeError("train_flow: log_jacobian length");
  if (config.batch_size == 0) throw ConfigError("train_flow: batch size must be positive");

  Rng rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(config.val_fraction * static_cast<double>(n));
  if (config.val_fraction > 0.0) n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  std::vector<std::size_t> val(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  std::vector<std::size_t> train(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
  const std::vector<std::size_t>& monitor = val.empty() ? train : val;

  auto params = flow.parameters();
  nn::Adam adam(params, nn::AdamConfig{.lr = config.lr});
  FlowTrainReport report;
  const ConditionalMaf& frozen = flow;
  report.val_loss.push_back(dataset_loss(frozen, x, c, monitor, config, log_jacobian));
  auto best = nn::snapshot(params);
  double best_loss = report.val_loss.front();

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double sum = 0.0;
    for (std::size_t s = 0; s < train.size(); s += config.batch_size) {
      const std::span<const std::size_t> batch(train.data() + s, std::min(config.batch_size, train.size() - s));
      adam.zero_grad();
      ad::Graph g;
      Var loss = batch_loss(g, flow, x, c, batch, config.loss, config.atoms, log_jacobian, rng);
      const double value = loss.item();
      if (!std::isfinite(value)) throw TrainingError("train_flow: non-finite loss at epoch " + std::to_string(epoch));
      g.backward(loss);
      adam.step();
      sum += value * static_cast<double>(batch.size());
    }
    report.train_loss.push_back(sum / static_cast<double>(train.size()));
    const double v = dataset_loss(frozen, x, c, monitor, config, log_jacobian);
    if (!std::isfinite(v)) throw TrainingError("train_flow: non-finite validation loss");
    report.val_loss.push_back(v);
    report.epochs_run = epoch;
    if (config.verbose) {
      std::cerr << "[flow] epoch " << epoch << " train " << report.train_loss.back() << " val " << v << '\n';
    }
    if (v < best_loss) {
      best_loss = v;
      report.best_epoch = epoch;
      best = nn::snapshot(params);
    } else if (epoch - report.best_epoch >= config.patience) {
      break;
    }
  }
  nn::restore(params, best);
  nn::snap_to_f32(params);
  return report;
}

}  // namespace hicentro
