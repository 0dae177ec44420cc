#include "hicentro/summary.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "hicentro/error.hpp"

namespace hicentro {

namespace {

constexpr std::size_t kInferenceBatch = 64;

void copy_block(const Block& b, double* dst, std::size_t side, bool max_normalize) {
  double scale = 1.0;
  if (max_normalize) {
    const double mx = b.size() ? b.maxCoeff() : 0.0;
    if (mx > 0.0) scale = 1.0 / mx;
  }
  for (Eigen::Index x = 0; x < b.rows(); ++x)
    for (Eigen::Index y = 0; y < b.cols(); ++y) dst[static_cast<std::size_t>(x) * side + static_cast<std::size_t>(y)] = b(x, y) * scale;
}

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> indices, std::size_t batch) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t k = 0; k < indices.size(); k += batch) {
    const auto end = std::min(indices.size(), k + batch);
    out.emplace_back(indices.begin() + static_cast<std::ptrdiff_t>(k), indices.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

void check_loss(double loss, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "train_summary: non-finite loss " << loss << " at epoch " << epoch << ", batch " << batch
        << " (try a lower learning rate)";
    throw TrainingError(msg.str());
  }
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

Split split_dataset(std::size_t n, double val_fraction, Rng& rng) {
  if (n == 0) throw DomainError("train_summary: empty dataset");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
  if (n_val == 0 && n >= 2 && val_fraction > 0.0) n_val = 1;
  Split s;
  s.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(s.val.begin(), s.val.end());
  if (s.val.empty()) s.val = s.train;  // single-sample datasets validate on themselves
  return s;
}

// Generic loop: `epoch_batches` yields batches for one epoch, `batch_loss`
// builds the loss on a graph, `eval` returns the validation loss.
template <typename EpochBatches, typename BatchLoss, typename Eval>
SummaryTrainReport run_training(SummaryNet& net, const SummaryTrainConfig& config, EpochBatches epoch_batches,
                                BatchLoss batch_loss, Eval eval) {
  auto params = net.parameters();
  nn::Adam adam(params, {.lr = config.lr});
  SummaryTrainReport report;
  report.val_loss.push_back(eval());
  auto best = nn::snapshot(params);
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double acc = 0.0;
    std::size_t seen = 0;
    const auto batches = epoch_batches();
    for (std::size_t b = 0; b < batches.size(); ++b) {
      adam.zero_grad();
      ad::Graph g;
      ad::Var loss = batch_loss(g, batches[b]);
      check_loss(loss.item(), epoch, b);
      g.backward(loss);
      adam.step();
      acc += loss.item() * static_cast<double>(batches[b].size());
      seen += batches[b].size();
    }
    report.train_loss.push_back(acc / static_cast<double>(std::max<std::size_t>(seen, 1)));
    const double val = eval();
    check_loss(val, epoch, batches.size());
    report.val_loss.push_back(val);
    report.epochs_run = epoch;
    if (config.verbose) {
      std::cerr << "[summary] epoch " << epoch << " train " << report.train_loss.back() << " val " << val << '\n';
    }
    if (val < report.val_loss[report.best_epoch]) {
      report.best_epoch = epoch;
      best = nn::snapshot(params);
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  nn::restore(params, best);
  nn::snap_to_f32(params);
  return report;
}

}  // namespace

SummaryMode parse_summary_mode(const std::string& s) {
  if (s == "joint") return SummaryMode::joint;
  if (s == "per-chromosome" || s == "per_chromosome") return SummaryMode::per_chromosome;
  throw ConfigError("unknown summary mode '" + s + "' (expected joint|per-chromosome)");
}

std::string to_string(SummaryMode mode) { return mode == SummaryMode::joint ? "joint" : "per-chromosome"; }

nlohmann::json SummaryConfig::to_json() const {
  return {{"channels", channels}, {"kernel", kernel}, {"stride", stride}, {"hidden", hidden}, {"max_normalize", max_normalize}};
}

SummaryConfig SummaryConfig::from_json(const nlohmann::json& j) {
  SummaryConfig c;
  c.channels = j.value("channels", c.channels);
  c.kernel = j.value("kernel", c.kernel);
  c.stride = j.value("stride", c.stride);
  c.hidden = j.value("hidden", c.hidden);
  c.max_normalize = j.value("max_normalize", c.max_normalize);
  return c;
}

SummaryNet::SummaryNet(GenomeSpec genome, SummaryMode mode, SummaryConfig config, std::uint64_t seed)
    : genome_(std::move(genome)), mode_(mode), config_(std::move(config)), seed_(seed) {
  if (config_.channels.empty()) throw ConfigError("summary net: at least one conv layer is required");
  Rng rng(derive_seed(seed_, 0x5u));
  std::size_t in_ch = 1;
  for (std::size_t k = 0; k < config_.channels.size(); ++k) {
    convs_.emplace_back(in_ch, config_.channels[k], config_.kernel, config_.stride, rng, "conv" + std::to_string(k));
    in_ch = config_.channels[k];
  }
  const std::size_t features = trunk_features();
  if (mode_ == SummaryMode::joint) {
    heads_.push_back({nn::Dense(features, config_.hidden, rng, "mlp.hidden"),
                      nn::Dense(config_.hidden, genome_.size(), rng, "mlp.out")});
  } else {
    for (std::size_t i = 0; i < genome_.size(); ++i) {
      const std::string name = "head" + std::to_string(i);
      heads_.push_back({nn::Dense(features, config_.hidden, rng, name + ".hidden"),
                        nn::Dense(config_.hidden, 1, rng, name + ".out")});
    }
  }
}

std::size_t SummaryNet::output_dim() const { return mode_ == SummaryMode::joint ? genome_.size() : 1; }

std::size_t SummaryNet::input_side() const {
  return mode_ == SummaryMode::joint ? genome_.total_bins() : genome_.max_bins();
}

std::size_t SummaryNet::trunk_features() const {
  std::size_t side = input_side();
  for (const auto& c : convs_) side = c.out_size(side);
  return side * side * config_.channels.back();
}

void SummaryNet::check_map(const ContactMap& map) const {
  if (mode_ != SummaryMode::joint) throw DomainError("summary net: contact maps need a joint-mode net");
  if (!(map.genome() == genome_)) throw DomainError("summary net: map geometry does not match training geometry");
}

void SummaryNet::check_row(const BlockRow& row) const {
  if (mode_ != SummaryMode::per_chromosome) throw DomainError("summary net: block rows need a per-chromosome net");
  if (row.chromosome >= genome_.size() || row.blocks.size() + 1 != genome_.size()) {
    throw DomainError("summary net: block row does not match training geometry");
  }
  for (std::size_t k = 0; k < row.blocks.size(); ++k) {
    const auto [rows, cols] = block_shape(genome_, row.chromosome, row.partners.at(k));
    if (static_cast<std::size_t>(row.blocks[k].rows()) != rows || static_cast<std::size_t>(row.blocks[k].cols()) != cols) {
      throw DomainError("summary net: block row shape does not match training geometry");
    }
  }
}

ad::Tensor SummaryNet::joint_input(std::span<const ContactMap> maps) const {
  const std::size_t side = input_side();
  ad::Tensor t({maps.size(), 1, side, side});
  for (std::size_t b = 0; b < maps.size(); ++b) {
    check_map(maps[b]);
    double* img = &t[b * side * side];
    for (auto [i, j] : genome_.pairs()) {
      const Block& blk = maps[b].block(i, j);
      double scale = 1.0;
      if (config_.max_normalize) {
        const double mx = blk.maxCoeff();
        if (mx > 0.0) scale = 1.0 / mx;
      }
      const std::size_t oi = genome_.offset(i), oj = genome_.offset(j);
      for (Eigen::Index x = 0; x < blk.rows(); ++x)
        for (Eigen::Index y = 0; y < blk.cols(); ++y) {
          const double v = blk(x, y) * scale;
          img[(oi + static_cast<std::size_t>(x)) * side + oj + static_cast<std::size_t>(y)] = v;
          img[(oj + static_cast<std::size_t>(y)) * side + oi + static_cast<std::size_t>(x)] = v;
        }
    }
  }
  return t;
}

ad::Tensor SummaryNet::row_input(std::span<const BlockRow> rows) const {
  const std::size_t side = input_side();
  const std::size_t group = genome_.size() - 1;
  ad::Tensor t({rows.size() * group, 1, side, side});
  for (std::size_t b = 0; b < rows.size(); ++b) {
    check_row(rows[b]);
    for (std::size_t k = 0; k < group; ++k) {
      copy_block(rows[b].blocks[k], &t[(b * group + k) * side * side], side, config_.max_normalize);
    }
  }
  return t;
}

template <typename Self>
ad::Var SummaryNet::trunk(Self& self, ad::Graph& g, const ad::Tensor& input) {
  ad::Var x = g.constant(input);
  for (auto& conv : self.convs_) x = ad::relu(conv(g, x));
  return ad::flatten(x);
}

template <typename Self>
ad::Var SummaryNet::apply_joint(Self& self, ad::Graph& g, const ad::Tensor& input) {
  if (self.mode_ != SummaryMode::joint) throw DomainError("summary net: forward_joint on a per-chromosome net");
  auto& head = self.heads_.front();
  return head.out(g, ad::relu(head.hidden(g, trunk(self, g, input))));
}

template <typename Self>
ad::Var SummaryNet::apply_head(Self& self, ad::Graph& g, const ad::Tensor& input, std::size_t chrom) {
  if (self.mode_ != SummaryMode::per_chromosome) throw DomainError("summary net: forward_head on a joint net");
  if (chrom >= self.heads_.size()) throw DomainError("summary net: chromosome index out of range");
  auto& head = self.heads_[chrom];
  ad::Var pooled = ad::group_mean(trunk(self, g, input), self.genome_.size() - 1);
  return head.out(g, ad::relu(head.hidden(g, pooled)));
}

ad::Var SummaryNet::forward_joint(ad::Graph& g, const ad::Tensor& input) { return apply_joint(*this, g, input); }
ad::Var SummaryNet::forward_joint(ad::Graph& g, const ad::Tensor& input) const { return apply_joint(*this, g, input); }
ad::Var SummaryNet::forward_head(ad::Graph& g, const ad::Tensor& input, std::size_t chrom) {
  return apply_head(*this, g, input, chrom);
}
ad::Var SummaryNet::forward_head(ad::Graph& g, const ad::Tensor& input, std::size_t chrom) const {
  return apply_head(*this, g, input, chrom);
}

std::vector<double> SummaryNet::summarize(const ContactMap& map) const {
  return summarize(std::span<const ContactMap>(&map, 1)).front();
}

Samples SummaryNet::summarize(std::span<const ContactMap> maps) const {
  Samples out;
  out.reserve(maps.size());
  const std::size_t L = genome_.size();
  for (std::size_t start = 0; start < maps.size(); start += kInferenceBatch) {
    const auto chunk = maps.subspan(start, std::min(kInferenceBatch, maps.size() - start));
    ad::Graph g;
    const ad::Tensor& y = forward_joint(g, joint_input(chunk)).value();
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      std::vector<double> s(L);
      for (std::size_t i = 0; i < L; ++i) s[i] = y[b * L + i] * static_cast<double>(genome_.length(i));
      out.push_back(std::move(s));
    }
  }
  return out;
}

double SummaryNet::summarize(const BlockRow& row) const {
  return summarize(std::span<const BlockRow>(&row, 1)).front();
}

std::vector<double> SummaryNet::summarize(std::span<const BlockRow> rows) const {
  std::vector<double> out(rows.size());
  // Rows are grouped by chromosome since each head sees its own batch.
  std::vector<std::vector<std::size_t>> groups(genome_.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].chromosome >= genome_.size()) throw DomainError("summary net: chromosome index out of range");
    groups[rows[k].chromosome].push_back(k);
  }
  std::vector<BlockRow> chunk;
  for (std::size_t chrom = 0; chrom < groups.size(); ++chrom) {
    const auto& idx = groups[chrom];
    for (std::size_t start = 0; start < idx.size(); start += kInferenceBatch) {
      const std::size_t end = std::min(idx.size(), start + kInferenceBatch);
      chunk.clear();
      for (std::size_t k = start; k < end; ++k) chunk.push_back(rows[idx[k]]);
      ad::Graph g;
      const ad::Tensor& y = forward_head(g, row_input(chunk), chrom).value();
      for (std::size_t k = start; k < end; ++k)
        out[idx[k]] = y[k - start] * static_cast<double>(genome_.length(chrom));
    }
  }
  return out;
}

std::vector<nn::Parameter*> SummaryNet::trunk_parameters() {
  std::vector<nn::Parameter*> p;
  for (auto& c : convs_) {
    p.push_back(&c.weight);
    p.push_back(&c.bias);
  }
  return p;
}

std::vector<nn::Parameter*> SummaryNet::head_parameters(std::size_t chrom) {
  auto& h = heads_.at(chrom);
  return {&h.hidden.weight, &h.hidden.bias, &h.out.weight, &h.out.bias};
}

std::vector<nn::Parameter*> SummaryNet::parameters() {
  auto p = trunk_parameters();
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    auto h = head_parameters(k);
    p.insert(p.end(), h.begin(), h.end());
  }
  return p;
}

void SummaryNet::save(const std::filesystem::path& path) {
  nlohmann::json header{{"kind", "summary"},
                        {"mode", to_string(mode_)},
                        {"genome", genome_.to_json()},
                        {"architecture", config_.to_json()},
                        {"seed", seed_}};
  nn::save_checkpoint(path, header, parameters());
}

SummaryNet SummaryNet::load(const std::filesystem::path& path) {
  const auto header = nn::read_checkpoint_header(path);
  if (header.value("kind", "") != "summary") throw LoadError(path.string() + ": not a summary checkpoint");
  SummaryNet net(GenomeSpec::from_json(header.at("genome")), parse_summary_mode(header.at("mode").get<std::string>()),
                 SummaryConfig::from_json(header.at("architecture")), header.value("seed", std::uint64_t{0}));
  (void)nn::load_checkpoint(path, net.parameters());
  return net;
}

double summary_loss(const SummaryNet& net, const JointDataset& data, std::span<const std::size_t> indices) {
  const std::size_t L = net.genome().size();
  double acc = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += kInferenceBatch) {
    const std::size_t n = std::min(kInferenceBatch, indices.size() - start);
    std::vector<ContactMap> maps;
    for (std::size_t k = 0; k < n; ++k) maps.push_back(data.map_at(indices[start + k]));
    ad::Graph g;
    const ad::Tensor& y = net.forward_joint(g, net.joint_input(maps)).value();
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < L; ++i) {
        const double d = y[k * L + i] - data.thetas[indices[start + k]][i] / static_cast<double>(net.genome().length(i));
        acc += d * d;
      }
  }
  return acc / static_cast<double>(indices.size());
}

double summary_loss(const SummaryNet& net, const RowDataset& data, std::span<const std::size_t> indices) {
  // Group by chromosome so each batch runs through a single head.
  std::vector<std::vector<std::size_t>> by_chrom(net.genome().size());
  for (auto n : indices) by_chrom.at(data.chromosomes[n]).push_back(n);
  double acc = 0.0;
  for (std::size_t chrom = 0; chrom < by_chrom.size(); ++chrom) {
    const auto& ids = by_chrom[chrom];
    const double len = static_cast<double>(net.genome().length(chrom));
    for (std::size_t start = 0; start < ids.size(); start += kInferenceBatch) {
      const std::size_t n = std::min(kInferenceBatch, ids.size() - start);
      std::vector<BlockRow> rows;
      for (std::size_t k = 0; k < n; ++k) rows.push_back(data.row_at(ids[start + k]));
      ad::Graph g;
      const ad::Tensor& y = net.forward_head(g, net.row_input(rows), chrom).value();
      for (std::size_t k = 0; k < n; ++k) {
        const double d = y[k] - data.thetas[ids[start + k]] / len;
        acc += d * d;
      }
    }
  }
  return acc / static_cast<double>(indices.size());
}

SummaryTrainReport train_summary(SummaryNet& net, const JointDataset& data, const SummaryTrainConfig& config) {
  if (net.mode() != SummaryMode::joint) throw DomainError("train_summary: joint dataset needs a joint-mode net");
  if (data.size() == 0 || !data.map_at) throw DomainError("train_summary: empty dataset");
  Rng rng(derive_seed(config.seed, 0x7u));
  const Split split = split_dataset(data.size(), config.val_fraction, rng);
  const std::size_t L = net.genome().size();

  auto epoch_batches = [&] {
    auto order = split.train;
    std::shuffle(order.begin(), order.end(), rng);
    return make_batches(std::move(order), config.batch_size);
  };
  auto batch_loss = [&](ad::Graph& g, const std::vector<std::size_t>& batch) {
    std::vector<ContactMap> maps;
    ad::Tensor target({batch.size(), L});
    for (std::size_t k = 0; k < batch.size(); ++k) {
      maps.push_back(data.map_at(batch[k]));
      for (std::size_t i = 0; i < L; ++i) {
        target[k * L + i] = data.thetas[batch[k]][i] / static_cast<double>(net.genome().length(i));
      }
    }
    return ad::mse(net.forward_joint(g, net.joint_input(maps)), g.constant(std::move(target)));
  };
  auto eval = [&] { return summary_loss(net, data, split.val); };
  return run_training(net, config, epoch_batches, batch_loss, eval);
}

SummaryTrainReport train_summary(SummaryNet& net, const RowDataset& data, const SummaryTrainConfig& config) {
  if (net.mode() != SummaryMode::per_chromosome) throw DomainError("train_summary: row dataset needs a per-chromosome net");
  if (data.size() == 0 || !data.row_at || data.chromosomes.size() != data.size()) {
    throw DomainError("train_summary: empty or inconsistent dataset");
  }
  Rng rng(derive_seed(config.seed, 0x7u));
  const Split split = split_dataset(data.size(), config.val_fraction, rng);

  auto epoch_batches = [&] {
    auto order = split.train;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> by_chrom(net.genome().size());
    for (auto n : order) by_chrom.at(data.chromosomes[n]).push_back(n);
    std::vector<std::vector<std::size_t>> batches;
    for (auto& ids : by_chrom) {
      auto b = make_batches(std::move(ids), config.batch_size);
      batches.insert(batches.end(), std::make_move_iterator(b.begin()), std::make_move_iterator(b.end()));
    }
    std::shuffle(batches.begin(), batches.end(), rng);
    return batches;
  };
  auto batch_loss = [&](ad::Graph& g, const std::vector<std::size_t>& batch) {
    const std::size_t chrom = data.chromosomes[batch.front()];
    const double len = static_cast<double>(net.genome().length(chrom));
    std::vector<BlockRow> rows;
    ad::Tensor target({batch.size(), 1});
    for (std::size_t k = 0; k < batch.size(); ++k) {
      rows.push_back(data.row_at(batch[k]));
      target[k] = data.thetas[batch[k]] / len;
    }
    return ad::mse(net.forward_head(g, net.row_input(rows), chrom), g.constant(std::move(target)));
  };
  auto eval = [&] { return summary_loss(net, data, split.val); };
  return run_training(net, config, epoch_batches, batch_loss, eval);
}

}  // namespace hicentro
