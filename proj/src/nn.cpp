#include "hicentro/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "hicentro/error.hpp"

namespace hicentro::nn {

namespace {

Tensor uniform_tensor(ad::Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.data) v = dist(rng);
  return t;
}

double xavier_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

Dense::Dense(std::size_t in, std::size_t out, Rng& rng, const std::string& name)
    : weight(name + ".weight", uniform_tensor({in, out}, xavier_bound(in, out), rng)),
      bias(name + ".bias", Tensor({out})) {}

Var Dense::operator()(ad::Graph& g, Var x) { return ad::dense(x, bind(g, weight), bind(g, bias)); }
Var Dense::operator()(ad::Graph& g, Var x) const { return ad::dense(x, bind(g, weight), bind(g, bias)); }

MaskedDense::MaskedDense(Tensor m, Rng& rng, const std::string& name)
    : mask(std::move(m)),
      weight(name + ".weight", uniform_tensor(mask.shape, xavier_bound(mask.dim(0), mask.dim(1)), rng)),
      bias(name + ".bias", Tensor({mask.dim(1)})) {}

Var MaskedDense::operator()(ad::Graph& g, Var x) {
  return ad::dense(x, ad::mul(bind(g, weight), g.constant(mask)), bind(g, bias));
}

Var MaskedDense::operator()(ad::Graph& g, Var x) const {
  return ad::dense(x, ad::mul(bind(g, weight), g.constant(mask)), bind(g, bias));
}

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t s, Rng& rng,
               const std::string& name)
    : weight(name + ".weight",
             uniform_tensor({out_channels, in_channels, kernel, kernel},
                            std::sqrt(6.0 / static_cast<double>(in_channels * kernel * kernel)), rng)),
      bias(name + ".bias", Tensor({out_channels})),
      stride(s) {}

Var Conv2d::operator()(ad::Graph& g, Var x) { return ad::conv2d(x, bind(g, weight), bind(g, bias), stride); }
Var Conv2d::operator()(ad::Graph& g, Var x) const { return ad::conv2d(x, bind(g, weight), bind(g, bias), stride); }

std::size_t Conv2d::out_size(std::size_t in_size) const {
  const std::size_t k = weight.value.dim(2);
  if (in_size < k) throw ShapeError("conv2d: input smaller than kernel");
  return (in_size - k) / stride + 1;
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
    p->zero_grad();
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (p.grad.size() != p.value.size()) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t e = 0; e < p.value.size(); ++e) {
      const double g = p.grad[e];
      m[e] = config_.beta1 * m[e] + (1.0 - config_.beta1) * g;
      v[e] = config_.beta2 * v[e] + (1.0 - config_.beta2) * g * g;
      const double mhat = m[e] / bc1;
      const double vhat = v[e] / bc2;
      p.value[e] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

std::size_t parameter_count(std::span<Parameter* const> params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += p->value.size();
  return n;
}

bool all_finite(std::span<Parameter* const> params) {
  for (const Parameter* p : params)
    for (double v : p->value.data)
      if (!std::isfinite(v)) return false;
  return true;
}

void snap_to_f32(std::span<Parameter* const> params) {
  for (Parameter* p : params)
    for (double& v : p->value.data) v = static_cast<double>(static_cast<float>(v));
}

std::vector<ad::Buffer> snapshot(std::span<Parameter* const> params) {
  std::vector<ad::Buffer> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value.data);
  return out;
}

void restore(std::span<Parameter* const> params, const std::vector<ad::Buffer>& values) {
  if (values.size() != params.size()) throw ShapeError("restore: snapshot does not match parameter list");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (values[k].size() != params[k]->value.size()) throw ShapeError("restore: size mismatch for " + params[k]->name);
    params[k]->value.data = values[k];
  }
}

void save_checkpoint(const std::filesystem::path& path, nlohmann::json header, std::span<Parameter* const> params) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
  header["parameters"] = nlohmann::json::array();
  std::size_t count = 0;
  for (const Parameter* p : params) {
    header["parameters"].push_back({{"name", p->name}, {"shape", p->value.shape}});
    count += p->value.size();
  }
  header["dtype"] = "f32le";
  header["blob_bytes"] = count * sizeof(float);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write checkpoint " + path.string());
  out << header.dump() << '\n';
  std::vector<float> blob;
  blob.reserve(count);
  for (const Parameter* p : params)
    for (double v : p->value.data) blob.push_back(static_cast<float>(v));
  out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(float)));
}

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("checkpoint " + path.string() + ": bad header: " + e.what());
  }
}

nlohmann::json load_checkpoint(const std::filesystem::path& path, std::span<Parameter* const> params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("checkpoint " + path.string() + ": bad header: " + e.what());
  }
  const auto& listed = header.at("parameters");
  if (listed.size() != params.size()) throw LoadError("checkpoint " + path.string() + ": parameter count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (listed[k].at("name").get<std::string>() != params[k]->name ||
        listed[k].at("shape").get<ad::Shape>() != params[k]->value.shape) {
      throw LoadError("checkpoint " + path.string() + ": parameter " + params[k]->name + " does not match");
    }
  }
  for (Parameter* p : params) {
    std::vector<float> buf(p->value.size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw LoadError("checkpoint " + path.string() + ": truncated parameter blob");
    for (std::size_t e = 0; e < buf.size(); ++e) p->value[e] = static_cast<double>(buf[e]);
    p->zero_grad();
  }
  return header;
}

}  // namespace hicentro::nn
