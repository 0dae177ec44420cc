#include "hicentro/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "hicentro/error.hpp"

namespace hicentro::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return {t.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return {t.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
ConstVecMap as_vector(const Tensor& t) { return {t.data.data(), static_cast<Eigen::Index>(t.size())}; }
VecMap as_vector(Tensor& t) { return {t.data.data(), static_cast<Eigen::Index>(t.size())}; }

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

void require_rank(const char* op, const Var& v, std::size_t rank) {
  if (v.shape().size() != rank) {
    shape_fail(op, "expected rank " + std::to_string(rank) + ", got " + shape_string(v.shape()));
  }
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) shape_fail(op, shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

void require_same_graph(const char* op, const Var& a, const Var& b) {
  if (&a.graph() != &b.graph()) shape_fail(op, "operands live on different graphs");
}

// Unary elementwise op: value f(x), derivative expressed through (x, y).
template <typename F, typename D>
Var unary(Var a, F f, D dfdx) {
  Graph& g = a.graph();
  Tensor out(a.shape());
  const Tensor& x = a.value();
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = f(x[k]);
  const Var inputs[] = {a};
  auto y = std::make_shared<Tensor>(out);
  return g.record(std::move(out), inputs, [&g, a, y, dfdx](const Tensor& grad) {
    Tensor& ga = g.grad_buffer(a);
    const Tensor& x = a.value();
    for (std::size_t k = 0; k < grad.size(); ++k) ga[k] += grad[k] * dfdx(x[k], (*y)[k]);
  });
}

}  // namespace

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t k = 0; k < shape.size(); ++k) out << (k ? "," : "") << shape[k];
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

Tensor::Tensor(Shape s, std::span<const double> values) : shape(std::move(s)), data(values.begin(), values.end()) {
  if (data.size() != shape_size(shape)) {
    throw ShapeError("tensor: " + std::to_string(data.size()) + " values for shape " + shape_string(shape));
  }
}

void Parameter::zero_grad() {
  if (grad.shape != value.shape) grad = Tensor(value.shape);
  std::fill(grad.data.begin(), grad.data.end(), 0.0);
}

const Tensor& Var::value() const { return graph_->value(*this); }

double Var::item() const {
  if (value().size() != 1) throw ShapeError("item: tensor has " + std::to_string(value().size()) + " elements");
  return value()[0];
}

// Tapes allocate and free many large buffers per step; with glibc's default
// mmap threshold each of those round-trips through the kernel.
Graph::Graph() {
  static std::once_flag once;
  std::call_once(once, [] {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  });
}

Var Graph::constant(Tensor value) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Parameter& p) {
  auto node = std::make_unique<Node>();
  node->value = p.value;
  node->requires_grad = true;
  node->param = &p;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::span<const Var> inputs, std::function<void(const Tensor&)> backward) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  for (const Var& v : inputs) {
    if (&v.graph() != this) throw ShapeError("graph: operand belongs to another graph");
    node->requires_grad = node->requires_grad || requires_grad(v);
  }
  if (node->requires_grad) node->backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_buffer(Var v) {
  Node& n = *nodes_.at(v.id_);
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape);
  return n.grad;
}

Tensor Graph::grad(Var v) const {
  const Node& n = *nodes_.at(v.id_);
  if (n.grad.size() != n.value.size()) return Tensor(n.value.shape);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (&loss.graph() != this) throw ShapeError("backward: loss belongs to another graph");
  if (loss.value().size() != 1) throw ShapeError("backward: loss must be a single element");
  for (auto& n : nodes_) n->grad = Tensor();
  grad_buffer(loss)[0] = 1.0;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& n = *nodes_[id];
    if (!n.requires_grad || n.grad.size() != n.value.size()) continue;
    if (n.param) {
      if (n.param->grad.shape != n.param->value.shape) n.param->zero_grad();
      as_vector(n.param->grad) += as_vector(n.grad);
    }
    if (n.backward) n.backward(n.grad);
  }
}

Var matmul(Var a, Var b) {
  require_same_graph("matmul", a, b);
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  if (b.shape()[0] != k) shape_fail("matmul", shape_string(a.shape()) + " x " + shape_string(b.shape()));
  Graph& g = a.graph();
  Tensor out({n, m});
  as_matrix(out, n, m).noalias() = as_matrix(a.value(), n, k) * as_matrix(b.value(), k, m);
  const Var inputs[] = {a, b};
  return g.record(std::move(out), inputs, [&g, a, b, n, k, m](const Tensor& grad) {
    const auto G = as_matrix(grad, n, m);
    if (g.requires_grad(a)) as_matrix(g.grad_buffer(a), n, k).noalias() += G * as_matrix(b.value(), k, m).transpose();
    if (g.requires_grad(b)) as_matrix(g.grad_buffer(b), k, m).noalias() += as_matrix(a.value(), n, k).transpose() * G;
  });
}

Var add_bias(Var x, Var bias) {
  require_same_graph("add_bias", x, bias);
  require_rank("add_bias", x, 2);
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (bias.value().size() != m) shape_fail("add_bias", shape_string(x.shape()) + " + " + shape_string(bias.shape()));
  Graph& g = x.graph();
  Tensor out = x.value();
  as_matrix(out, n, m).rowwise() += as_vector(bias.value()).transpose();
  const Var inputs[] = {x, bias};
  return g.record(std::move(out), inputs, [&g, x, bias, n, m](const Tensor& grad) {
    if (g.requires_grad(x)) as_vector(g.grad_buffer(x)) += as_vector(grad);
    if (g.requires_grad(bias)) as_vector(g.grad_buffer(bias)) += as_matrix(grad, n, m).colwise().sum().transpose();
  });
}

Var dense(Var x, Var weight, Var bias) { return add_bias(matmul(x, weight), bias); }

Var add(Var a, Var b) {
  require_same_graph("add", a, b);
  require_same_shape("add", a, b);
  Graph& g = a.graph();
  Tensor out = a.value();
  as_vector(out) += as_vector(b.value());
  const Var inputs[] = {a, b};
  return g.record(std::move(out), inputs, [&g, a, b](const Tensor& grad) {
    if (g.requires_grad(a)) as_vector(g.grad_buffer(a)) += as_vector(grad);
    if (g.requires_grad(b)) as_vector(g.grad_buffer(b)) += as_vector(grad);
  });
}

Var sub(Var a, Var b) {
  require_same_graph("sub", a, b);
  require_same_shape("sub", a, b);
  Graph& g = a.graph();
  Tensor out = a.value();
  as_vector(out) -= as_vector(b.value());
  const Var inputs[] = {a, b};
  return g.record(std::move(out), inputs, [&g, a, b](const Tensor& grad) {
    if (g.requires_grad(a)) as_vector(g.grad_buffer(a)) += as_vector(grad);
    if (g.requires_grad(b)) as_vector(g.grad_buffer(b)) -= as_vector(grad);
  });
}

Var mul(Var a, Var b) {
  require_same_graph("mul", a, b);
  require_same_shape("mul", a, b);
  Graph& g = a.graph();
  Tensor out = a.value();
  as_vector(out).array() *= as_vector(b.value()).array();
  const Var inputs[] = {a, b};
  return g.record(std::move(out), inputs, [&g, a, b](const Tensor& grad) {
    if (g.requires_grad(a))
      as_vector(g.grad_buffer(a)).array() += as_vector(grad).array() * as_vector(b.value()).array();
    if (g.requires_grad(b))
      as_vector(g.grad_buffer(b)).array() += as_vector(grad).array() * as_vector(a.value()).array();
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(Var a) {
  Graph& g = a.graph();
  Tensor out({1}, as_vector(a.value()).sum());
  const Var inputs[] = {a};
  return g.record(std::move(out), inputs,
                  [&g, a](const Tensor& grad) { as_vector(g.grad_buffer(a)).array() += grad[0]; });
}

Var mean(Var a) {
  if (a.value().size() == 0) shape_fail("mean", "empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var sum_cols(Var a) {
  require_rank("sum_cols", a, 2);
  const std::size_t n = a.shape()[0], m = a.shape()[1];
  Graph& g = a.graph();
  Tensor out({n, 1});
  as_vector(out) = as_matrix(a.value(), n, m).rowwise().sum();
  const Var inputs[] = {a};
  return g.record(std::move(out), inputs, [&g, a, n, m](const Tensor& grad) {
    as_matrix(g.grad_buffer(a), n, m).colwise() += as_vector(grad);
  });
}

Var mse(Var pred, Var target) {
  require_same_graph("mse", pred, target);
  require_same_shape("mse", pred, target);
  if (pred.shape().empty() || pred.shape()[0] == 0) shape_fail("mse", "empty batch");
  const double rows = static_cast<double>(pred.shape()[0]);
  return scale(sum(square(sub(pred, target))), 1.0 / rows);
}

Var logsumexp_rows(Var a) {
  require_rank("logsumexp_rows", a, 2);
  const std::size_t n = a.shape()[0], m = a.shape()[1];
  if (m == 0) shape_fail("logsumexp_rows", "no columns");
  Graph& g = a.graph();
  Tensor out({n, 1});
  auto soft = std::make_shared<Tensor>(Shape{n, m});
  const Tensor& x = a.value();
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m; ++c) mx = std::max(mx, x[r * m + c]);
    double acc = 0.0;
    for (std::size_t c = 0; c < m; ++c) acc += std::exp(x[r * m + c] - mx);
    out[r] = mx + std::log(acc);
    for (std::size_t c = 0; c < m; ++c) (*soft)[r * m + c] = std::exp(x[r * m + c] - out[r]);
  }
  const Var inputs[] = {a};
  return g.record(std::move(out), inputs, [&g, a, soft, n, m](const Tensor& grad) {
    Tensor& ga = g.grad_buffer(a);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) ga[r * m + c] += grad[r] * (*soft)[r * m + c];
  });
}

Var reshape(Var a, Shape shape) {
  if (shape_size(shape) != a.value().size()) {
    shape_fail("reshape", shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  Graph& g = a.graph();
  Tensor out(std::move(shape), a.value().data);
  const Var inputs[] = {a};
  return g.record(std::move(out), inputs,
                  [&g, a](const Tensor& grad) { as_vector(g.grad_buffer(a)) += as_vector(grad); });
}

Var flatten(Var a) {
  if (a.shape().empty()) shape_fail("flatten", "scalar input");
  const std::size_t b = a.shape()[0];
  return reshape(a, {b, b ? a.value().size() / b : 0});
}

Var concat_cols(Var a, Var b) {
  require_same_graph("concat_cols", a, b);
  require_rank("concat_cols", a, 2);
  require_rank("concat_cols", b, 2);
  const std::size_t n = a.shape()[0], p = a.shape()[1], q = b.shape()[1];
  if (b.shape()[0] != n) shape_fail("concat_cols", shape_string(a.shape()) + " | " + shape_string(b.shape()));
  Graph& g = a.graph();
  Tensor out({n, p + q});
  auto o = as_matrix(out, n, p + q);
  o.leftCols(static_cast<Eigen::Index>(p)) = as_matrix(a.value(), n, p);
  o.rightCols(static_cast<Eigen::Index>(q)) = as_matrix(b.value(), n, q);
  const Var inputs[] = {a, b};
  return g.record(std::move(out), inputs, [&g, a, b, n, p, q](const Tensor& grad) {
    const auto G = as_matrix(grad, n, p + q);
    if (g.requires_grad(a)) as_matrix(g.grad_buffer(a), n, p) += G.leftCols(static_cast<Eigen::Index>(p));
    if (g.requires_grad(b)) as_matrix(g.grad_buffer(b), n, q) += G.rightCols(static_cast<Eigen::Index>(q));
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", a, 2);
  const std::size_t n = a.shape()[0], m = a.shape()[1];
  if (begin > end || end > m) {
    shape_fail("slice_cols", "range [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                                 shape_string(a.shape()));
  }
  const std::size_t w = end - begin;
  Graph& g = a.graph();
  Tensor out({n, w});
  as_matrix(out, n, w) = as_matrix(a.value(), n, m).middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(w));
  const Var inputs[] = {a};
  return g.record(std::move(out), inputs, [&g, a, n, m, begin, w](const Tensor& grad) {
    as_matrix(g.grad_buffer(a), n, m).middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(w)) +=
        as_matrix(grad, n, w);
  });
}

Var permute_cols(Var a, std::span<const std::size_t> perm) {
  require_rank("permute_cols", a, 2);
  const std::size_t n = a.shape()[0], m = a.shape()[1];
  if (perm.size() != m) shape_fail("permute_cols", "permutation length does not match columns");
  std::vector<std::size_t> p(perm.begin(), perm.end());
  for (auto c : p)
    if (c >= m) shape_fail("permute_cols", "index out of range");
  Graph& g = a.graph();
  Tensor out({n, m});
  const Tensor& x = a.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] = x[r * m + p[c]];
  const Var inputs[] = {a};
  return g.record(std::move(out), inputs, [&g, a, n, m, p](const Tensor& grad) {
    Tensor& ga = g.grad_buffer(a);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) ga[r * m + p[c]] += grad[r * m + c];
  });
}

Var zero_pad2d(Var x, std::size_t top, std::size_t bottom, std::size_t left, std::size_t right) {
  require_rank("zero_pad2d", x, 4);
  const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const std::size_t H2 = H + top + bottom, W2 = W + left + right;
  Graph& g = x.graph();
  Tensor out({B, C, H2, W2});
  const Tensor& in = x.value();
  for (std::size_t bc = 0; bc < B * C; ++bc)
    for (std::size_t h = 0; h < H; ++h)
      std::copy_n(&in[(bc * H + h) * W], W, &out[(bc * H2 + h + top) * W2 + left]);
  const Var inputs[] = {x};
  return g.record(std::move(out), inputs, [&g, x, B, C, H, W, H2, W2, top, left](const Tensor& grad) {
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t bc = 0; bc < B * C; ++bc)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) gx[(bc * H + h) * W + w] += grad[(bc * H2 + h + top) * W2 + left + w];
  });
}

Var conv2d(Var x, Var weight, Var bias, std::size_t stride) {
  require_same_graph("conv2d", x, weight);
  require_same_graph("conv2d", x, bias);
  require_rank("conv2d", x, 4);
  require_rank("conv2d", weight, 4);
  const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const std::size_t O = weight.shape()[0], k = weight.shape()[2];
  if (weight.shape()[1] != C || weight.shape()[3] != k) {
    shape_fail("conv2d", "weight " + shape_string(weight.shape()) + " for input " + shape_string(x.shape()));
  }
  if (bias.value().size() != O) shape_fail("conv2d", "bias " + shape_string(bias.shape()));
  if (stride == 0 || H < k || W < k) shape_fail("conv2d", "kernel larger than input or zero stride");
  const std::size_t Ho = (H - k) / stride + 1, Wo = (W - k) / stride + 1;
  const std::size_t P = Ho * Wo, K = C * k * k;

  // im2col + GEMM over chunks of images small enough to stay in cache; the
  // backward pass rebuilds the columns instead of keeping them alive.
  const std::size_t chunk = std::max<std::size_t>(1, (1u << 16) / std::max<std::size_t>(1, K * P));
  auto im2col = [=](const Tensor& in, std::size_t b0, std::size_t nb, RowMat& col) {
    col.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(nb * P));
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t ki = 0; ki < k; ++ki)
        for (std::size_t kj = 0; kj < k; ++kj) {
          double* row = col.row(static_cast<Eigen::Index>((c * k + ki) * k + kj)).data();
          for (std::size_t b = 0; b < nb; ++b) {
            const double* img = &in[((b0 + b) * C + c) * H * W];
            for (std::size_t oy = 0; oy < Ho; ++oy) {
              const double* src = img + (oy * stride + ki) * W + kj;
              double* dst = row + b * P + oy * Wo;
              for (std::size_t ox = 0; ox < Wo; ++ox) dst[ox] = src[ox * stride];
            }
          }
        }
  };

  const Tensor& in = x.value();
  const auto wmat = as_matrix(weight.value(), O, K);
  const auto bvec = as_vector(bias.value());
  Tensor out({B, O, Ho, Wo});
  RowMat col, res;
  for (std::size_t b0 = 0; b0 < B; b0 += chunk) {
    const std::size_t nb = std::min(chunk, B - b0);
    im2col(in, b0, nb, col);
    res.noalias() = wmat * col;
    res.colwise() += bvec;
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t o = 0; o < O; ++o)
        std::copy_n(res.row(static_cast<Eigen::Index>(o)).data() + b * P, P, &out[((b0 + b) * O + o) * P]);
  }

  Graph& g = x.graph();
  const Var inputs[] = {x, weight, bias};
  return g.record(std::move(out), inputs,
                  [&g, x, weight, bias, im2col, B, C, H, W, O, k, stride, Ho, Wo, P, K, chunk](const Tensor& grad) {
                    const bool need_w = g.requires_grad(weight), need_b = g.requires_grad(bias);
                    const bool need_x = g.requires_grad(x);
                    const auto wmat = as_matrix(weight.value(), O, K);
                    RowMat G, col, dcol;
                    for (std::size_t b0 = 0; b0 < B; b0 += chunk) {
                      const std::size_t nb = std::min(chunk, B - b0);
                      G.resize(static_cast<Eigen::Index>(O), static_cast<Eigen::Index>(nb * P));
                      for (std::size_t b = 0; b < nb; ++b)
                        for (std::size_t o = 0; o < O; ++o)
                          std::copy_n(&grad[((b0 + b) * O + o) * P], P,
                                      G.row(static_cast<Eigen::Index>(o)).data() + b * P);
                      if (need_w) {
                        im2col(x.value(), b0, nb, col);
                        as_matrix(g.grad_buffer(weight), O, K).noalias() += G * col.transpose();
                      }
                      if (need_b) as_vector(g.grad_buffer(bias)) += G.rowwise().sum();
                      if (!need_x) continue;
                      dcol.noalias() = wmat.transpose() * G;
                      Tensor& gx = g.grad_buffer(x);
                      for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t ki = 0; ki < k; ++ki)
                          for (std::size_t kj = 0; kj < k; ++kj) {
                            const double* row = dcol.row(static_cast<Eigen::Index>((c * k + ki) * k + kj)).data();
                            for (std::size_t b = 0; b < nb; ++b) {
                              double* img = &gx[((b0 + b) * C + c) * H * W];
                              for (std::size_t oy = 0; oy < Ho; ++oy) {
                                double* dst = img + (oy * stride + ki) * W + kj;
                                const double* src = row + b * P + oy * Wo;
                                for (std::size_t ox = 0; ox < Wo; ++ox) dst[ox * stride] += src[ox];
                              }
                            }
                          }
                    }
                  });
}

Var group_mean(Var x, std::size_t group) {
  require_rank("group_mean", x, 2);
  const std::size_t rows = x.shape()[0], f = x.shape()[1];
  if (group == 0 || rows % group != 0) {
    shape_fail("group_mean", std::to_string(rows) + " rows not divisible by group " + std::to_string(group));
  }
  const std::size_t n = rows / group;
  Graph& g = x.graph();
  Tensor out({n, f});
  const Tensor& in = x.value();
  std::vector<double> buf(group);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < f; ++c) {
      for (std::size_t k = 0; k < group; ++k) buf[k] = in[(b * group + k) * f + c];
      std::sort(buf.begin(), buf.end());
      double acc = 0.0;
      for (double v : buf) acc += v;
      out[b * f + c] = acc / static_cast<double>(group);
    }
  const Var inputs[] = {x};
  return g.record(std::move(out), inputs, [&g, x, n, f, group](const Tensor& grad) {
    Tensor& gx = g.grad_buffer(x);
    const double inv = 1.0 / static_cast<double>(group);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t k = 0; k < group; ++k)
        for (std::size_t c = 0; c < f; ++c) gx[(b * group + k) * f + c] += grad[b * f + c] * inv;
  });
}

}  // namespace hicentro::ad
