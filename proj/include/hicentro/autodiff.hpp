#pragma once

// Minimal tensor-level reverse-mode automatic differentiation.
//
// A Graph is a tape: every op appends a node holding its value and a closure
// that pushes the node's gradient to its inputs. Graphs are built per batch and
// thrown away; trainable state lives in Parameter objects whose gradients the
// tape accumulates into. Values are stored in double precision.

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace hicentro::ad {

using Shape = std::vector<std::size_t>;

// Cache-line aligned storage. Eigen peels unaligned heads off vectorized
// loops, so an address-dependent start would change summation order and make
// results depend on where malloc placed the buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

[[nodiscard]] std::size_t shape_size(const Shape& shape) noexcept;
[[nodiscard]] std::string shape_string(const Shape& shape);

struct Tensor {
  Shape shape;
  Buffer data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::span<const double> values);

  [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
  [[nodiscard]] std::size_t dim(std::size_t k) const { return shape.at(k); }
  double& operator[](std::size_t k) { return data[k]; }
  const double& operator[](std::size_t k) const { return data[k]; }
};

// Trainable tensor with a persistent gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}
  void zero_grad();
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] const Shape& shape() const { return value().shape; }
  [[nodiscard]] double item() const;
  [[nodiscard]] Graph& graph() const { return *graph_; }
  [[nodiscard]] std::size_t id() const noexcept { return id_; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}
  Graph* graph_{nullptr};
  std::size_t id_{0};
};

class Graph {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad{false};
    Parameter* param{nullptr};
    std::function<void(const Tensor& grad)> backward;
  };

  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var parameter(Parameter& p);

  // Reverse sweep from a single-element loss. Parameter gradients accumulate
  // (callers zero them between steps).
  void backward(Var loss);

  [[nodiscard]] const Tensor& value(Var v) const { return nodes_.at(v.id_)->value; }
  [[nodiscard]] bool requires_grad(Var v) const { return nodes_.at(v.id_)->requires_grad; }
  // Gradient of a node after backward(); zeros if none flowed there.
  [[nodiscard]] Tensor grad(Var v) const;

  // Op plumbing: creates a node whose backward closure receives its gradient.
  Var record(Tensor value, std::span<const Var> inputs, std::function<void(const Tensor&)> backward);
  // Returns the gradient buffer of v for accumulation (allocating zeros).
  Tensor& grad_buffer(Var v);

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
};

// ---- ops -----------------------------------------------------------------
// Shape mismatches throw ShapeError naming the op.

Var matmul(Var a, Var b);                  // [n,k] x [k,m]
Var add_bias(Var x, Var bias);             // [n,m] + [m]
Var dense(Var x, Var weight, Var bias);    // x W + b, W is [in,out]
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                     // elementwise
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var relu(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sum(Var a);                            // -> [1]
Var mean(Var a);                           // -> [1]
Var sum_cols(Var a);                       // [n,m] -> [n,1]
Var mse(Var pred, Var target);             // sum of squares / rows -> [1]
Var logsumexp_rows(Var a);                 // [n,m] -> [n,1]
Var reshape(Var a, Shape shape);
Var flatten(Var a);                        // [b,...] -> [b, rest]
Var concat_cols(Var a, Var b);             // [n,p],[n,q] -> [n,p+q]
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var permute_cols(Var a, std::span<const std::size_t> perm);  // out[:,k] = a[:,perm[k]]
// [B,C,H,W] -> [B,C,H+top+bottom,W+left+right], new cells zero.
Var zero_pad2d(Var x, std::size_t top, std::size_t bottom, std::size_t left, std::size_t right);
// Valid cross-correlation. x [B,C,H,W], w [O,C,k,k], b [O] -> [B,O,Ho,Wo].
Var conv2d(Var x, Var weight, Var bias, std::size_t stride);
// Mean over consecutive groups of `group` rows: [n*group, f] -> [n, f].
// Summation order is independent of row order within a group.
Var group_mean(Var x, std::size_t group);

}  // namespace hicentro::ad
