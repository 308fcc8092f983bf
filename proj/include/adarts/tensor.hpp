#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace adarts {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Every recorded operation, including the dedicated kernels of the nn layer.
enum class OpCode {
  Leaf,
  Add,
  Sub,
  Mul,
  MatMul,
  Relu,
  Sigmoid,
  SoftmaxLastDim,
  Mean,
  Sum,
  ConcatChannel,
  SliceChannel,
  ScalePerChannel,
  Reshape,
  PickRow,
  CropTopLeft,
  WeightedSum,
  Conv2d,
  Pool2d,
  GlobalPool,
  BatchNorm,
  Linear,
  CrossEntropy,
};

std::string_view opcode_name(OpCode code);

namespace detail {
struct TensorImpl;
struct Node;
}  // namespace detail

/// Shared handle to a dense row-major array of doubles with an optional
/// gradient buffer. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  std::uint64_t id() const;

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // Raw write access; intended for optimizers and test fixtures acting on
  // leaves between forward passes.
  std::span<double> mutable_values();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  // Allocates a zero gradient buffer (or clears an existing one).
  void zero_grad();
  void clear_grad();

  // Fresh leaf holding a copy of the values, outside any graph.
  Tensor detach() const;

  detail::TensorImpl* impl() const { return impl_.get(); }

 private:
  friend struct detail::Node;
  friend Tensor make_result(OpCode, std::vector<Tensor>, Shape,
                            std::vector<double>,
                            std::function<void(std::span<const double>)>);
  friend class ComputeGraph;
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

  std::shared_ptr<detail::TensorImpl> impl_;
};

using BackwardFn = std::function<void(std::span<const double> grad_out)>;

/// Builds the output of an operation. When gradient recording is enabled and
/// any input requires a gradient, a node is appended to the graph and the
/// output requires a gradient too. `backward` receives the output gradient and
/// must accumulate into the inputs through grad_buffer().
Tensor make_result(OpCode code, std::vector<Tensor> inputs, Shape shape,
                   std::vector<double> values, BackwardFn backward);

/// Gradient accumulation target for `t`, allocated on first use. Returns an
/// empty span when `t` does not require a gradient.
std::span<double> grad_buffer(const Tensor& t);

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Counts doubles allocated for tensors created on this thread while in scope.
/// Scopes nest; the innermost one receives the count.
class AllocationCounter {
 public:
  void reset() { count_ = 0; }
  std::size_t count() const { return count_; }
  void add(std::size_t n) { count_ += n; }

 private:
  std::size_t count_ = 0;
};

class CountingScope {
 public:
  explicit CountingScope(AllocationCounter& counter);
  ~CountingScope();
  CountingScope(const CountingScope&) = delete;
  CountingScope& operator=(const CountingScope&) = delete;

 private:
  AllocationCounter* previous_;
};

struct GraphNode {
  OpCode kind;
  std::vector<std::uint64_t> input_ids;
  std::uint64_t output_id;
};

/// Nodes reachable from a tensor, in recording order. Every input of a node
/// is produced by an earlier node or is a leaf.
class ComputeGraph {
 public:
  static ComputeGraph trace(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  std::vector<GraphNode> nodes() const;

 private:
  friend std::map<std::uint64_t, std::vector<double>> backward(const Tensor&);
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

using GradientMap = std::map<std::uint64_t, std::vector<double>>;

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate into the
/// leaves' grad buffers; the returned map holds a copy keyed by tensor id.
GradientMap backward(const Tensor& loss);

/// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h for every element of
/// `x`, evaluated with graph recording disabled. `x` is restored afterwards.
std::vector<double> finite_difference_gradient(
    const std::function<double(const Tensor&)>& f, Tensor x, double h);

/// ||a - b|| / max(||a||, ||b||), or 0 when both norms vanish.
double relative_error(std::span<const double> a, std::span<const double> b);

// ---- primitives ---------------------------------------------------------

// Elementwise binary ops. `b` may match `a`'s shape, hold a single element,
// or match a suffix of `a`'s shape (row broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax_lastdim(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor concat_channels(const std::vector<Tensor>& xs);
// Gathers channels (axis 1) in the given order; indices may repeat.
Tensor slice_channels(const Tensor& x, std::span<const std::size_t> indices);
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end);
// x is (B,C,H,W); scale is (C) or (B,C).
Tensor scale_per_channel(const Tensor& x, const Tensor& scale);
Tensor reshape(const Tensor& x, Shape shape);
// Row `row` of a 2-D tensor as a 1-D tensor.
Tensor pick_row(const Tensor& x, std::size_t row);
// Drops the first row and column of every (H,W) plane.
Tensor crop_top_left(const Tensor& x);
// Σ_k w[k] · xs[k]; w is 1-D with one entry per term.
Tensor weighted_sum(const std::vector<Tensor>& xs, const Tensor& w);

enum class Primitive {
  Add,
  Sub,
  Mul,
  MatMul,
  Relu,
  Sigmoid,
  SoftmaxLastDim,
  Mean,
  Sum,
  ConcatChannel,
  SliceChannel,
  ScalePerChannel,
};

std::string_view primitive_name(Primitive kind);

/// Uniform entry point over the primitive kinds. SliceChannel expects the
/// channel indices as a second 1-D tensor.
Tensor primitive_forward(Primitive kind, std::span<const Tensor> inputs);

}  // namespace adarts
