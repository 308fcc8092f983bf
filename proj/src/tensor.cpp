#include "adarts/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace adarts {

namespace detail {

struct TensorImpl {
  std::uint64_t id = 0;
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty when absent
  bool requires_grad = false;
  std::shared_ptr<Node> creator;
};

struct Node {
  std::uint64_t seq = 0;
  OpCode kind = OpCode::Leaf;
  std::vector<Tensor> inputs;
  std::weak_ptr<TensorImpl> output;
  std::uint64_t output_id = 0;
  BackwardFn backward;
};

}  // namespace detail

namespace {

std::atomic<std::uint64_t> next_tensor_id{1};
std::atomic<std::uint64_t> next_node_seq{1};
thread_local bool grad_mode = true;
thread_local AllocationCounter* active_counter = nullptr;

std::shared_ptr<detail::TensorImpl> new_impl(Shape shape,
                                             std::vector<double> values) {
  if (values.size() != shape_numel(shape)) {
    throw ShapeError("tensor: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->id = next_tensor_id.fetch_add(1, std::memory_order_relaxed);
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  if (active_counter != nullptr) active_counter->add(impl->values.size());
  return impl;
}

void check_finite(OpCode code, std::span<const double> values) {
  // A double is inf or NaN exactly when all exponent bits are set.
  constexpr std::uint64_t exponent = 0x7ff0000000000000ULL;
  std::uint64_t bad = 0;
  for (double v : values) {
    bad |= static_cast<std::uint64_t>((std::bit_cast<std::uint64_t>(v) & exponent) == exponent);
  }
  if (bad != 0) {
    throw NonFiniteError(std::string(opcode_name(code)) + ": non-finite value in output");
  }
}

std::string mismatch(std::string_view kind, const Shape& a, const Shape& b) {
  return std::string(kind) + ": shape mismatch " + shape_str(a) + " vs " +
         shape_str(b);
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string_view opcode_name(OpCode code) {
  switch (code) {
    case OpCode::Leaf: return "leaf";
    case OpCode::Add: return "add";
    case OpCode::Sub: return "sub";
    case OpCode::Mul: return "mul";
    case OpCode::MatMul: return "matmul";
    case OpCode::Relu: return "relu";
    case OpCode::Sigmoid: return "sigmoid";
    case OpCode::SoftmaxLastDim: return "softmax-lastdim";
    case OpCode::Mean: return "mean";
    case OpCode::Sum: return "sum";
    case OpCode::ConcatChannel: return "concat-channel";
    case OpCode::SliceChannel: return "slice-channel";
    case OpCode::ScalePerChannel: return "scale-per-channel";
    case OpCode::Reshape: return "reshape";
    case OpCode::PickRow: return "pick-row";
    case OpCode::CropTopLeft: return "crop-top-left";
    case OpCode::WeightedSum: return "weighted-sum";
    case OpCode::Conv2d: return "conv2d";
    case OpCode::Pool2d: return "pool2d";
    case OpCode::GlobalPool: return "global-pool";
    case OpCode::BatchNorm: return "batch-norm";
    case OpCode::Linear: return "linear";
    case OpCode::CrossEntropy: return "cross-entropy";
  }
  return "unknown";
}

// ---- Tensor -------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(shape_numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  for (std::size_t extent : shape) {
    if (extent == 0) throw ShapeError("tensor: zero extent in " + shape_str(shape));
  }
  Tensor t(new_impl(std::move(shape), std::move(values)));
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

std::uint64_t Tensor::id() const { return impl_->id; }
const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) +
                     " out of range for " + shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->values.size(); }
std::span<const double> Tensor::values() const { return impl_->values; }
std::span<double> Tensor::mutable_values() { return impl_->values; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item: tensor of shape " + shape_str(shape()) +
                     " is not a scalar");
  }
  return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool on) { impl_->requires_grad = on; }
bool Tensor::is_leaf() const { return impl_->creator == nullptr; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }
std::span<double> Tensor::mutable_grad() { return impl_->grad; }

void Tensor::zero_grad() { impl_->grad.assign(impl_->values.size(), 0.0); }
void Tensor::clear_grad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

Tensor Tensor::detach() const {
  return from(impl_->shape, impl_->values, false);
}

// ---- graph recording ----------------------------------------------------

bool grad_enabled() { return grad_mode; }

NoGradGuard::NoGradGuard() : previous_(grad_mode) { grad_mode = false; }
NoGradGuard::~NoGradGuard() { grad_mode = previous_; }

CountingScope::CountingScope(AllocationCounter& counter)
    : previous_(active_counter) {
  active_counter = &counter;
}
CountingScope::~CountingScope() { active_counter = previous_; }

Tensor make_result(OpCode code, std::vector<Tensor> inputs, Shape shape,
                   std::vector<double> values, BackwardFn backward) {
  check_finite(code, values);
  Tensor out(new_impl(std::move(shape), std::move(values)));
  if (!grad_mode) return out;
  bool needs = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  auto node = std::make_shared<detail::Node>();
  node->seq = next_node_seq.fetch_add(1, std::memory_order_relaxed);
  node->kind = code;
  node->inputs = std::move(inputs);
  node->output = out.impl_;
  node->output_id = out.impl_->id;
  node->backward = std::move(backward);
  out.impl_->requires_grad = true;
  out.impl_->creator = std::move(node);
  return out;
}

std::span<double> grad_buffer(const Tensor& t) {
  auto* impl = t.impl();
  if (!impl->requires_grad) return {};
  if (impl->grad.empty()) impl->grad.assign(impl->values.size(), 0.0);
  return impl->grad;
}

ComputeGraph ComputeGraph::trace(const Tensor& root) {
  ComputeGraph graph;
  std::unordered_set<const detail::Node*> seen;
  std::vector<detail::Node*> stack;
  if (root.impl_->creator) stack.push_back(root.impl_->creator.get());
  std::vector<std::shared_ptr<detail::Node>> found;
  while (!stack.empty()) {
    detail::Node* node = stack.back();
    stack.pop_back();
    if (!seen.insert(node).second) continue;
    for (const Tensor& in : node->inputs) {
      const auto& creator = in.impl()->creator;
      if (creator && !seen.contains(creator.get())) {
        stack.push_back(creator.get());
      }
      if (creator) found.push_back(creator);
    }
  }
  if (root.impl_->creator) found.push_back(root.impl_->creator);
  std::sort(found.begin(), found.end(),
            [](const auto& a, const auto& b) { return a->seq < b->seq; });
  found.erase(std::unique(found.begin(), found.end()), found.end());
  graph.nodes_ = std::move(found);
  return graph;
}

std::vector<GraphNode> ComputeGraph::nodes() const {
  std::vector<GraphNode> out;
  out.reserve(nodes_.size());
  for (const auto& node : nodes_) {
    GraphNode view{node->kind, {}, node->output_id};
    for (const Tensor& in : node->inputs) view.input_ids.push_back(in.id());
    out.push_back(std::move(view));
  }
  return out;
}

GradientMap backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : "()"));
  }
  ComputeGraph graph = ComputeGraph::trace(loss);
  if (graph.empty()) {
    throw Error("backward: loss was not produced by a recorded graph");
  }
  grad_buffer(loss)[0] += 1.0;

  std::vector<Tensor> leaves;
  std::unordered_set<std::uint64_t> leaf_ids;
  for (auto it = graph.nodes_.rbegin(); it != graph.nodes_.rend(); ++it) {
    detail::Node& node = **it;
    auto out = node.output.lock();
    if (out && !out->grad.empty()) {
      node.backward(out->grad);
      // Interior gradients are consumed exactly once, in this order.
      out->grad.clear();
      out->grad.shrink_to_fit();
    }
    for (const Tensor& in : node.inputs) {
      if (in.is_leaf() && in.requires_grad() && leaf_ids.insert(in.id()).second) {
        leaves.push_back(in);
      }
    }
  }

  GradientMap grads;
  for (const Tensor& leaf : leaves) {
    if (!leaf.has_grad()) continue;
    check_finite(OpCode::Leaf, leaf.grad());
    grads.emplace(leaf.id(),
                  std::vector<double>(leaf.grad().begin(), leaf.grad().end()));
  }
  return grads;
}

std::vector<double> finite_difference_gradient(
    const std::function<double(const Tensor&)>& f, Tensor x, double h) {
  if (!(h > 0.0)) throw Error("finite_difference_gradient: step must be > 0");
  NoGradGuard no_grad;
  std::vector<double> out(x.numel());
  auto values = x.mutable_values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double plus = f(x);
    values[i] = saved - h;
    const double minus = f(x);
    values[i] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NonFiniteError("finite_difference_gradient: f is not finite");
    }
    out[i] = (plus - minus) / (2.0 * h);
  }
  return out;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("relative_error: length mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  if (scale == 0.0) return 0.0;
  return std::sqrt(diff) / scale;
}

// ---- primitives ---------------------------------------------------------

namespace {

enum class Broadcast { Same, Scalar, Suffix };

Broadcast broadcast_kind(std::string_view kind, const Tensor& a,
                         const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.numel() == 1) return Broadcast::Scalar;
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() <= sa.size() &&
      std::equal(sb.begin(), sb.end(), sa.end() - static_cast<long>(sb.size()))) {
    return Broadcast::Suffix;
  }
  throw ShapeError(mismatch(kind, sa, sb));
}

template <typename Fwd, typename DA, typename DB>
Tensor binary(OpCode code, const Tensor& a, const Tensor& b, Fwd fwd, DA da,
              DB db) {
  const Broadcast mode = broadcast_kind(opcode_name(code), a, b);
  const std::size_t n = a.numel();
  const std::size_t m = b.numel();
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double bi = mode == Broadcast::Same ? bv[i] : bv[i % m];
    out[i] = fwd(av[i], bi);
  }
  return make_result(code, {a, b}, a.shape(), std::move(out),
                     [a, b, mode, n, m, da, db](std::span<const double> g) {
                       auto av = a.values();
                       auto bv = b.values();
                       auto ga = grad_buffer(a);
                       auto gb = grad_buffer(b);
                       for (std::size_t i = 0; i < n; ++i) {
                         const std::size_t j = mode == Broadcast::Same ? i : i % m;
                         if (!ga.empty()) ga[i] += g[i] * da(av[i], bv[j]);
                         if (!gb.empty()) gb[j] += g[i] * db(av[i], bv[j]);
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      OpCode::Add, a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      OpCode::Sub, a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      OpCode::Mul, a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError(mismatch("matmul", a.shape(), b.shape()));
  }
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += aip * bv[p * m + j];
    }
  }
  return make_result(OpCode::MatMul, {a, b}, {n, m}, std::move(out),
                     [a, b, n, k, m](std::span<const double> g) {
                       auto av = a.values();
                       auto bv = b.values();
                       auto ga = grad_buffer(a);
                       auto gb = grad_buffer(b);
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t p = 0; p < k; ++p) {
                           double acc = 0.0;
                           for (std::size_t j = 0; j < m; ++j) {
                             const double gij = g[i * m + j];
                             acc += gij * bv[p * m + j];
                             if (!gb.empty()) gb[p * m + j] += av[i * k + p] * gij;
                           }
                           if (!ga.empty()) ga[i * k + p] += acc;
                         }
                       }
                     });
}

Tensor relu(const Tensor& x) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return make_result(OpCode::Relu, {x}, x.shape(), std::move(out),
                     [x](std::span<const double> g) {
                       auto xv = x.values();
                       auto gx = grad_buffer(x);
                       for (std::size_t i = 0; i < xv.size(); ++i) {
                         gx[i] += xv[i] > 0.0 ? g[i] : 0.0;
                       }
                     });
}

Tensor sigmoid(const Tensor& x) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  }
  auto saved = std::make_shared<std::vector<double>>(out);
  return make_result(OpCode::Sigmoid, {x}, x.shape(), std::move(out),
                     [x, saved](std::span<const double> g) {
                       auto gx = grad_buffer(x);
                       const auto& s = *saved;
                       for (std::size_t i = 0; i < s.size(); ++i) {
                         gx[i] += g[i] * s[i] * (1.0 - s[i]);
                       }
                     });
}

Tensor softmax_lastdim(const Tensor& x) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * n;
    double* o = out.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  auto saved = std::make_shared<std::vector<double>>(out);
  return make_result(OpCode::SoftmaxLastDim, {x}, x.shape(), std::move(out),
                     [x, saved, n, rows](std::span<const double> g) {
                       auto gx = grad_buffer(x);
                       const auto& s = *saved;
                       for (std::size_t r = 0; r < rows; ++r) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j) {
                           dot += g[r * n + j] * s[r * n + j];
                         }
                         for (std::size_t j = 0; j < n; ++j) {
                           gx[r * n + j] += s[r * n + j] * (g[r * n + j] - dot);
                         }
                       }
                     });
}

Tensor sum(const Tensor& x) {
  auto xv = x.values();
  double total = 0.0;
  for (double v : xv) total += v;
  return make_result(OpCode::Sum, {x}, {1}, {total},
                     [x](std::span<const double> g) {
                       auto gx = grad_buffer(x);
                       for (double& v : gx) v += g[0];
                     });
}

Tensor mean(const Tensor& x) {
  auto xv = x.values();
  double total = 0.0;
  for (double v : xv) total += v;
  const double n = static_cast<double>(xv.size());
  return make_result(OpCode::Mean, {x}, {1}, {total / n},
                     [x, n](std::span<const double> g) {
                       auto gx = grad_buffer(x);
                       for (double& v : gx) v += g[0] / n;
                     });
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw Error("concat-channel: empty input sequence");
  const Shape& first = xs.front().shape();
  if (first.size() < 2) throw ShapeError("concat-channel: rank < 2 in " + shape_str(first));
  std::size_t channels = 0;
  for (const Tensor& t : xs) {
    const Shape& s = t.shape();
    bool ok = s.size() == first.size() && s[0] == first[0] &&
              std::equal(s.begin() + 2, s.end(), first.begin() + 2);
    if (!ok) throw ShapeError(mismatch("concat-channel", first, s));
    channels += s[1];
  }
  const std::size_t batch = first[0];
  const std::size_t plane = shape_numel(first) / (first[0] * first[1]);
  Shape shape = first;
  shape[1] = channels;
  std::vector<double> out(batch * channels * plane);
  std::size_t offset = 0;
  for (const Tensor& t : xs) {
    const std::size_t c = t.dim(1);
    auto tv = t.values();
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(tv.data() + b * c * plane, c * plane,
                  out.data() + (b * channels + offset) * plane);
    }
    offset += c;
  }
  return make_result(OpCode::ConcatChannel, xs, shape, std::move(out),
                     [xs, batch, channels, plane](std::span<const double> g) {
                       std::size_t offset = 0;
                       for (const Tensor& t : xs) {
                         const std::size_t c = t.dim(1);
                         auto gt = grad_buffer(t);
                         if (!gt.empty()) {
                           for (std::size_t b = 0; b < batch; ++b) {
                             const double* src = g.data() + (b * channels + offset) * plane;
                             double* dst = gt.data() + b * c * plane;
                             for (std::size_t i = 0; i < c * plane; ++i) dst[i] += src[i];
                           }
                         }
                         offset += c;
                       }
                     });
}

Tensor slice_channels(const Tensor& x, std::span<const std::size_t> indices) {
  if (x.rank() < 2) throw ShapeError("slice-channel: rank < 2 in " + shape_str(x.shape()));
  if (indices.empty()) throw Error("slice-channel: empty index set");
  const std::size_t batch = x.dim(0), channels = x.dim(1);
  for (std::size_t c : indices) {
    if (c >= channels) {
      throw ShapeError("slice-channel: index " + std::to_string(c) +
                       " out of range for " + shape_str(x.shape()));
    }
  }
  const std::size_t plane = x.numel() / (batch * channels);
  const std::size_t picked = indices.size();
  Shape shape = x.shape();
  shape[1] = picked;
  auto xv = x.values();
  std::vector<double> out(batch * picked * plane);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < picked; ++i) {
      std::copy_n(xv.data() + (b * channels + indices[i]) * plane, plane,
                  out.data() + (b * picked + i) * plane);
    }
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_result(OpCode::SliceChannel, {x}, shape, std::move(out),
                     [x, idx, batch, channels, plane](std::span<const double> g) {
                       auto gx = grad_buffer(x);
                       const std::size_t picked = idx.size();
                       for (std::size_t b = 0; b < batch; ++b) {
                         for (std::size_t i = 0; i < picked; ++i) {
                           const double* src = g.data() + (b * picked + i) * plane;
                           double* dst = gx.data() + (b * channels + idx[i]) * plane;
                           for (std::size_t p = 0; p < plane; ++p) dst[p] += src[p];
                         }
                       }
                     });
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin >= end) throw Error("slice-channel: empty range");
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return slice_channels(x, std::span<const std::size_t>(idx));
}

Tensor scale_per_channel(const Tensor& x, const Tensor& scale) {
  if (x.rank() != 4) throw ShapeError("scale-per-channel: expected (B,C,H,W), got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), channels = x.dim(1);
  const bool per_sample = scale.rank() == 2;
  const bool ok = per_sample ? (scale.dim(0) == batch && scale.dim(1) == channels)
                             : (scale.rank() == 1 && scale.dim(0) == channels);
  if (!ok) throw ShapeError(mismatch("scale-per-channel", x.shape(), scale.shape()));
  const std::size_t plane = x.dim(2) * x.dim(3);
  auto xv = x.values();
  auto sv = scale.values();
  std::vector<double> out(xv.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double s = sv[per_sample ? b * channels + c : c];
      const std::size_t base = (b * channels + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) out[base + p] = s * xv[base + p];
    }
  }
  return make_result(
      OpCode::ScalePerChannel, {x, scale}, x.shape(), std::move(out),
      [x, scale, batch, channels, plane, per_sample](std::span<const double> g) {
        auto xv = x.values();
        auto sv = scale.values();
        auto gx = grad_buffer(x);
        auto gs = grad_buffer(scale);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t si = per_sample ? b * channels + c : c;
            const std::size_t base = (b * channels + c) * plane;
            double acc = 0.0;
            for (std::size_t p = 0; p < plane; ++p) {
              acc += g[base + p] * xv[base + p];
              if (!gx.empty()) gx[base + p] += g[base + p] * sv[si];
            }
            if (!gs.empty()) gs[si] += acc;
          }
        }
      });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError(mismatch("reshape", x.shape(), shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result(OpCode::Reshape, {x}, std::move(shape), std::move(out),
                     [x](std::span<const double> g) {
                       auto gx = grad_buffer(x);
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                     });
}

Tensor pick_row(const Tensor& x, std::size_t row) {
  if (x.rank() != 2 || row >= x.dim(0)) {
    throw ShapeError("pick-row: row " + std::to_string(row) + " of " +
                     shape_str(x.shape()));
  }
  const std::size_t n = x.dim(1);
  auto xv = x.values();
  std::vector<double> out(xv.begin() + static_cast<long>(row * n),
                          xv.begin() + static_cast<long>((row + 1) * n));
  return make_result(OpCode::PickRow, {x}, {n}, std::move(out),
                     [x, row, n](std::span<const double> g) {
                       auto gx = grad_buffer(x);
                       for (std::size_t j = 0; j < n; ++j) gx[row * n + j] += g[j];
                     });
}

Tensor crop_top_left(const Tensor& x) {
  if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2) {
    throw ShapeError("crop-top-left: expected (B,C,H>=2,W>=2), got " + shape_str(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3);
  auto xv = x.values();
  std::vector<double> out(planes * (h - 1) * (w - 1));
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 1; i < h; ++i) {
      std::copy_n(xv.data() + (p * h + i) * w + 1, w - 1,
                  out.data() + (p * (h - 1) + i - 1) * (w - 1));
    }
  }
  return make_result(OpCode::CropTopLeft, {x}, {x.dim(0), x.dim(1), h - 1, w - 1},
                     std::move(out), [x, planes, h, w](std::span<const double> g) {
                       auto gx = grad_buffer(x);
                       for (std::size_t p = 0; p < planes; ++p) {
                         for (std::size_t i = 1; i < h; ++i) {
                           for (std::size_t j = 1; j < w; ++j) {
                             gx[(p * h + i) * w + j] += g[(p * (h - 1) + i - 1) * (w - 1) + j - 1];
                           }
                         }
                       }
                     });
}

Tensor weighted_sum(const std::vector<Tensor>& xs, const Tensor& w) {
  if (xs.empty()) throw Error("weighted-sum: empty input sequence");
  if (w.rank() != 1 || w.numel() != xs.size()) {
    throw ShapeError("weighted-sum: " + std::to_string(xs.size()) +
                     " terms but weights of shape " + shape_str(w.shape()));
  }
  const Shape& shape = xs.front().shape();
  for (const Tensor& t : xs) {
    if (t.shape() != shape) throw ShapeError(mismatch("weighted-sum", shape, t.shape()));
  }
  auto wv = w.values();
  std::vector<double> out(shape_numel(shape), 0.0);
  for (std::size_t k = 0; k < xs.size(); ++k) {
    auto xv = xs[k].values();
    const double wk = wv[k];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += wk * xv[i];
  }
  std::vector<Tensor> inputs = xs;
  inputs.push_back(w);
  return make_result(OpCode::WeightedSum, std::move(inputs), shape, std::move(out),
                     [xs, w](std::span<const double> g) {
                       auto wv = w.values();
                       auto gw = grad_buffer(w);
                       for (std::size_t k = 0; k < xs.size(); ++k) {
                         auto gx = grad_buffer(xs[k]);
                         auto xv = xs[k].values();
                         double acc = 0.0;
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           acc += g[i] * xv[i];
                           if (!gx.empty()) gx[i] += g[i] * wv[k];
                         }
                         if (!gw.empty()) gw[k] += acc;
                       }
                     });
}

std::string_view primitive_name(Primitive kind) {
  switch (kind) {
    case Primitive::Add: return "add";
    case Primitive::Sub: return "sub";
    case Primitive::Mul: return "mul";
    case Primitive::MatMul: return "matmul";
    case Primitive::Relu: return "relu";
    case Primitive::Sigmoid: return "sigmoid";
    case Primitive::SoftmaxLastDim: return "softmax-lastdim";
    case Primitive::Mean: return "mean";
    case Primitive::Sum: return "sum";
    case Primitive::ConcatChannel: return "concat-channel";
    case Primitive::SliceChannel: return "slice-channel";
    case Primitive::ScalePerChannel: return "scale-per-channel";
  }
  return "unknown";
}

Tensor primitive_forward(Primitive kind, std::span<const Tensor> inputs) {
  const std::string name(primitive_name(kind));
  if (inputs.empty()) throw Error(name + ": empty input sequence");
  auto need = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw Error(name + ": expected " + std::to_string(n) + " inputs, got " +
                  std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case Primitive::Add: need(2); return add(inputs[0], inputs[1]);
    case Primitive::Sub: need(2); return sub(inputs[0], inputs[1]);
    case Primitive::Mul: need(2); return mul(inputs[0], inputs[1]);
    case Primitive::MatMul: need(2); return matmul(inputs[0], inputs[1]);
    case Primitive::Relu: need(1); return relu(inputs[0]);
    case Primitive::Sigmoid: need(1); return sigmoid(inputs[0]);
    case Primitive::SoftmaxLastDim: need(1); return softmax_lastdim(inputs[0]);
    case Primitive::Mean: need(1); return mean(inputs[0]);
    case Primitive::Sum: need(1); return sum(inputs[0]);
    case Primitive::ConcatChannel:
      return concat_channels(std::vector<Tensor>(inputs.begin(), inputs.end()));
    case Primitive::SliceChannel: {
      need(2);
      std::vector<std::size_t> idx;
      for (double v : inputs[1].values()) {
        if (v < 0.0 || v != std::floor(v)) throw Error(name + ": non-integral index");
        idx.push_back(static_cast<std::size_t>(v));
      }
      return slice_channels(inputs[0], std::span<const std::size_t>(idx));
    }
    case Primitive::ScalePerChannel: need(2); return scale_per_channel(inputs[0], inputs[1]);
  }
  throw Error("primitive_forward: unknown kind");
}

}  // namespace adarts
