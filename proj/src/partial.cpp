#include "adarts/partial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>

namespace adarts {

std::size_t ChannelMask::popcount() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), true));
}

std::vector<std::size_t> ChannelMask::selected() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < bits.size(); ++c) {
    if (bits[c]) out.push_back(c);
  }
  return out;
}

std::vector<std::size_t> ChannelMask::masked() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < bits.size(); ++c) {
    if (!bits[c]) out.push_back(c);
  }
  return out;
}

std::size_t selected_width(std::size_t channels, std::size_t proportion) {
  if (proportion < 1) throw Error("channel selection: K must be >= 1");
  return std::max<std::size_t>(1, channels / proportion);
}

ChannelMask select_channels(std::span<const double> weights, std::size_t proportion) {
  if (proportion < 1) throw Error("select_channels: K must be >= 1");
  if (weights.empty()) throw Error("select_channels: no channels");
  const std::size_t keep = selected_width(weights.size(), proportion);
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return weights[a] > weights[b];
  });
  ChannelMask mask{std::vector<bool>(weights.size(), false), proportion};
  for (std::size_t i = 0; i < keep; ++i) mask.bits[order[i]] = true;
  return mask;
}

ChannelMask random_channels(std::size_t channels, std::size_t proportion, Rng& rng) {
  const std::size_t keep = selected_width(channels, proportion);
  std::vector<std::size_t> order(channels);
  std::iota(order.begin(), order.end(), 0);
  // Partial Fisher-Yates: the first `keep` slots are a uniform sample.
  for (std::size_t i = 0; i < keep; ++i) {
    std::swap(order[i], order[i + rng.index(channels - i)]);
  }
  ChannelMask mask{std::vector<bool>(channels, false), proportion};
  for (std::size_t i = 0; i < keep; ++i) mask.bits[order[i]] = true;
  return mask;
}

Tensor mixed_op_full(const Tensor& x, const Tensor& weights,
                     std::span<const ModulePtr> ops, AllocationCounter* counter) {
  if (weights.rank() != 1 || weights.numel() != ops.size()) {
    throw ShapeError("mixed_op: " + std::to_string(ops.size()) +
                     " candidates but weights of shape " + shape_str(weights.shape()));
  }
  std::optional<CountingScope> scope;
  if (counter != nullptr) scope.emplace(*counter);
  std::vector<Tensor> outputs;
  outputs.reserve(ops.size());
  for (const ModulePtr& op : ops) outputs.push_back(op->forward(x));
  return weighted_sum(outputs, weights);
}

Tensor partial_mixed_op(const Tensor& x, const ChannelMask& mask,
                        const Tensor& weights, std::span<const ModulePtr> ops,
                        std::size_t stride, AllocationCounter* counter) {
  if (x.rank() != 4 || mask.channels() != x.dim(1)) {
    throw ShapeError("partial_mixed_op: mask of " + std::to_string(mask.channels()) +
                     " channels for input " + shape_str(x.shape()));
  }
  double total = 0.0;
  for (double w : weights.values()) total += w;
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error("partial_mixed_op: operation weights sum to " + std::to_string(total) +
                ", expected a softmax-normalized row");
  }
  const std::vector<std::size_t> selected = mask.selected();
  const std::vector<std::size_t> bypassed = mask.masked();
  if (selected.empty()) throw Error("partial_mixed_op: empty channel selection");

  Tensor picked = selected.size() == x.dim(1) ? x : slice_channels(x, selected);
  Tensor mixed;
  try {
    mixed = mixed_op_full(picked, weights, ops, counter);
  } catch (const ShapeError& e) {
    throw ShapeError("partial_mixed_op: candidate ops do not accept " +
                     std::to_string(selected.size()) + " channels (" + e.what() + ")");
  }
  if (mixed.dim(1) != selected.size()) {
    throw ShapeError("partial_mixed_op: op width " + std::to_string(mixed.dim(1)) +
                     " != selected channels " + std::to_string(selected.size()));
  }
  if (bypassed.empty()) return mixed;

  Tensor rest = slice_channels(x, bypassed);
  if (stride == 2) rest = pool2d(rest, PoolKind::Avg, 3, 2);

  // concat puts selected first; gather back into original channel order.
  std::vector<std::size_t> position(x.dim(1));
  for (std::size_t i = 0; i < selected.size(); ++i) position[selected[i]] = i;
  for (std::size_t i = 0; i < bypassed.size(); ++i) {
    position[bypassed[i]] = selected.size() + i;
  }
  return slice_channels(concat_channels({mixed, rest}), position);
}

}  // namespace adarts
