#pragma once

#include <span>
#include <vector>

#include "adarts/nn.hpp"
#include "adarts/random.hpp"
#include "adarts/tensor.hpp"

namespace adarts {

/// Channel selection for a partially connected edge: bits[c] is true when
/// channel c enters the operation space.
struct ChannelMask {
  std::vector<bool> bits;
  std::size_t proportion = 1;  // K

  std::size_t channels() const { return bits.size(); }
  std::size_t popcount() const;
  std::vector<std::size_t> selected() const;
  std::vector<std::size_t> masked() const;
};

/// max(1, floor(C/K)).
std::size_t selected_width(std::size_t channels, std::size_t proportion);

/// Marks the floor(C/K) (at least one) largest weights; equal weights are
/// ranked by lower channel index.
ChannelMask select_channels(std::span<const double> weights, std::size_t proportion);

/// Uniformly random subset of the same size, for the random-partial baseline.
ChannelMask random_channels(std::size_t channels, std::size_t proportion, Rng& rng);

/// Σ_k w_k · op_k(x) over the candidate set. `weights` is the softmaxed row.
/// When `counter` is given, the doubles allocated while evaluating the
/// candidates are added to it.
Tensor mixed_op_full(const Tensor& x, const Tensor& weights,
                     std::span<const ModulePtr> ops,
                     AllocationCounter* counter = nullptr);

/// Selected channels go through the weighted operation space, the rest bypass
/// it (average-pooled with stride 2 on reduction edges) and the two groups are
/// put back in the original channel order.
Tensor partial_mixed_op(const Tensor& x, const ChannelMask& mask,
                        const Tensor& weights, std::span<const ModulePtr> ops,
                        std::size_t stride, AllocationCounter* counter = nullptr);

}  // namespace adarts
