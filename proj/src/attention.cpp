#include "adarts/attention.hpp"

#include <algorithm>

#include "adarts/nn.hpp"

namespace adarts {

std::size_t attention_hidden_width(std::size_t channels, std::size_t reduction) {
  if (reduction == 0) throw Error("attention: reduction ratio must be >= 1");
  return std::max<std::size_t>(1, channels / reduction);
}

AttentionUnit AttentionUnit::create(std::size_t channels, std::size_t reduction,
                                    Rng& rng) {
  const std::size_t hidden = attention_hidden_width(channels, reduction);
  return {{init_uniform({hidden, channels}, channels, rng),
           init_uniform({channels, hidden}, hidden, rng)},
          reduction};
}

AttentionUnit AttentionUnit::zeros(std::size_t channels, std::size_t reduction) {
  const std::size_t hidden = attention_hidden_width(channels, reduction);
  return {{Tensor::zeros({hidden, channels}, true),
           Tensor::zeros({channels, hidden}, true)},
          reduction};
}

Tensor mlp_forward(const Tensor& descriptor, const MlpParams& mlp) {
  return linear(relu(linear(descriptor, mlp.w1)), mlp.w2);
}

Tensor channel_attention_weights(const Tensor& features, const AttentionUnit& unit) {
  if (features.rank() != 4 || features.dim(1) != unit.mlp.channels()) {
    throw ShapeError("channel_attention: features " + shape_str(features.shape()) +
                     " vs mlp width " + std::to_string(unit.mlp.channels()));
  }
  const Shape flat{features.dim(0), features.dim(1)};
  Tensor avg = reshape(global_pool(features, PoolKind::Avg), flat);
  Tensor max = reshape(global_pool(features, PoolKind::Max), flat);
  return sigmoid(add(mlp_forward(avg, unit.mlp), mlp_forward(max, unit.mlp)));
}

Tensor apply_attention(const Tensor& features, const Tensor& weights) {
  if (weights.rank() != 2 || features.rank() != 4 ||
      weights.dim(0) != features.dim(0) || weights.dim(1) != features.dim(1)) {
    throw ShapeError("apply_attention: features " + shape_str(features.shape()) +
                     " vs weights " + shape_str(weights.shape()));
  }
  return scale_per_channel(features, weights);
}

std::vector<double> batch_mean_weights(const Tensor& weights) {
  if (weights.rank() != 2) {
    throw ShapeError("batch_mean_weights: expected (B,C), got " + shape_str(weights.shape()));
  }
  const std::size_t batch = weights.dim(0), channels = weights.dim(1);
  std::vector<double> out(channels, 0.0);
  auto v = weights.values();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) out[c] += v[b * channels + c];
  }
  for (double& m : out) m /= static_cast<double>(batch);
  return out;
}

}  // namespace adarts
