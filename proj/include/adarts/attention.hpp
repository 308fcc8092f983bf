#pragma once

#include "adarts/random.hpp"
#include "adarts/tensor.hpp"

namespace adarts {

/// Shared two-layer MLP (no biases, ReLU hidden layer) mapping pooled channel
/// descriptors to attention logits. hidden width = max(1, floor(C/r)).
struct MlpParams {
  Tensor w1;  // (hidden, C)
  Tensor w2;  // (C, hidden)

  std::size_t channels() const { return w1.dim(1); }
  std::size_t hidden() const { return w1.dim(0); }
};

std::size_t attention_hidden_width(std::size_t channels, std::size_t reduction);

struct AttentionUnit {
  MlpParams mlp;
  std::size_t reduction = 4;

  static AttentionUnit create(std::size_t channels, std::size_t reduction, Rng& rng);
  static AttentionUnit zeros(std::size_t channels, std::size_t reduction);
  std::vector<Tensor> parameters() const { return {mlp.w1, mlp.w2}; }
};

// MLP applied to a (B,C) descriptor.
Tensor mlp_forward(const Tensor& descriptor, const MlpParams& mlp);

/// F_c = σ(MLP(avgpool(F)) + MLP(maxpool(F))), shape (B,C), values in (0,1).
Tensor channel_attention_weights(const Tensor& features, const AttentionUnit& unit);

/// F'[b,c,h,w] = F_c[b,c] · F[b,c,h,w].
Tensor apply_attention(const Tensor& features, const Tensor& weights);

/// Per-channel mean of (B,C) attention weights over the batch.
std::vector<double> batch_mean_weights(const Tensor& weights);

}  // namespace adarts
