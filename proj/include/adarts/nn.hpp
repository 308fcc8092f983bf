#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "adarts/random.hpp"
#include "adarts/tensor.hpp"

namespace adarts {

/// Convolution geometry plus its weight of shape (C_out, C_in/groups, k, k).
/// Padding is dilation·(k−1)/2, which preserves H×W at stride 1.
struct ConvParams {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t groups = 1;
  Tensor weight;

  std::size_t padding() const { return dilation * (kernel - 1) / 2; }
};

// Fan-in scaled uniform init, bound sqrt(1/fan_in).
ConvParams make_conv(std::size_t in_channels, std::size_t out_channels,
                     std::size_t kernel, std::size_t stride,
                     std::size_t dilation, std::size_t groups, Rng& rng);
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng);

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, std::size_t dilation,
                               std::size_t pad);

Tensor conv2d(const Tensor& x, const ConvParams& p);

enum class PoolKind { Max, Avg };

// k×k window with padding k/2. Average pooling divides by the number of
// in-bounds elements; max pooling sends the gradient to the first maximum.
Tensor pool2d(const Tensor& x, PoolKind kind, std::size_t kernel = 3,
              std::size_t stride = 1);
Tensor global_pool(const Tensor& x, PoolKind kind);

inline constexpr double kBatchNormEps = 1e-5;

// Per-channel standardization with batch statistics, no affine parameters.
Tensor batch_norm(const Tensor& x);

// x (N,in) · weightᵀ (+ bias), weight of shape (out,in).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

// Mean over the batch of −log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// ---- blocks -------------------------------------------------------------

class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor forward(const Tensor& x) = 0;
  virtual std::vector<Tensor> parameters() const { return {}; }
  std::size_t parameter_count() const;
};

using ModulePtr = std::unique_ptr<Module>;

class Identity final : public Module {
 public:
  Tensor forward(const Tensor& x) override { return x; }
};

// Zero output with the spatial extent a stride-s 3×3 op would produce.
class Zero final : public Module {
 public:
  explicit Zero(std::size_t stride) : stride_(stride) {}
  Tensor forward(const Tensor& x) override;

 private:
  std::size_t stride_;
};

class Pool final : public Module {
 public:
  Pool(PoolKind kind, std::size_t stride) : kind_(kind), stride_(stride) {}
  Tensor forward(const Tensor& x) override { return pool2d(x, kind_, 3, stride_); }

 private:
  PoolKind kind_;
  std::size_t stride_;
};

// relu → conv k×k → batch_norm
class ReluConvBn final : public Module {
 public:
  ReluConvBn(std::size_t in, std::size_t out, std::size_t kernel,
             std::size_t stride, Rng& rng);
  Tensor forward(const Tensor& x) override;
  std::vector<Tensor> parameters() const override { return {conv_.weight}; }

 private:
  ConvParams conv_;
};

// [relu → depthwise k×k → pointwise 1×1 → batch_norm] twice, only the first
// depthwise conv strided.
class SepConv final : public Module {
 public:
  SepConv(std::size_t channels, std::size_t kernel, std::size_t stride, Rng& rng);
  Tensor forward(const Tensor& x) override;
  std::vector<Tensor> parameters() const override;

 private:
  ConvParams dw1_, pw1_, dw2_, pw2_;
};

// relu → depthwise k×k dilation 2 → pointwise 1×1 → batch_norm
class DilConv final : public Module {
 public:
  DilConv(std::size_t channels, std::size_t kernel, std::size_t stride, Rng& rng);
  Tensor forward(const Tensor& x) override;
  std::vector<Tensor> parameters() const override;

 private:
  ConvParams dw_, pw_;
};

// Stride-2 channel map: relu, then two 1×1 stride-2 convs on the input and on
// the input shifted by one pixel, concatenated and normalized. Needs even H,W.
class FactorizedReduce final : public Module {
 public:
  FactorizedReduce(std::size_t in, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x) override;
  std::vector<Tensor> parameters() const override;

 private:
  ConvParams first_;
  std::optional<ConvParams> second_;
};

class Linear final : public Module {
 public:
  Linear(std::size_t in, std::size_t out, bool bias, Rng& rng);
  Tensor forward(const Tensor& x) override { return linear(x, weight_, bias_); }
  std::vector<Tensor> parameters() const override;

 private:
  Tensor weight_;
  Tensor bias_;
};

}  // namespace adarts
