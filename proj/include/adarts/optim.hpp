#pragma once

#include <vector>

#include "adarts/tensor.hpp"

namespace adarts {

struct SgdOptions {
  double momentum = 0.9;
  double weight_decay = 3e-4;
};

/// v ← μ·v + g + λ·p ;  p ← p − lr·v
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, SgdOptions options);
  void step(double lr);
  void zero_grad();
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  SgdOptions options_;
  std::vector<std::vector<double>> velocity_;
};

struct AdamOptions {
  double lr = 6e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double weight_decay = 1e-3;
  double eps = 1e-8;
};

/// Bias-corrected Adam; weight decay enters the gradient (g + λ·p).
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);
  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }
  const std::vector<std::vector<double>>& first_moment() const { return m_; }
  const std::vector<std::vector<double>>& second_moment() const { return v_; }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// lr0·(1 + cos(π·t/T))/2
double cosine_lr(double t, double total, double lr0);

}  // namespace adarts
