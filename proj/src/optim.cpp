#include "adarts/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace adarts {

namespace {

void require_grads(const std::vector<Tensor>& params, const char* who) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw Error(std::string(who) + ": parameter " + std::to_string(i) + " has no gradient");
    }
  }
}

}  // namespace

Sgd::Sgd(std::vector<Tensor> params, SgdOptions options)
    : params_(std::move(params)), options_(options) {
  for (const Tensor& p : params_) velocity_.emplace_back(p.numel(), 0.0);
}

void Sgd::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Sgd::step(double lr) {
  require_grads(params_, "sgd");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i].mutable_values();
    auto g = params_[i].grad();
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = options_.momentum * v[j] + g[j] + options_.weight_decay * p[j];
      p[j] -= lr * v[j];
    }
  }
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Adam::step() {
  require_grads(params_, "adam");
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto p = params_[i].mutable_values();
    auto g = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j] + options_.weight_decay * p[j];
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      p[j] -= options_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + options_.eps);
    }
  }
}

double cosine_lr(double t, double total, double lr0) {
  if (total <= 0.0) throw Error("cosine_lr: schedule length must be positive");
  if (t < 0.0 || t > total) throw Error("cosine_lr: t outside [0, T]");
  return lr0 * (1.0 + std::cos(std::numbers::pi * t / total)) / 2.0;
}

}  // namespace adarts
