#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "adarts/random.hpp"
#include "adarts/tensor.hpp"

namespace testing {

inline adarts::Tensor random_tensor(adarts::Shape shape, adarts::Rng& rng, bool requires_grad = true,
                                    double lo = -1.0, double hi = 1.0) {
  const std::size_t n = adarts::shape_numel(shape);
  return adarts::Tensor::from(std::move(shape), rng.uniform_vector(n, lo, hi), requires_grad);
}

// Central differences written against raw storage, independent of the
// library's own finite_difference_gradient.
inline std::vector<double> numeric_grad(const std::function<double()>& f, adarts::Tensor x,
                                        double h = 1e-5) {
  adarts::NoGradGuard no_grad;
  auto v = x.mutable_values();
  std::vector<double> g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double saved = v[i];
    v[i] = saved + h;
    const double up = f();
    v[i] = saved - h;
    const double down = f();
    v[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double norm_rel(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

inline std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Weighted-sum loss Σ r·out with fixed r, so every output element matters.
inline adarts::Tensor probe_loss(const adarts::Tensor& out, const adarts::Tensor& r) {
  return adarts::sum(adarts::mul(out, r));
}

inline adarts::Tensor probe_weights(const adarts::Tensor& like, std::uint64_t seed) {
  adarts::Rng rng(seed);
  return adarts::Tensor::from(like.shape(), rng.uniform_vector(like.numel(), -1.0, 1.0));
}

// Analytic vs numeric gradient for each target of a tensor-valued forward.
inline double gradient_error(const std::function<adarts::Tensor()>& forward,
                             const std::vector<adarts::Tensor>& targets, std::uint64_t seed = 7) {
  adarts::Tensor r;
  {
    adarts::NoGradGuard no_grad;
    r = probe_weights(forward(), seed);
  }
  for (adarts::Tensor t : targets) t.clear_grad();
  adarts::backward(probe_loss(forward(), r));
  double worst = 0.0;
  for (const adarts::Tensor& t : targets) {
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) analytic = to_vec(t.grad());
    const auto numeric = numeric_grad([&] { return probe_loss(forward(), r).item(); }, t);
    worst = std::max(worst, norm_rel(analytic, numeric));
  }
  for (adarts::Tensor t : targets) t.clear_grad();
  return worst;
}

}  // namespace testing
