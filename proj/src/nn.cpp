#include "adarts/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace adarts {

namespace {

void require_4d(std::string_view kind, const Tensor& x) {
  if (!x.defined() || x.rank() != 4) {
    throw ShapeError(std::string(kind) + ": expected (B,C,H,W), got " +
                     (x.defined() ? shape_str(x.shape()) : "()"));
  }
}

// Output positions o with 0 <= o*stride + offset < extent, as [lo, hi).
std::pair<std::ptrdiff_t, std::ptrdiff_t> valid_range(std::ptrdiff_t offset,
                                                      std::ptrdiff_t stride,
                                                      std::ptrdiff_t extent,
                                                      std::ptrdiff_t out) {
  std::ptrdiff_t lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  std::ptrdiff_t hi = extent - 1 - offset < 0 ? 0 : (extent - 1 - offset) / stride + 1;
  if (hi > out) hi = out;
  if (lo > hi) lo = hi;
  return {lo, hi};
}

// Geometry of one conv2d call; padding is symmetric.
struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, cin_g, cout_g, k, s, d, pad, ho, wo;
};

// Fixed-order eight-lane dot product; vectorizes without reassociation.
double dot(const double* a, const double* b, std::size_t n) {
  double lane[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) lane[j] += a[i + j] * b[i + j];
  }
  double acc = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

// (B, C·H·W) <-> (C·H·W, B); conv kernels below run with batch innermost.
std::vector<double> to_batch_last(std::span<const double> v, std::size_t batch) {
  const std::size_t inner = v.size() / batch;
  std::vector<double> t(v.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < inner; ++i) t[i * batch + b] = v[b * inner + i];
  }
  return t;
}

void add_batch_first(std::span<const double> t, std::size_t batch, std::span<double> dst) {
  const std::size_t inner = t.size() / batch;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < inner; ++i) dst[b * inner + i] += t[i * batch + b];
  }
}

// Visits every (weight index, input pixel, output pixel) triple, pixels as
// flat (channel, row, col) offsets into batch-last buffers.
template <typename Fn>
void for_each_tap(const ConvGeometry& g, Fn&& fn) {
  const auto S = static_cast<std::ptrdiff_t>(g.s);
  for (std::size_t oc = 0; oc < g.cout; ++oc) {
    const std::size_t grp = oc / g.cout_g;
    for (std::size_t icl = 0; icl < g.cin_g; ++icl) {
      const std::size_t ic = grp * g.cin_g + icl;
      for (std::size_t kh = 0; kh < g.k; ++kh) {
        const auto off_h = static_cast<std::ptrdiff_t>(kh * g.d) - static_cast<std::ptrdiff_t>(g.pad);
        auto [oh_lo, oh_hi] = valid_range(off_h, S, static_cast<std::ptrdiff_t>(g.h),
                                          static_cast<std::ptrdiff_t>(g.ho));
        for (std::size_t kw = 0; kw < g.k; ++kw) {
          const std::size_t widx = ((oc * g.cin_g + icl) * g.k + kh) * g.k + kw;
          const auto off_w = static_cast<std::ptrdiff_t>(kw * g.d) - static_cast<std::ptrdiff_t>(g.pad);
          auto [ow_lo, ow_hi] = valid_range(off_w, S, static_cast<std::ptrdiff_t>(g.w),
                                            static_cast<std::ptrdiff_t>(g.wo));
          for (std::ptrdiff_t oh = oh_lo; oh < oh_hi; ++oh) {
            const auto ih = static_cast<std::size_t>(oh * S + off_h);
            for (std::ptrdiff_t ow = ow_lo; ow < ow_hi; ++ow) {
              const auto iw = static_cast<std::size_t>(ow * S + off_w);
              fn(widx, (ic * g.h + ih) * g.w + iw,
                 (oc * g.ho + static_cast<std::size_t>(oh)) * g.wo + static_cast<std::size_t>(ow));
            }
          }
        }
      }
    }
  }
}

// 1×1 stride-1 dense conv as a per-sample (C_out×C_in)·(C_in×HW) product.
Tensor pointwise_conv(const Tensor& x, const Tensor& w, std::size_t batch,
                      std::size_t cin, std::size_t cout, std::size_t area,
                      std::vector<double> out) {
  auto xv = x.values();
  auto wv = w.values();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* in = xv.data() + b * cin * area;
    double* o = out.data() + b * cout * area;
    for (std::size_t oc = 0; oc < cout; ++oc) {
      double* orow = o + oc * area;
      for (std::size_t ic = 0; ic < cin; ++ic) {
        const double wk = wv[oc * cin + ic];
        const double* irow = in + ic * area;
        for (std::size_t p = 0; p < area; ++p) orow[p] += wk * irow[p];
      }
    }
  }
  return make_result(
      OpCode::Conv2d, {x, w}, {batch, cout, x.dim(2), x.dim(3)}, std::move(out),
      [x, w, batch, cin, cout, area](std::span<const double> grad) {
        auto xv = x.values();
        auto wv = w.values();
        auto gx = grad_buffer(x);
        auto gw = grad_buffer(w);
        for (std::size_t b = 0; b < batch; ++b) {
          const double* in = xv.data() + b * cin * area;
          const double* go = grad.data() + b * cout * area;
          for (std::size_t oc = 0; oc < cout; ++oc) {
            const double* grow = go + oc * area;
            for (std::size_t ic = 0; ic < cin; ++ic) {
              if (!gx.empty()) {
                const double wk = wv[oc * cin + ic];
                double* girow = gx.data() + (b * cin + ic) * area;
                for (std::size_t p = 0; p < area; ++p) girow[p] += wk * grow[p];
              }
              if (!gw.empty()) {
                gw[oc * cin + ic] += dot(in + ic * area, grow, area);
              }
            }
          }
        }
      });
}

}  // namespace

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  const std::size_t n = shape_numel(shape);
  return Tensor::from(std::move(shape), rng.uniform_vector(n, -bound, bound), true);
}

ConvParams make_conv(std::size_t in_channels, std::size_t out_channels,
                     std::size_t kernel, std::size_t stride,
                     std::size_t dilation, std::size_t groups, Rng& rng) {
  if (groups == 0 || in_channels % groups != 0 || out_channels % groups != 0) {
    throw ShapeError("conv2d: channels " + std::to_string(in_channels) + "->" +
                     std::to_string(out_channels) + " not divisible by groups " +
                     std::to_string(groups));
  }
  const std::size_t per_group = in_channels / groups;
  ConvParams p;
  p.kernel = kernel;
  p.stride = stride;
  p.dilation = dilation;
  p.groups = groups;
  p.weight = init_uniform({out_channels, per_group, kernel, kernel},
                          per_group * kernel * kernel, rng);
  return p;
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, std::size_t dilation,
                               std::size_t pad) {
  return (in + 2 * pad - dilation * (kernel - 1) - 1) / stride + 1;
}

Tensor conv2d(const Tensor& x, const ConvParams& p) {
  require_4d("conv2d", x);
  const Tensor& w = p.weight;
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t groups = p.groups, k = p.kernel, s = p.stride, d = p.dilation;
  const std::size_t pad = p.padding();
  if (groups == 0 || cin % groups != 0) {
    throw ShapeError("conv2d: input channels " + std::to_string(cin) +
                     " not divisible by groups " + std::to_string(groups));
  }
  const std::size_t cin_g = cin / groups;
  if (w.rank() != 4 || w.dim(1) != cin_g || w.dim(2) != k || w.dim(3) != k ||
      w.dim(0) % groups != 0) {
    throw ShapeError("conv2d: weight " + shape_str(w.shape()) +
                     " inconsistent with input " + shape_str(x.shape()));
  }
  const std::size_t span = d * (k - 1) + 1;
  if (span > h + 2 * pad || span > wd + 2 * pad) {
    throw ShapeError("conv2d: kernel extent " + std::to_string(span) +
                     " larger than padded input " + shape_str(x.shape()));
  }
  const std::size_t cout = w.dim(0), cout_g = cout / groups;
  const std::size_t ho = conv_output_extent(h, k, s, d, pad);
  const std::size_t wo = conv_output_extent(wd, k, s, d, pad);

  if (k == 1 && s == 1 && groups == 1) {
    return pointwise_conv(x, w, batch, cin, cout, h * wd,
                          std::vector<double>(batch * cout * ho * wo, 0.0));
  }
  const ConvGeometry g{batch, cin, h, wd, cout, cin_g, cout_g, k, s, d, pad, ho, wo};
  const std::size_t B = batch;

  auto xt = std::make_shared<const std::vector<double>>(to_batch_last(x.values(), B));
  auto wv = w.values();
  std::vector<double> out_t(cout * ho * wo * B, 0.0);
  for_each_tap(g, [&](std::size_t widx, std::size_t in, std::size_t o) {
    const double wk = wv[widx];
    const double* src = xt->data() + in * B;
    double* dst = out_t.data() + o * B;
    for (std::size_t b = 0; b < B; ++b) dst[b] += wk * src[b];
  });
  std::vector<double> out(out_t.size(), 0.0);
  add_batch_first(out_t, B, out);

  return make_result(
      OpCode::Conv2d, {x, w}, {batch, cout, ho, wo}, std::move(out),
      [x, w, g, xt](std::span<const double> grad) {
        const std::size_t B = g.batch;
        auto wv = w.values();
        auto gx = grad_buffer(x);
        auto gw = grad_buffer(w);
        const bool want_x = !gx.empty(), want_w = !gw.empty();
        const std::vector<double> got = to_batch_last(grad, B);
        std::vector<double> gxt(want_x ? x.numel() : 0, 0.0);
        for_each_tap(g, [&](std::size_t widx, std::size_t in, std::size_t o) {
          const double* go = got.data() + o * B;
          if (want_x) {
            const double wk = wv[widx];
            double* dst = gxt.data() + in * B;
            for (std::size_t b = 0; b < B; ++b) dst[b] += wk * go[b];
          }
          if (want_w) {
            gw[widx] += dot(xt->data() + in * B, go, B);
          }
        });
        if (want_x) add_batch_first(gxt, B, gx);
      });
}

Tensor pool2d(const Tensor& x, PoolKind kind, std::size_t kernel,
              std::size_t stride) {
  require_4d("pool2d", x);
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2), w = x.dim(3);
  const std::size_t pad = kernel / 2;
  const std::size_t ho = conv_output_extent(h, kernel, stride, 1, pad);
  const std::size_t wo = conv_output_extent(w, kernel, stride, 1, pad);
  auto xv = x.values();
  std::vector<double> out(planes * ho * wo);
  // For max: flat argmax index; for avg: in-bounds element count.
  auto aux = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        const std::size_t o = (p * ho + oh) * wo + ow;
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0, count = 0;
        double total = 0.0;
        for (std::size_t kh = 0; kh < kernel; ++kh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * stride + kh) -
                          static_cast<std::ptrdiff_t>(pad);
          if (ih < 0 || ih >= H) continue;
          for (std::size_t kw = 0; kw < kernel; ++kw) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * stride + kw) -
                            static_cast<std::ptrdiff_t>(pad);
            if (iw < 0 || iw >= W) continue;
            const std::size_t idx = base + static_cast<std::size_t>(ih) * w +
                                    static_cast<std::size_t>(iw);
            const double v = xv[idx];
            if (v > best) {
              best = v;
              best_idx = idx;
            }
            total += v;
            ++count;
          }
        }
        if (kind == PoolKind::Max) {
          out[o] = best;
          (*aux)[o] = best_idx;
        } else {
          out[o] = total / static_cast<double>(count);
          (*aux)[o] = count;
        }
      }
    }
  }
  return make_result(
      OpCode::Pool2d, {x}, {x.dim(0), x.dim(1), ho, wo}, std::move(out),
      [x, kind, kernel, stride, pad, planes, h, w, ho, wo, aux](std::span<const double> g) {
        auto gx = grad_buffer(x);
        if (kind == PoolKind::Max) {
          for (std::size_t o = 0; o < g.size(); ++o) gx[(*aux)[o]] += g[o];
          return;
        }
        const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t oh = 0; oh < ho; ++oh) {
            for (std::size_t ow = 0; ow < wo; ++ow) {
              const std::size_t o = (p * ho + oh) * wo + ow;
              const double share = g[o] / static_cast<double>((*aux)[o]);
              for (std::size_t kh = 0; kh < kernel; ++kh) {
                const auto ih = static_cast<std::ptrdiff_t>(oh * stride + kh) -
                                static_cast<std::ptrdiff_t>(pad);
                if (ih < 0 || ih >= H) continue;
                for (std::size_t kw = 0; kw < kernel; ++kw) {
                  const auto iw = static_cast<std::ptrdiff_t>(ow * stride + kw) -
                                  static_cast<std::ptrdiff_t>(pad);
                  if (iw < 0 || iw >= W) continue;
                  gx[p * h * w + static_cast<std::size_t>(ih) * w +
                     static_cast<std::size_t>(iw)] += share;
                }
              }
            }
          }
        }
      });
}

Tensor global_pool(const Tensor& x, PoolKind kind) {
  require_4d("global_pool", x);
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t area = x.dim(2) * x.dim(3);
  auto xv = x.values();
  std::vector<double> out(planes);
  auto argmax = std::make_shared<std::vector<std::size_t>>(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* plane = xv.data() + p * area;
    if (kind == PoolKind::Avg) {
      double total = 0.0;
      for (std::size_t i = 0; i < area; ++i) total += plane[i];
      out[p] = total / static_cast<double>(area);
    } else {
      std::size_t best = 0;
      for (std::size_t i = 1; i < area; ++i) {
        if (plane[i] > plane[best]) best = i;
      }
      out[p] = plane[best];
      (*argmax)[p] = p * area + best;
    }
  }
  return make_result(OpCode::GlobalPool, {x}, {x.dim(0), x.dim(1), 1, 1}, std::move(out),
                     [x, kind, planes, area, argmax](std::span<const double> g) {
                       auto gx = grad_buffer(x);
                       for (std::size_t p = 0; p < planes; ++p) {
                         if (kind == PoolKind::Max) {
                           gx[(*argmax)[p]] += g[p];
                         } else {
                           const double share = g[p] / static_cast<double>(area);
                           for (std::size_t i = 0; i < area; ++i) gx[p * area + i] += share;
                         }
                       }
                     });
}

Tensor batch_norm(const Tensor& x) {
  require_4d("batch_norm", x);
  const std::size_t batch = x.dim(0), channels = x.dim(1);
  const std::size_t area = x.dim(2) * x.dim(3);
  if (batch < 2) {
    throw ShapeError("batch_norm: batch statistics need batch >= 2, got " +
                     shape_str(x.shape()));
  }
  const double n = static_cast<double>(batch * area);
  auto xv = x.values();
  std::vector<double> out(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    double mu = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* p = xv.data() + (b * channels + c) * area;
      for (std::size_t i = 0; i < area; ++i) mu += p[i];
    }
    mu /= n;
    double var = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* p = xv.data() + (b * channels + c) * area;
      for (std::size_t i = 0; i < area; ++i) var += (p[i] - mu) * (p[i] - mu);
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + kBatchNormEps);
    (*inv_std)[c] = is;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * channels + c) * area;
      for (std::size_t i = 0; i < area; ++i) out[base + i] = (xv[base + i] - mu) * is;
    }
  }
  auto normalized = std::make_shared<std::vector<double>>(out);
  return make_result(
      OpCode::BatchNorm, {x}, x.shape(), std::move(out),
      [x, batch, channels, area, n, inv_std, normalized](std::span<const double> g) {
        auto gx = grad_buffer(x);
        const auto& xh = *normalized;
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * area;
            for (std::size_t i = 0; i < area; ++i) {
              sum_g += g[base + i];
              sum_gx += g[base + i] * xh[base + i];
            }
          }
          const double is = (*inv_std)[c];
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * area;
            for (std::size_t i = 0; i < area; ++i) {
              gx[base + i] += is / n * (n * g[base + i] - sum_g - xh[base + i] * sum_gx);
            }
          }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1)) {
    throw ShapeError("linear: shape mismatch " + shape_str(x.shape()) + " vs " +
                     shape_str(weight.shape()));
  }
  const std::size_t n = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " vs weight " +
                     shape_str(weight.shape()));
  }
  auto xv = x.values();
  auto wv = weight.values();
  std::vector<double> out(n * out_dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < out_dim; ++o) {
      double acc = bias.defined() ? bias.values()[o] : 0.0;
      for (std::size_t j = 0; j < in; ++j) acc += xv[i * in + j] * wv[o * in + j];
      out[i * out_dim + o] = acc;
    }
  }
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(OpCode::Linear, std::move(inputs), {n, out_dim}, std::move(out),
                     [x, weight, bias, n, in, out_dim](std::span<const double> g) {
                       auto xv = x.values();
                       auto wv = weight.values();
                       auto gx = grad_buffer(x);
                       auto gw = grad_buffer(weight);
                       auto gb = bias.defined() ? grad_buffer(bias) : std::span<double>{};
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t o = 0; o < out_dim; ++o) {
                           const double go = g[i * out_dim + o];
                           if (!gb.empty()) gb[o] += go;
                           for (std::size_t j = 0; j < in; ++j) {
                             if (!gx.empty()) gx[i * in + j] += go * wv[o * in + j];
                             if (!gw.empty()) gw[o * in + j] += go * xv[i * in + j];
                           }
                         }
                       }
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw Error("cross_entropy: label " + std::to_string(label) +
                  " outside [0, " + std::to_string(classes) + ")");
    }
  }
  auto lv = logits.values();
  auto probs = std::make_shared<std::vector<double>>(lv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double* row = lv.data() + i * classes;
    double mx = row[0];
    for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < classes; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < classes; ++j) {
      (*probs)[i * classes + j] = std::exp(row[j] - log_z);
    }
    total += log_z - row[labels[i]];
  }
  std::vector<int> kept(labels.begin(), labels.end());
  const double b = static_cast<double>(batch);
  return make_result(OpCode::CrossEntropy, {logits}, {1}, {total / b},
                     [logits, probs, kept, classes, b](std::span<const double> g) {
                       auto gl = grad_buffer(logits);
                       for (std::size_t i = 0; i < kept.size(); ++i) {
                         for (std::size_t j = 0; j < classes; ++j) {
                           double d = (*probs)[i * classes + j];
                           if (static_cast<int>(j) == kept[i]) d -= 1.0;
                           gl[i * classes + j] += g[0] * d / b;
                         }
                       }
                     });
}

// ---- blocks -------------------------------------------------------------

std::size_t Module::parameter_count() const {
  std::size_t total = 0;
  for (const Tensor& p : parameters()) total += p.numel();
  return total;
}

Tensor Zero::forward(const Tensor& x) {
  require_4d("zero", x);
  const std::size_t ho = conv_output_extent(x.dim(2), 3, stride_, 1, 1);
  const std::size_t wo = conv_output_extent(x.dim(3), 3, stride_, 1, 1);
  return Tensor::zeros({x.dim(0), x.dim(1), ho, wo});
}

ReluConvBn::ReluConvBn(std::size_t in, std::size_t out, std::size_t kernel,
                       std::size_t stride, Rng& rng)
    : conv_(make_conv(in, out, kernel, stride, 1, 1, rng)) {}

Tensor ReluConvBn::forward(const Tensor& x) {
  return batch_norm(conv2d(relu(x), conv_));
}

SepConv::SepConv(std::size_t channels, std::size_t kernel, std::size_t stride, Rng& rng)
    : dw1_(make_conv(channels, channels, kernel, stride, 1, channels, rng)),
      pw1_(make_conv(channels, channels, 1, 1, 1, 1, rng)),
      dw2_(make_conv(channels, channels, kernel, 1, 1, channels, rng)),
      pw2_(make_conv(channels, channels, 1, 1, 1, 1, rng)) {}

Tensor SepConv::forward(const Tensor& x) {
  Tensor y = batch_norm(conv2d(conv2d(relu(x), dw1_), pw1_));
  return batch_norm(conv2d(conv2d(relu(y), dw2_), pw2_));
}

std::vector<Tensor> SepConv::parameters() const {
  return {dw1_.weight, pw1_.weight, dw2_.weight, pw2_.weight};
}

DilConv::DilConv(std::size_t channels, std::size_t kernel, std::size_t stride, Rng& rng)
    : dw_(make_conv(channels, channels, kernel, stride, 2, channels, rng)),
      pw_(make_conv(channels, channels, 1, 1, 1, 1, rng)) {}

Tensor DilConv::forward(const Tensor& x) {
  return batch_norm(conv2d(conv2d(relu(x), dw_), pw_));
}

std::vector<Tensor> DilConv::parameters() const { return {dw_.weight, pw_.weight}; }

FactorizedReduce::FactorizedReduce(std::size_t in, std::size_t out, Rng& rng)
    : first_(make_conv(in, (out + 1) / 2, 1, 2, 1, 1, rng)) {
  if (out / 2 > 0) second_ = make_conv(in, out / 2, 1, 2, 1, 1, rng);
}

Tensor FactorizedReduce::forward(const Tensor& x) {
  require_4d("factorized_reduce", x);
  if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw ShapeError("factorized_reduce: spatial extent must be even, got " +
                     shape_str(x.shape()));
  }
  Tensor r = relu(x);
  Tensor a = conv2d(r, first_);
  if (!second_) return batch_norm(a);
  Tensor b = conv2d(crop_top_left(r), *second_);
  return batch_norm(concat_channels({a, b}));
}

std::vector<Tensor> FactorizedReduce::parameters() const {
  std::vector<Tensor> out{first_.weight};
  if (second_) out.push_back(second_->weight);
  return out;
}

Linear::Linear(std::size_t in, std::size_t out, bool bias, Rng& rng)
    : weight_(init_uniform({out, in}, in, rng)) {
  if (bias) bias_ = init_uniform({out}, in, rng);
}

std::vector<Tensor> Linear::parameters() const {
  std::vector<Tensor> out{weight_};
  if (bias_.defined()) out.push_back(bias_);
  return out;
}

}  // namespace adarts
