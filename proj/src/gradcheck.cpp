#include "adarts/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "adarts/attention.hpp"
#include "adarts/nn.hpp"
#include "adarts/partial.hpp"
#include "adarts/random.hpp"
#include "adarts/supernet.hpp"

namespace adarts {

double GradCheckReport::max_error() const {
  double worst = 0.0;
  for (const auto& c : cases) worst = std::max(worst, c.rel_error);
  return worst;
}

std::size_t GradCheckReport::redraws() const {
  std::size_t n = 0;
  for (const auto& c : cases) n += c.redraws;
  return n;
}

std::size_t GradCheckReport::failures() const {
  return static_cast<std::size_t>(std::count_if(cases.begin(), cases.end(), [&](const auto& c) {
    return !(c.rel_error <= tolerance);
  }));
}

namespace {
// Truncation error of both stencils is O(h²); far below this on smooth points.
constexpr double kSmoothnessTolerance = 1e-6;
}  // namespace

GradCheckCase check_gradients(const std::string& name, std::uint64_t seed,
                              const std::vector<Tensor>& targets,
                              const std::function<Tensor()>& forward, double h) {
  Tensor probe;
  {
    NoGradGuard no_grad;
    probe = forward();
  }
  Rng rng(seed ^ 0x5bd1e995ULL);
  const Tensor r = Tensor::from(probe.shape(), rng.uniform_vector(probe.numel(), -1.0, 1.0));
  auto loss_of = [&]() { return sum(mul(forward(), r)); };

  for (Tensor t : targets) {
    t.set_requires_grad(true);
    t.clear_grad();
  }
  backward(loss_of());

  GradCheckCase result{name, seed, 0, 0.0, true, 0};
  const auto f = [&](const Tensor&) { return loss_of().item(); };
  for (const Tensor& t : targets) {
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    const std::vector<double> numeric = finite_difference_gradient(f, t, h);
    const std::vector<double> half = finite_difference_gradient(f, t, h / 2);
    result.rel_error = std::max(result.rel_error, relative_error(analytic, numeric));
    if (relative_error(numeric, half) > kSmoothnessTolerance) result.smooth = false;
    result.elements += t.numel();
  }
  for (Tensor t : targets) t.clear_grad();
  return result;
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = shape_numel(shape);
  return Tensor::from(std::move(shape), rng.uniform_vector(n, lo, hi), true);
}

std::vector<int> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<int> labels(n);
  for (int& l : labels) l = static_cast<int>(rng.index(classes));
  return labels;
}

std::vector<Tensor> with_parameters(std::vector<Tensor> inputs, const Module& m) {
  for (const Tensor& p : m.parameters()) inputs.push_back(p);
  return inputs;
}

using Family = std::function<GradCheckCase(const std::string&, std::uint64_t, double)>;

GradCheckCase conv_case(const std::string& name, std::uint64_t seed, double h, std::size_t cin,
                        std::size_t cout, std::size_t k, std::size_t stride, std::size_t dilation,
                        std::size_t groups) {
  Rng rng(seed);
  Tensor x = random_tensor({2, cin, 6, 6}, rng);
  ConvParams p = make_conv(cin, cout, k, stride, dilation, groups, rng);
  return check_gradients(name, seed, {x, p.weight}, [&] { return conv2d(x, p); }, h);
}

GradCheckCase module_case(const std::string& name, std::uint64_t seed, double h, Module& m,
                          Tensor x) {
  return check_gradients(name, seed, with_parameters({x}, m), [&] { return m.forward(x); }, h);
}

// Edge-sized candidate set at `channels` width with a learnable α row.
struct EdgeFixture {
  Rng rng;
  Tensor x;
  Tensor alpha;
  std::vector<ModulePtr> ops;

  EdgeFixture(std::uint64_t seed, std::size_t channels, std::size_t op_width,
              std::size_t stride)
      : rng(seed) {
    x = random_tensor({2, channels, 6, 6}, rng);
    alpha = random_tensor({kNumOps}, rng);
    ops = make_candidates(op_width, stride, rng);
  }
  std::vector<Tensor> targets() const {
    std::vector<Tensor> t{x, alpha};
    for (const auto& op : ops) {
      for (const Tensor& p : op->parameters()) t.push_back(p);
    }
    return t;
  }
};

std::map<std::string, Family> families() {
  std::map<std::string, Family> f;
  const auto prim = [](Primitive kind, auto make_inputs) {
    return [kind, make_inputs](const std::string& name, std::uint64_t seed, double h) {
      Rng rng(seed);
      std::vector<Tensor> inputs = make_inputs(rng);
      std::vector<Tensor> targets;
      for (const Tensor& t : inputs) {
        if (t.requires_grad()) targets.push_back(t);
      }
      return check_gradients(name, seed, targets,
                             [&] { return primitive_forward(kind, inputs); }, h);
    };
  };
  f["prim-add"] = prim(Primitive::Add, [](Rng& r) {
    return std::vector{random_tensor({3, 4}, r), random_tensor({4}, r)};
  });
  f["prim-sub"] = prim(Primitive::Sub, [](Rng& r) {
    return std::vector{random_tensor({2, 5}, r), random_tensor({2, 5}, r)};
  });
  f["prim-mul"] = prim(Primitive::Mul, [](Rng& r) {
    return std::vector{random_tensor({2, 3, 2}, r), random_tensor({2, 3, 2}, r)};
  });
  f["prim-matmul"] = prim(Primitive::MatMul, [](Rng& r) {
    return std::vector{random_tensor({3, 4}, r), random_tensor({4, 2}, r)};
  });
  f["prim-relu"] = prim(Primitive::Relu, [](Rng& r) { return std::vector{random_tensor({12}, r)}; });
  f["prim-sigmoid"] = prim(Primitive::Sigmoid, [](Rng& r) { return std::vector{random_tensor({3, 3}, r)}; });
  f["prim-softmax"] = prim(Primitive::SoftmaxLastDim, [](Rng& r) {
    return std::vector{random_tensor({3, kNumOps}, r)};
  });
  f["prim-mean"] = prim(Primitive::Mean, [](Rng& r) { return std::vector{random_tensor({2, 3, 2}, r)}; });
  f["prim-sum"] = prim(Primitive::Sum, [](Rng& r) { return std::vector{random_tensor({7}, r)}; });
  f["prim-concat"] = prim(Primitive::ConcatChannel, [](Rng& r) {
    return std::vector{random_tensor({2, 2, 3, 3}, r), random_tensor({2, 3, 3, 3}, r)};
  });
  f["prim-slice"] = prim(Primitive::SliceChannel, [](Rng& r) {
    return std::vector{random_tensor({2, 4, 2, 2}, r), Tensor::from({3}, {3.0, 0.0, 3.0})};
  });
  f["prim-scale"] = prim(Primitive::ScalePerChannel, [](Rng& r) {
    return std::vector{random_tensor({2, 3, 2, 2}, r), random_tensor({2, 3}, r)};
  });

  f["conv-dense"] = [](const std::string& n, std::uint64_t s, double h) {
    return conv_case(n, s, h, 3, 4, 3, 1, 1, 1);
  };
  f["conv-strided"] = [](const std::string& n, std::uint64_t s, double h) {
    return conv_case(n, s, h, 2, 3, 3, 2, 1, 1);
  };
  f["conv-depthwise-dilated"] = [](const std::string& n, std::uint64_t s, double h) {
    return conv_case(n, s, h, 4, 4, 3, 1, 2, 4);
  };
  f["conv-depthwise-5x5-strided"] = [](const std::string& n, std::uint64_t s, double h) {
    return conv_case(n, s, h, 3, 3, 5, 2, 1, 3);
  };
  f["conv-pointwise"] = [](const std::string& n, std::uint64_t s, double h) {
    return conv_case(n, s, h, 4, 5, 1, 1, 1, 1);
  };
  f["sepconv-3x3"] = [](const std::string& n, std::uint64_t s, double h) {
    Rng rng(s);
    SepConv m(4, 3, 1, rng);
    return module_case(n, s, h, m, random_tensor({2, 4, 6, 6}, rng));
  };
  f["sepconv-5x5-strided"] = [](const std::string& n, std::uint64_t s, double h) {
    Rng rng(s);
    SepConv m(3, 5, 2, rng);
    return module_case(n, s, h, m, random_tensor({2, 3, 6, 6}, rng));
  };
  f["dilconv-3x3"] = [](const std::string& n, std::uint64_t s, double h) {
    Rng rng(s);
    DilConv m(4, 3, 1, rng);
    return module_case(n, s, h, m, random_tensor({2, 4, 6, 6}, rng));
  };
  f["dilconv-5x5-strided"] = [](const std::string& n, std::uint64_t s, double h) {
    Rng rng(s);
    DilConv m(3, 5, 2, rng);
    return module_case(n, s, h, m, random_tensor({2, 3, 6, 6}, rng));
  };
  f["factorized-reduce"] = [](const std::string& n, std::uint64_t s, double h) {
    Rng rng(s);
    FactorizedReduce m(3, 5, rng);
    return module_case(n, s, h, m, random_tensor({2, 3, 6, 6}, rng));
  };
  f["relu-conv-bn"] = [](const std::string& n, std::uint64_t s, double h) {
    Rng rng(s);
    ReluConvBn m(5, 3, 1, 1, rng);
    return module_case(n, s, h, m, random_tensor({2, 5, 4, 4}, rng));
  };
  f["maxpool"] = [](const std::string& n, std::uint64_t s, double h) {
    Rng rng(s);
    Tensor x = random_tensor({2, 3, 5, 5}, rng);
    const std::size_t stride = 1 + s % 2;
    return check_gradients(n, s, {x}, [&] { return pool2d(x, PoolKind::Max, 3, stride); }, h);
  };
  f["avgpool"] = [](const std::string& n, std::uint64_t s, double h) {
    Rng rng(s);
    Tensor x = random_tensor({2, 3, 6, 6}, rng);
    const std::size_t stride = 1 + s % 2;
    return check_gradients(n, s, {x}, [&] { return pool2d(x, PoolKind::Avg, 3, stride); }, h);
  };
  f["global-pool"] = [](const std::string& n, std::uint64_t s, double h) {
    Rng rng(s);
    Tensor x = random_tensor({2, 4, 3, 3}, rng);
    return check_gradients(n, s, {x}, [&] {
      return add(global_pool(x, PoolKind::Avg), global_pool(x, PoolKind::Max));
    }, h);
  };
  f["batch-norm"] = [](const std::string& n, std::uint64_t s, double h) {
    Rng rng(s);
    Tensor x = random_tensor({4, 3, 5, 5}, rng);
    return check_gradients(n, s, {x}, [&] { return batch_norm(x); }, h);
  };
  f["linear"] = [](const std::string& n, std::uint64_t s, double h) {
    Rng rng(s);
    Tensor x = random_tensor({3, 5}, rng);
    Tensor w = random_tensor({4, 5}, rng);
    Tensor b = random_tensor({4}, rng);
    return check_gradients(n, s, {x, w, b}, [&] { return linear(x, w, b); }, h);
  };
  f["cross-entropy"] = [](const std::string& n, std::uint64_t s, double h) {
    Rng rng(s);
    Tensor logits = random_tensor({5, 6}, rng, -3.0, 3.0);
    const std::vector<int> labels = random_labels(5, 6, rng);
    return check_gradients(n, s, {logits}, [&] { return cross_entropy(logits, labels); }, h);
  };
  f["attention"] = [](const std::string& n, std::uint64_t s, double h) {
    Rng rng(s);
    Tensor x = random_tensor({2, 8, 4, 4}, rng);
    AttentionUnit unit = AttentionUnit::create(8, 4, rng);
    return check_gradients(n, s, {x, unit.mlp.w1, unit.mlp.w2}, [&] {
      return apply_attention(x, channel_attention_weights(x, unit));
    }, h);
  };
  f["mixed-op-full"] = [](const std::string& n, std::uint64_t s, double h) {
    EdgeFixture e(s, 3, 3, 1 + s % 2);
    return check_gradients(n, s, e.targets(), [&] {
      return mixed_op_full(e.x, softmax_lastdim(e.alpha), e.ops);
    }, h);
  };
  f["partial-mixed-op"] = [](const std::string& n, std::uint64_t s, double h) {
    const std::size_t stride = 1 + s % 2;
    EdgeFixture e(s, 8, 2, stride);
    const ChannelMask mask = random_channels(8, 4, e.rng);
    return check_gradients(n, s, e.targets(), [&] {
      return partial_mixed_op(e.x, mask, softmax_lastdim(e.alpha), e.ops, stride);
    }, h);
  };

  // Whole search network: cross-entropy w.r.t. both α matrices and a spread
  // of ω tensors (stem, one attention MLP, classifier).
  const auto supernet_case = [](bool arch) {
    return [arch](const std::string& n, std::uint64_t s, double h) {
      SupernetSpec spec;
      spec.depth = 3;
      spec.channels = 4;
      spec.n_classes = 3;
      spec.proportion = 2;
      spec.alpha_noise = 0.5;
      spec.seed = s;
      Supernet net(spec);
      Rng rng(s + 17);
      Tensor images = Tensor::from({2, 3, 8, 8}, rng.uniform_vector(2 * 3 * 64, -1.0, 1.0));
      const std::vector<int> labels = random_labels(2, 3, rng);
      std::vector<Tensor> targets;
      if (arch) {
        targets = net.arch_parameters();
      } else {
        const std::vector<Tensor> w = net.weights();
        targets = {w.front(), w[w.size() - 2], w.back()};
        for (const Tensor& p : w) {
          if (p.rank() == 2 && p.numel() <= 16) {
            targets.push_back(p);
            break;
          }
        }
      }
      return check_gradients(n, s, targets, [&] {
        return cross_entropy(net.forward(images), labels);
      }, h);
    };
  };
  f["supernet-loss-alpha"] = supernet_case(true);
  f["supernet-loss-omega"] = supernet_case(false);
  return f;
}

}  // namespace

std::vector<std::string> gradcheck_families() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : families()) names.push_back(name);
  return names;
}

GradCheckReport run_gradcheck(std::uint64_t seed, std::size_t cases_per_family, double h,
                              double tolerance) {
  GradCheckReport report;
  report.tolerance = tolerance;
  report.step = h;
  std::uint64_t counter = 0;
  for (const auto& [name, family] : families()) {
    for (std::size_t i = 0; i < cases_per_family; ++i) {
      const std::uint64_t case_seed = seed * 1000003ULL + (++counter) * 64;
      GradCheckCase c = family(name, case_seed, h);
      for (std::size_t r = 1; !c.smooth && r <= kMaxRedraws; ++r) {
        c = family(name, case_seed + r, h);
        c.redraws = r;
      }
      report.cases.push_back(c);
    }
  }
  return report;
}

}  // namespace adarts
