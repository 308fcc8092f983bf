#include "doctest.h"

#include <cmath>
#include <cstring>
#include <map>

#include "adarts/nn.hpp"
#include "adarts/tensor.hpp"
#include "support.hpp"

using namespace adarts;
using testing::random_tensor;

TEST_CASE("tensor construction enforces length == product(shape)") {
  CHECK_THROWS_AS(Tensor::from({2, 3}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
  Tensor t = Tensor::full({2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t.dim(1) == 3);
  CHECK_THROWS_AS(t.dim(2), ShapeError);
  t.zero_grad();
  CHECK(t.grad().size() == t.numel());
}

TEST_CASE("sigmoid, uniform softmax and identity matmul") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(0.5).epsilon(1e-15));

  Tensor sm = softmax_lastdim(Tensor::full({8}, 0.3));
  for (double v : sm.values()) CHECK(v == doctest::Approx(0.125).epsilon(1e-15));

  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor id = Tensor::from({2, 2}, {1, 0, 0, 1});
  const auto prod = matmul(a, id);
  CHECK(testing::to_vec(prod.values()) == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("shape errors name the kind and both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4});
  try {
    add(a, b);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("(2,3)") != std::string::npos);
    CHECK(msg.find("(4)") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
  CHECK_THROWS_AS(concat_channels({Tensor::zeros({1, 2, 3, 3}), Tensor::zeros({1, 2, 4, 3})}),
                  ShapeError);
  CHECK_THROWS_AS(scale_per_channel(Tensor::zeros({1, 3, 2, 2}), Tensor::zeros({2})), ShapeError);
  CHECK_THROWS_AS(primitive_forward(Primitive::Add, {}), Error);
  CHECK_THROWS_AS(concat_channels({}), Error);
}

TEST_CASE("non-finite outputs are rejected") {
  Tensor big = Tensor::full({2}, 1e200);
  CHECK_THROWS_AS(mul(big, big), NonFiniteError);
}

TEST_CASE("backward basics") {
  SUBCASE("sum gives ones") {
    Tensor x = Tensor::from({2, 3}, {1, -2, 3, 0.5, 7, -1}, true);
    backward(sum(x));
    for (double g : x.grad()) CHECK(g == 1.0);
  }
  SUBCASE("sum of squares at 3 gives 6") {
    Tensor x = Tensor::from({1}, {3.0}, true);
    backward(sum(mul(x, x)));
    CHECK(x.grad()[0] == 6.0);
  }
  SUBCASE("fan-out accumulates") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    backward(sum(add(mul(x, x), x)));
    CHECK(testing::to_vec(x.grad()) == std::vector<double>{3.0, 5.0});
  }
  SUBCASE("returned map mirrors the leaf buffers") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    GradientMap g = backward(sum(mul(x, x)));
    REQUIRE(g.count(x.id()) == 1);
    CHECK(g[x.id()] == testing::to_vec(x.grad()));
  }
  SUBCASE("errors") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(backward(mul(x, x)), ShapeError);
    CHECK_THROWS_AS(backward(Tensor::scalar(1.0, true)), Error);
    NoGradGuard no_grad;
    CHECK_THROWS_AS(backward(sum(x)), Error);
  }
}

TEST_CASE("cross-entropy composite gradient matches the library finite differences") {
  Tensor logits = Tensor::from({1, 2}, {0.3, -1.2}, true);
  const std::vector<int> labels = {1};
  backward(cross_entropy(logits, labels));
  const auto fd = finite_difference_gradient(
      [&](const Tensor& z) { return cross_entropy(z, labels).item(); }, logits, 1e-5);
  CHECK(relative_error(logits.grad(), fd) <= 1e-6);
  // d/dz of −log softmax: softmax − onehot.
  const double p0 = std::exp(0.3) / (std::exp(0.3) + std::exp(-1.2));
  CHECK(logits.grad()[0] == doctest::Approx(p0).epsilon(1e-12));
  CHECK(logits.grad()[1] == doctest::Approx(-p0).epsilon(1e-12));
}

TEST_CASE("finite_difference_gradient contract") {
  Rng rng(3);
  Tensor x = random_tensor({3, 4}, rng, false);
  const auto ones = finite_difference_gradient([](const Tensor& t) { return sum(t).item(); }, x, 1e-5);
  for (double g : ones) CHECK(std::abs(g - 1.0) <= 1e-9);

  Tensor y = Tensor::from({2}, {1.0, 2.0});
  const auto sq = finite_difference_gradient([](const Tensor& t) { return sum(mul(t, t)).item(); }, y,
                                             1e-5);
  CHECK(std::abs(sq[0] - 2.0) <= 1e-7);
  CHECK(std::abs(sq[1] - 4.0) <= 1e-7);
  CHECK(testing::to_vec(y.values()) == std::vector<double>{1.0, 2.0});

  CHECK_THROWS_AS(finite_difference_gradient([](const Tensor&) { return 0.0; }, y, 0.0), Error);
  CHECK_THROWS_AS(finite_difference_gradient([](const Tensor&) { return NAN; }, y, 1e-5),
                  NonFiniteError);
}

TEST_CASE("relative_error is normwise") {
  CHECK(relative_error(std::vector<double>{0, 0}, std::vector<double>{0, 0}) == 0.0);
  CHECK(relative_error(std::vector<double>{3, 4}, std::vector<double>{3, 4}) == 0.0);
  CHECK(relative_error(std::vector<double>{1, 0}, std::vector<double>{0, 0}) == 1.0);
}

TEST_CASE("graph records inputs before outputs and backward runs in reverse") {
  std::vector<int> visited;
  auto tagged = [&visited](const Tensor& x, int tag) {
    return make_result(OpCode::Add, {x}, x.shape(), testing::to_vec(x.values()),
                       [x, tag, &visited](std::span<const double> g) {
                         visited.push_back(tag);
                         auto gx = grad_buffer(x);
                         for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                       });
  };
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  Tensor a = tagged(x, 1);
  Tensor b = tagged(a, 2);
  Tensor c = tagged(x, 3);
  Tensor d = tagged(add(b, c), 4);
  Tensor loss = sum(d);

  const auto nodes = ComputeGraph::trace(loss).nodes();
  std::map<std::uint64_t, std::size_t> produced_at;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::uint64_t in : nodes[i].input_ids) {
      if (in != x.id()) {
        REQUIRE(produced_at.count(in) == 1);
        CHECK(produced_at[in] < i);
      }
    }
    produced_at[nodes[i].output_id] = i;
  }
  CHECK(nodes.size() == 6);
  CHECK(nodes.back().kind == OpCode::Sum);

  backward(loss);
  CHECK(visited == std::vector<int>{4, 3, 2, 1});
  CHECK(testing::to_vec(x.grad()) == std::vector<double>{2.0, 2.0});
}

TEST_CASE("no-grad mode records nothing") {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  NoGradGuard guard;
  Tensor y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
  CHECK(ComputeGraph::trace(y).empty());
}

TEST_CASE("allocation counter sees tensors created in scope only") {
  AllocationCounter counter;
  Tensor outside = Tensor::zeros({10});
  {
    CountingScope scope(counter);
    Tensor a = Tensor::zeros({3, 4});
    Tensor b = add(a, a);
  }
  Tensor after = Tensor::zeros({10});
  CHECK(counter.count() == 24);
}

TEST_CASE("slice, concat and scale primitives") {
  Tensor x = Tensor::from({1, 3, 1, 2}, {1, 2, 3, 4, 5, 6});
  const std::vector<std::size_t> idx = {2, 0};
  CHECK(testing::to_vec(slice_channels(x, idx).values()) == std::vector<double>{5, 6, 1, 2});
  CHECK(testing::to_vec(slice_channels(x, 1, 3).values()) == std::vector<double>{3, 4, 5, 6});
  Tensor via_dispatch = primitive_forward(Primitive::SliceChannel,
                                          std::vector<Tensor>{x, Tensor::from({2}, {2.0, 0.0})});
  CHECK(testing::to_vec(via_dispatch.values()) == std::vector<double>{5, 6, 1, 2});
  Tensor cat = concat_channels({slice_channels(x, 0, 1), slice_channels(x, 1, 3)});
  CHECK(testing::to_vec(cat.values()) == testing::to_vec(x.values()));
  Tensor scaled = scale_per_channel(x, Tensor::from({3}, {1.0, 0.0, -1.0}));
  CHECK(testing::to_vec(scaled.values()) == std::vector<double>{1, 2, 0, 0, -5, -6});
}

// Random inputs in [−1,1] for each primitive kind; the loss is Σ r·out.
TEST_CASE("every primitive kind matches central differences over 100 seeded trials") {
  struct Kind {
    Primitive kind;
    std::function<std::vector<Tensor>(Rng&)> inputs;
  };
  const std::vector<Kind> kinds = {
      {Primitive::Add, [](Rng& r) { return std::vector{random_tensor({2, 3}, r), random_tensor({2, 3}, r)}; }},
      {Primitive::Sub, [](Rng& r) { return std::vector{random_tensor({2, 3}, r), random_tensor({3}, r)}; }},
      {Primitive::Mul, [](Rng& r) { return std::vector{random_tensor({4}, r), random_tensor({1}, r)}; }},
      {Primitive::MatMul, [](Rng& r) { return std::vector{random_tensor({2, 3}, r), random_tensor({3, 4}, r)}; }},
      {Primitive::Relu, [](Rng& r) { return std::vector{random_tensor({6}, r)}; }},
      {Primitive::Sigmoid, [](Rng& r) { return std::vector{random_tensor({6}, r)}; }},
      {Primitive::SoftmaxLastDim, [](Rng& r) { return std::vector{random_tensor({2, 5}, r)}; }},
      {Primitive::Mean, [](Rng& r) { return std::vector{random_tensor({2, 3}, r)}; }},
      {Primitive::Sum, [](Rng& r) { return std::vector{random_tensor({5}, r)}; }},
      {Primitive::ConcatChannel,
       [](Rng& r) { return std::vector{random_tensor({2, 1, 2, 2}, r), random_tensor({2, 2, 2, 2}, r)}; }},
      {Primitive::SliceChannel,
       [](Rng& r) { return std::vector{random_tensor({2, 3, 2, 2}, r), Tensor::from({3}, {2.0, 2.0, 0.0})}; }},
      {Primitive::ScalePerChannel,
       [](Rng& r) { return std::vector{random_tensor({2, 3, 2, 2}, r), random_tensor({3}, r)}; }},
  };
  for (const Kind& k : kinds) {
    double worst = 0.0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
      Rng rng(1000 + trial);
      std::vector<Tensor> inputs = k.inputs(rng);
      std::vector<Tensor> targets;
      for (const Tensor& t : inputs) {
        if (t.requires_grad()) targets.push_back(t);
      }
      worst = std::max(worst, testing::gradient_error(
                                  [&] { return primitive_forward(k.kind, inputs); }, targets, trial));
    }
    INFO(primitive_name(k.kind));
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    Tensor z = random_tensor({4, 8}, rng, false, -5.0, 5.0);
    const double c = rng.uniform(-50.0, 50.0);
    Tensor shifted = add(z, Tensor::scalar(c));
    const Tensor pz = softmax_lastdim(z);
    const Tensor pq = softmax_lastdim(shifted);
    const auto p = pz.values();
    const auto q = pq.values();
    for (std::size_t row = 0; row < 4; ++row) {
      double total = 0.0;
      for (std::size_t j = 0; j < 8; ++j) total += p[row * 8 + j];
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
    CHECK(testing::max_abs_diff(p, q) <= 1e-12);
  }
}

TEST_CASE("backward is bitwise deterministic") {
  auto run = [] {
    Rng rng(11);
    Tensor x = random_tensor({2, 3, 5, 5}, rng);
    ConvParams p = make_conv(3, 4, 3, 1, 1, 1, rng);
    Tensor y = batch_norm(relu(conv2d(x, p)));
    Tensor loss = sum(mul(y, sigmoid(y)));
    backward(loss);
    std::vector<double> g = testing::to_vec(x.grad());
    const auto gw = p.weight.grad();
    g.insert(g.end(), gw.begin(), gw.end());
    return g;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}
