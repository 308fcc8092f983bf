#include "doctest.h"

#include <cmath>

#include "adarts/data.hpp"
#include "adarts/optim.hpp"
#include "adarts/supernet.hpp"
#include "support.hpp"

using namespace adarts;
using testing::random_tensor;

namespace {

Tensor one_hot_matrix(OpKind kind) {
  std::vector<double> w(kEdgesPerCell * kNumOps, 0.0);
  for (std::size_t e = 0; e < kEdgesPerCell; ++e) w[e * kNumOps + static_cast<std::size_t>(kind)] = 1.0;
  return Tensor::from({kEdgesPerCell, kNumOps}, w);
}

Tensor weights_row(std::initializer_list<std::pair<OpKind, double>> entries) {
  std::vector<double> w(kNumOps, 0.0);
  for (const auto& [kind, value] : entries) w[static_cast<std::size_t>(kind)] = value;
  return Tensor::from({kNumOps}, w);
}

}  // namespace

TEST_CASE("operation names round-trip in column order") {
  const char* names[] = {"none",        "maxpool_3x3", "avgpool_3x3", "skip_connect",
                         "sepconv_3x3", "dilconv_3x3", "sepconv_5x5", "dilconv_5x5"};
  for (std::size_t i = 0; i < kNumOps; ++i) {
    CHECK(op_name(kAllOps[i]) == names[i]);
    CHECK(op_from_name(names[i]) == kAllOps[i]);
  }
  CHECK_THROWS_AS(op_from_name("conv_7x7"), Error);
  for (SearchMode m : {SearchMode::Attention, SearchMode::Random, SearchMode::Full})
    CHECK(mode_from_name(mode_name(m)) == m);
  CHECK_THROWS_AS(mode_from_name("greedy"), Error);
}

TEST_CASE("arch softmax examples") {
  const Tensor uniform = arch_softmax(Tensor::zeros({kNumOps}));
  for (double v : uniform.values()) CHECK(v == doctest::Approx(0.125).epsilon(1e-15));

  std::vector<double> row(kNumOps, 0.0);
  row[0] = std::log(7.0);
  const Tensor p = arch_softmax(Tensor::from({kNumOps}, row));
  CHECK(p.values()[0] == doctest::Approx(0.5).epsilon(1e-14));
  for (std::size_t i = 1; i < kNumOps; ++i) CHECK(p.values()[i] == doctest::Approx(1.0 / 14.0).epsilon(1e-14));

  Rng rng(1);
  Tensor z = random_tensor({kEdgesPerCell, kNumOps}, rng, false, -3.0, 3.0);
  const Tensor a = arch_softmax(z);
  const Tensor b = arch_softmax(add(z, Tensor::scalar(12.5)));
  CHECK(testing::max_abs_diff(a.values(), b.values()) <= 1e-14);
  for (std::size_t e = 0; e < kEdgesPerCell; ++e) {
    double total = 0.0;
    for (std::size_t k = 0; k < kNumOps; ++k) {
      CHECK(a.values()[e * kNumOps + k] > 0.0);
      total += a.values()[e * kNumOps + k];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("mixed op with one-hot and two-term weights") {
  Rng rng(2);
  Tensor x = random_tensor({2, 4, 6, 6}, rng, false);
  const auto ops = make_candidates(4, 1, rng);
  const Tensor skip = mixed_op_full(x, weights_row({{OpKind::SkipConnect, 1.0}}), ops);
  CHECK(testing::max_abs_diff(skip.values(), x.values()) == 0.0);
  const Tensor none = mixed_op_full(x, weights_row({{OpKind::None, 1.0}}), ops);
  for (double v : none.values()) CHECK(v == 0.0);
  const Tensor half =
      mixed_op_full(x, weights_row({{OpKind::SkipConnect, 0.5}, {OpKind::None, 0.5}}), ops);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(half.values()[i] == 0.5 * x.values()[i]);
}

TEST_CASE("node aggregation sums incoming edges") {
  Rng rng(3);
  Tensor x = random_tensor({2, 3, 4, 4}, rng, false);
  CHECK(testing::max_abs_diff(node_aggregate({x}).values(), x.values()) == 0.0);
  const Tensor cancel = node_aggregate({x, mul(x, Tensor::scalar(-1.0))});
  for (double v : cancel.values()) CHECK(v == 0.0);
  Tensor y = random_tensor({2, 3, 4, 4}, rng, false), z = random_tensor({2, 3, 4, 4}, rng, false);
  const Tensor s = node_aggregate({x, y, z});
  for (std::size_t i = 0; i < x.numel(); ++i)
    CHECK(s.values()[i] == doctest::Approx(x.values()[i] + y.values()[i] + z.values()[i]).epsilon(1e-15));
  CHECK_THROWS_AS(node_aggregate({}), Error);
  CHECK_THROWS_AS(node_aggregate({x, random_tensor({2, 3, 5, 5}, rng, false)}), ShapeError);
}

TEST_CASE("cell topology has 14 edges ordered by target then source") {
  const auto edges = CellSpec::edges();
  REQUIRE(edges.size() == kEdgesPerCell);
  std::size_t i = 0;
  for (std::size_t to = 2; to < 6; ++to) {
    CHECK(CellSpec::first_edge(to) == i);
    for (std::size_t from = 0; from < to; ++from, ++i) {
      CHECK(edges[i].from == from);
      CHECK(edges[i].to == to);
    }
  }
  CHECK_THROWS_AS(CellSpec::first_edge(6), Error);
  CHECK_THROWS_AS(CellSpec::first_edge(1), Error);
}

TEST_CASE("reduction positions follow the one-third rule") {
  SupernetSpec spec;
  spec.depth = 8;
  CHECK(spec.reduction_positions() == std::vector<std::size_t>{2, 5});
  spec.depth = 20;
  CHECK(spec.reduction_positions() == std::vector<std::size_t>{6, 13});
  spec.depth = 2;
  CHECK(spec.reduction_positions() == std::vector<std::size_t>{0, 1});

  spec.depth = 8;
  spec.channels = 2;
  spec.n_classes = 3;
  auto net = build_network(spec);
  std::size_t reductions = 0;
  for (std::size_t c = 0; c < 8; ++c) {
    const bool red = net->cells()[c]->kind() == CellKind::Reduction;
    CHECK(red == (c == 2 || c == 5));
    reductions += red;
  }
  CHECK(reductions == 2);
  for (CellKind kind : {CellKind::Normal, CellKind::Reduction})
    CHECK(net->arch().of(kind).shape() == Shape{kEdgesPerCell, kNumOps});
  CHECK(net->arch_parameters().size() == 2);

  spec.depth = 0;
  CHECK_THROWS_AS(build_network(spec), Error);
}

TEST_CASE("small supernet forward gives finite logits of shape (B, classes)") {
  for (SearchMode mode : {SearchMode::Attention, SearchMode::Random, SearchMode::Full}) {
    SupernetSpec spec;
    spec.depth = 2;
    spec.channels = 4;
    spec.n_classes = 5;
    spec.mode = mode;
    spec.seed = 11;
    auto net = build_network(spec);
    Rng rng(4);
    const Tensor logits = net->forward(random_tensor({2, 3, 16, 16}, rng, false));
    CHECK(logits.shape() == Shape{2, 5});
    for (double v : logits.values()) CHECK(std::isfinite(v));
    CHECK_THROWS_AS(net->forward(random_tensor({2, 1, 16, 16}, rng, false)), ShapeError);
  }
}

TEST_CASE("forward is deterministic for fixed parameters and seed") {
  SupernetSpec spec;
  spec.depth = 3;
  spec.channels = 4;
  spec.n_classes = 3;
  spec.mode = SearchMode::Random;
  Rng rng(5);
  const Tensor x = random_tensor({2, 3, 8, 8}, rng, false);
  const Tensor a = build_network(spec)->forward(x);
  const Tensor b = build_network(spec)->forward(x);
  CHECK(testing::max_abs_diff(a.values(), b.values()) == 0.0);
}

TEST_CASE("normal cells keep shape, reduction cells halve extent and double width") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    const std::size_t C = 4;
    Tensor s0 = random_tensor({2, C, 8, 8}, rng, false);
    Tensor s1 = random_tensor({2, C, 8, 8}, rng, false);
    const Tensor w = arch_softmax(random_tensor({kEdgesPerCell, kNumOps}, rng, false));
    auto normal = build_cell(CellKind::Normal, C, SearchMode::Attention, 2, 4, rng);
    CHECK(normal->forward(s0, s1, w).shape() == Shape{2, 4 * C, 8, 8});

    auto ctx = std::make_shared<SearchContext>();
    SearchCell reduce(CellKind::Reduction, false, C, C, 2 * C, SearchMode::Attention, 2, 4, ctx, rng);
    CHECK(reduce.forward(s0, s1, w).shape() == Shape{2, 8 * C, 4, 4});
    for (std::size_t e = 0; e < kEdgesPerCell; ++e)
      CHECK(reduce.edge_stride(e) == (CellSpec::edges()[e].from < 2 ? 2u : 1u));
    CHECK(reduce.last_mask(0).popcount() == 4);
    CHECK_THROWS_AS(reduce.forward(s0, s1, Tensor::zeros({13, kNumOps})), ShapeError);
  }
}

TEST_CASE("all-skip cell nodes are powers of two times the input sum") {
  for (SearchMode mode : {SearchMode::Full, SearchMode::Random}) {
    Rng rng(6);
    auto cell = build_cell(CellKind::Normal, 4, mode, 2, 4, rng);
    Tensor s0 = random_tensor({2, 4, 6, 6}, rng, false);
    Tensor s1 = random_tensor({2, 4, 6, 6}, rng, false);
    const auto nodes = cell->intermediate_nodes(s0, s1, one_hot_matrix(OpKind::SkipConnect));
    REQUIRE(nodes.size() == 4);
    double scale = 1.0;
    for (const Tensor& node : nodes) {
      for (std::size_t i = 0; i < s0.numel(); ++i)
        CHECK(node.values()[i] ==
              doctest::Approx(scale * (s0.values()[i] + s1.values()[i])).epsilon(1e-14));
      scale *= 2.0;
    }
  }
}

TEST_CASE("network weights exclude alpha and include attention MLPs") {
  SupernetSpec spec;
  spec.depth = 2;
  spec.channels = 4;
  spec.n_classes = 3;
  auto attention = build_network(spec);
  spec.mode = SearchMode::Full;
  auto full = build_network(spec);
  for (const Tensor& w : attention->weights()) {
    CHECK(w.id() != attention->arch().normal.id());
    CHECK(w.id() != attention->arch().reduce.id());
  }
  // Attention mode adds two MLP matrices per edge but shrinks the op space.
  const std::size_t per_cell_mlps = 2 * kEdgesPerCell;
  CHECK(attention->weights().size() != full->weights().size());
  CHECK(attention->weights().size() > per_cell_mlps);
}

TEST_CASE("fifty SGD steps reduce the loss on separable data") {
  SyntheticSpec ds;
  ds.n = 64;
  ds.image_size = 8;
  ds.n_classes = 4;
  ds.seed = 3;
  const Dataset data = make_synthetic(ds);
  SupernetSpec spec;
  spec.depth = 2;
  spec.channels = 4;
  spec.n_classes = 4;
  spec.seed = 2;
  auto net = build_network(spec);
  for (Tensor a : net->arch_parameters()) a.set_requires_grad(false);
  Sgd sgd(net->weights(), {0.9, 0.0});

  const auto eval_loss = [&] {
    NoGradGuard no_grad;
    return cross_entropy(net->forward(data.images), data.labels).item();
  };
  const double before = eval_loss();
  for (int step = 0; step < 50; ++step) {
    sgd.zero_grad();
    backward(cross_entropy(net->forward(data.images), data.labels));
    sgd.step(0.05);
  }
  const double after = eval_loss();
  MESSAGE("loss " << before << " -> " << after);
  CHECK(after < before);
}
