#include "doctest.h"

#include <cmath>
#include <cstring>
#include <numbers>

#include "adarts/search.hpp"
#include "support.hpp"

using namespace adarts;
using testing::random_tensor;

namespace {

Dataset small_data(std::uint64_t seed, std::size_t n = 128) {
  SyntheticSpec s;
  s.n = n;
  s.image_size = 8;
  s.n_classes = 4;
  s.seed = seed;
  return make_synthetic(s);
}

SearchConfig small_config(SearchMode mode, std::size_t epochs) {
  SearchConfig c;
  c.net.depth = 2;
  c.net.channels = 4;
  c.net.proportion = 2;
  c.net.mode = mode;
  c.net.seed = 5;
  c.epochs = epochs;
  c.batchsize = 16;
  return c;
}

std::vector<std::vector<double>> snapshot(const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> out;
  for (const Tensor& p : params) out.push_back(testing::to_vec(p.values()));
  return out;
}

bool bitwise_equal(const std::vector<std::vector<double>>& a,
                   const std::vector<std::vector<double>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size() ||
        std::memcmp(a[i].data(), b[i].data(), a[i].size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("sgd: no-op, single step and momentum recursion") {
  Tensor p = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  Sgd still(std::vector<Tensor>{p}, {0.9, 0.0});
  still.zero_grad();
  still.step(0.1);
  CHECK(testing::to_vec(p.values()) == std::vector<double>{1.0, -2.0, 0.5});

  Tensor q = Tensor::from({1}, {1.0}, true);
  Sgd plain(std::vector<Tensor>{q}, {0.0, 0.0});
  plain.zero_grad();
  q.mutable_grad()[0] = 1.0;
  plain.step(0.1);
  CHECK(q.item() == doctest::Approx(0.9).epsilon(1e-15));

  // f = a·p²/2 with momentum and decay, against a scalar recursion.
  const double a = 1.7, lr = 0.05, mu = 0.9, wd = 0.01;
  Tensor r = Tensor::from({1}, {2.0}, true);
  Sgd sgd(std::vector<Tensor>{r}, {mu, wd});
  double pr = 2.0, v = 0.0;
  for (int step = 0; step < 5; ++step) {
    sgd.zero_grad();
    r.mutable_grad()[0] = a * r.item();
    sgd.step(lr);
    v = mu * v + a * pr + wd * pr;
    pr -= lr * v;
    CHECK(r.item() == doctest::Approx(pr).epsilon(1e-15));
  }
}

TEST_CASE("adam: no-op, sign-like first step and three-step recursion") {
  Tensor p = Tensor::from({2}, {0.3, -0.4}, true);
  Adam still(std::vector<Tensor>{p}, {0.01, 0.5, 0.999, 0.0, 1e-8});
  still.zero_grad();
  still.step();
  CHECK(testing::to_vec(p.values()) == std::vector<double>{0.3, -0.4});

  Tensor big = Tensor::from({2}, {0.0, 0.0}, true);
  Adam first(std::vector<Tensor>{big}, {0.01, 0.5, 0.999, 0.0, 1e-8});
  first.zero_grad();
  big.mutable_grad()[0] = 250.0;
  big.mutable_grad()[1] = -3e3;
  first.step();
  CHECK(big.values()[0] == doctest::Approx(-0.01).epsilon(1e-9));
  CHECK(big.values()[1] == doctest::Approx(0.01).epsilon(1e-9));

  const double lr = 6e-4, b1 = 0.5, b2 = 0.999, wd = 1e-3, eps = 1e-8;
  Tensor q = Tensor::from({1}, {0.7}, true);
  Adam adam(std::vector<Tensor>{q}, {lr, b1, b2, wd, eps});
  double x = 0.7, m = 0.0, v = 0.0;
  for (int t = 1; t <= 3; ++t) {
    adam.zero_grad();
    const double g = std::sin(3.0 * q.item()) + 0.2;
    q.mutable_grad()[0] = g;
    adam.step();
    const double gj = g + wd * x;
    m = b1 * m + (1 - b1) * gj;
    v = b2 * v + (1 - b2) * gj * gj;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    x -= lr * mh / (std::sqrt(vh) + eps);
    CHECK(q.item() == doctest::Approx(x).epsilon(1e-15));
  }
  CHECK(adam.steps() == 3);

  Tensor bare = Tensor::from({1}, {1.0}, true);
  Adam missing(std::vector<Tensor>{bare}, {});
  CHECK_THROWS_AS(missing.step(), Error);
  Sgd missing_sgd(std::vector<Tensor>{bare}, {});
  CHECK_THROWS_AS(missing_sgd.step(0.1), Error);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(cosine_lr(0.0, 50.0, 0.025) == 0.025);
  CHECK(cosine_lr(50.0, 50.0, 0.025) == doctest::Approx(0.0));
  CHECK(std::abs(cosine_lr(50.0, 50.0, 0.025)) < 1e-18);
  CHECK(cosine_lr(25.0, 50.0, 0.025) == doctest::Approx(0.0125).epsilon(1e-14));
  CHECK_THROWS_AS(cosine_lr(0.0, 0.0, 0.025), Error);
  CHECK_THROWS_AS(cosine_lr(51.0, 50.0, 0.025), Error);
}

TEST_CASE("zero learning rates leave every parameter bitwise unchanged") {
  const Dataset data = small_data(1, 64);
  auto [train, val] = split(data, 0.5, 0);
  SearchConfig c = small_config(SearchMode::Attention, 1);
  c.w_lr = 0.0;
  c.a_opt.lr = 0.0;
  SearchEngine engine(c, data.n_classes, data.channels());
  const auto weights = snapshot(engine.net().weights());
  const auto alpha = snapshot(engine.net().arch_parameters());
  engine.bilevel_epoch(train, val, 0);
  CHECK(bitwise_equal(snapshot(engine.net().weights()), weights));
  CHECK(bitwise_equal(snapshot(engine.net().arch_parameters()), alpha));
}

TEST_CASE("an architecture step changes only alpha and the Adam state") {
  const Dataset data = small_data(2, 32);
  SearchConfig c = small_config(SearchMode::Attention, 1);
  c.net.depth = 1;
  c.a_opt.lr = 0.01;
  SearchEngine engine(c, data.n_classes, data.channels());
  const auto weights = snapshot(engine.net().weights());
  const auto alpha = snapshot(engine.net().arch_parameters());
  BatchIterator it(data, 16, 0, 0);
  Batch batch;
  REQUIRE(it.next(batch));
  engine.arch_step(batch);
  CHECK(bitwise_equal(snapshot(engine.net().weights()), weights));
  CHECK_FALSE(bitwise_equal(snapshot(engine.net().arch_parameters()), alpha));
  CHECK(engine.arch_optimizer().steps() == 1);
  bool moved = false;
  for (const auto& m : engine.arch_optimizer().first_moment())
    for (double v : m) moved = moved || v != 0.0;
  CHECK(moved);
  for (const Tensor& w : engine.net().weights()) CHECK(w.requires_grad());
}

TEST_CASE("validation loss falls over ten epochs on separable data") {
  const Dataset data = small_data(3, 128);
  auto [train, val] = split(data, 0.5, 5);
  SearchEngine engine(small_config(SearchMode::Attention, 10), data.n_classes, data.channels());
  const double before =
      evaluate([&](const Tensor& x) { return engine.net().forward(x); }, val, 16).loss;
  EpochMetrics last;
  for (std::size_t e = 0; e < 10; ++e) last = engine.bilevel_epoch(train, val, e);
  MESSAGE("val loss " << before << " -> " << last.val_loss << ", acc " << last.val_acc);
  CHECK(last.val_loss < before);
}

TEST_CASE("two runs with the same seed produce identical logs and alphas") {
  const Dataset data = small_data(4, 96);
  const SearchConfig c = small_config(SearchMode::Attention, 2);
  const SearchResult a = run_search(c, data);
  const SearchResult b = run_search(c, data);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    EpochMetrics x = a.metrics[i], y = b.metrics[i];
    x.seconds = y.seconds = 0.0;
    CHECK(metrics_csv_row(x) == metrics_csv_row(y));
    CHECK(std::memcmp(&a.metrics[i].val_loss, &b.metrics[i].val_loss, sizeof(double)) == 0);
  }
  CHECK(a.alpha.normal == b.alpha.normal);
  CHECK(a.alpha.reduce == b.alpha.reduce);
  CHECK(a.genotype == b.genotype);
}

TEST_CASE("alpha rows stay finite and softmax-normalized after a search") {
  const SearchResult r = run_search(small_config(SearchMode::Random, 2), small_data(5, 64));
  for (const auto* m : {&r.alpha.normal, &r.alpha.reduce}) {
    REQUIRE(m->size() == kEdgesPerCell * kNumOps);
    for (double v : *m) CHECK(std::isfinite(v));
    const Tensor p = arch_softmax(Tensor::from({kEdgesPerCell, kNumOps}, *m));
    for (std::size_t e = 0; e < kEdgesPerCell; ++e) {
      double total = 0.0;
      for (std::size_t k = 0; k < kNumOps; ++k) total += p.values()[e * kNumOps + k];
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  CHECK(r.epoch_genotypes.size() == 2);
  CHECK(r.metrics.back().opspace_floats > 0);
}

TEST_CASE("op-space counter: zero before forward, proportional to 1/K and to batch size") {
  SupernetSpec spec;
  spec.depth = 2;
  spec.channels = 8;
  spec.n_classes = 4;
  spec.mode = SearchMode::Full;
  CHECK(build_network(spec)->op_space_floats() == 0);

  Rng rng(6);
  const Tensor x2 = random_tensor({2, 3, 8, 8}, rng, false);
  const Tensor x4 = random_tensor({4, 3, 8, 8}, rng, false);
  const Tensor x8 = random_tensor({8, 3, 8, 8}, rng, false);
  auto full = build_network(spec);
  const std::size_t full_count = op_space_float_counter(*full, x2);
  for (SearchMode mode : {SearchMode::Attention, SearchMode::Random}) {
    for (std::size_t K : {1u, 2u, 4u}) {
      spec.mode = mode;
      spec.proportion = K;
      auto net = build_network(spec);
      const double ratio = static_cast<double>(op_space_float_counter(*net, x2)) /
                           static_cast<double>(full_count);
      CHECK(ratio == doctest::Approx(1.0 / static_cast<double>(K)).epsilon(0.10));
    }
  }

  spec.mode = SearchMode::Attention;
  spec.proportion = 4;
  auto net = build_network(spec);
  const std::size_t c2 = op_space_float_counter(*net, x2);
  const std::size_t c4 = op_space_float_counter(*net, x4);
  const std::size_t c8 = op_space_float_counter(*net, x8);
  CHECK(c2 < c4);
  CHECK(c4 < c8);
  CHECK(static_cast<double>(c8) / static_cast<double>(c4) == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("random and attention channel selection lead to different genotypes") {
  const Dataset data = small_data(7, 128);
  SearchConfig c = small_config(SearchMode::Attention, 3);
  c.a_opt.lr = 3e-3;
  const Genotype attention = run_search(c, data).genotype;
  c.net.mode = SearchMode::Random;
  const Genotype random = run_search(c, data).genotype;
  CHECK_FALSE(attention == random);
}

TEST_CASE("search rejects empty splits and invalid settings") {
  const Dataset data = small_data(8, 32);
  SearchConfig c = small_config(SearchMode::Attention, 1);
  SearchEngine engine(c, data.n_classes, data.channels());
  CHECK_THROWS_AS(engine.bilevel_epoch(Dataset{}, data, 0), Error);
  CHECK_THROWS_AS(engine.bilevel_epoch(data, Dataset{}, 0), Error);

  SearchConfig bad = c;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.batchsize = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.w_lr = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.a_opt.beta1 = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.batchsize = 64;
  CHECK_THROWS(run_search(bad, data));
}

TEST_CASE("metrics rows have one field per header column") {
  const auto columns = [](const std::string& s) { return std::count(s.begin(), s.end(), ',') + 1; };
  EpochMetrics m;
  m.epoch = 3;
  m.val_acc = 0.5;
  CHECK(columns(metrics_csv_header()) == 8);
  CHECK(columns(metrics_csv_row(m)) == 8);
}
