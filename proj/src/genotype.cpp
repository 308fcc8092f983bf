#include "adarts/genotype.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace adarts {

using ordered_json = nlohmann::ordered_json;

namespace {

std::vector<double> matrix_from_json(const nlohmann::json& rows, const char* key) {
  if (!rows.is_array() || rows.size() != kEdgesPerCell) {
    throw Error(std::string("alpha: '") + key + "' must hold 14 rows");
  }
  std::vector<double> out;
  for (const auto& row : rows) {
    if (!row.is_array() || row.size() != kNumOps) {
      throw Error(std::string("alpha: every '") + key + "' row must hold 8 values");
    }
    for (const auto& v : row) {
      if (!v.is_number()) throw Error(std::string("alpha: non-numeric entry in '") + key + "'");
      const double x = v.get<double>();
      if (!std::isfinite(x)) throw Error("alpha: non-finite entry");
      out.push_back(x);
    }
  }
  return out;
}

ordered_json matrix_to_json(const std::vector<double>& m) {
  ordered_json rows = ordered_json::array();
  for (std::size_t e = 0; e < kEdgesPerCell; ++e) {
    rows.push_back(std::vector<double>(m.begin() + static_cast<long>(e * kNumOps),
                                       m.begin() + static_cast<long>((e + 1) * kNumOps)));
  }
  return rows;
}

ordered_json cell_to_json(const std::array<GenotypeEntry, kGenotypeEntries>& cell) {
  ordered_json out = ordered_json::array();
  for (const GenotypeEntry& e : cell) {
    out.push_back(ordered_json::array({std::string(op_name(e.op)), e.predecessor}));
  }
  return out;
}

std::array<GenotypeEntry, kGenotypeEntries> cell_from_json(const nlohmann::json& j,
                                                           const char* key) {
  if (!j.is_array() || j.size() != kGenotypeEntries) {
    throw Error(std::string("genotype: '") + key + "' must hold 8 entries");
  }
  std::array<GenotypeEntry, kGenotypeEntries> out{};
  for (std::size_t i = 0; i < kGenotypeEntries; ++i) {
    const auto& e = j[i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_number_unsigned()) {
      throw Error(std::string("genotype: malformed entry in '") + key + "'");
    }
    out[i] = {op_from_name(e[0].get<std::string>()), e[1].get<std::size_t>()};
  }
  return out;
}

}  // namespace

AlphaSnapshot AlphaSnapshot::of(const ArchWeights& arch) {
  return {std::vector<double>(arch.normal.values().begin(), arch.normal.values().end()),
          std::vector<double>(arch.reduce.values().begin(), arch.reduce.values().end())};
}

std::string AlphaSnapshot::to_json() const {
  ordered_json j;
  j["normal"] = matrix_to_json(normal);
  j["reduce"] = matrix_to_json(reduce);
  return j.dump(2) + "\n";
}

AlphaSnapshot AlphaSnapshot::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("alpha: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("normal") || !j.contains("reduce")) {
    throw Error("alpha: expected an object with 'normal' and 'reduce'");
  }
  return {matrix_from_json(j["normal"], "normal"), matrix_from_json(j["reduce"], "reduce")};
}

std::string Genotype::to_json() const {
  ordered_json j;
  j["normal"] = cell_to_json(normal);
  j["reduce"] = cell_to_json(reduce);
  j["concat"] = concat;
  return j.dump() + "\n";
}

Genotype Genotype::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("genotype: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("normal") || !j.contains("reduce")) {
    throw Error("genotype: expected an object with 'normal' and 'reduce'");
  }
  Genotype g;
  g.normal = cell_from_json(j["normal"], "normal");
  g.reduce = cell_from_json(j["reduce"], "reduce");
  if (j.contains("concat")) g.concat = j["concat"].get<std::vector<std::size_t>>();
  validate(g);
  return g;
}

void validate(const Genotype& genotype) {
  for (CellKind kind : {CellKind::Normal, CellKind::Reduction}) {
    const auto& cell = genotype.of(kind);
    for (std::size_t i = 0; i < kGenotypeEntries; ++i) {
      const std::size_t node = kInputNodes + i / 2;
      if (cell[i].op == OpKind::None) throw Error("genotype: entry uses 'none'");
      if (cell[i].predecessor >= node) {
        throw Error("genotype: predecessor " + std::to_string(cell[i].predecessor) +
                    " does not precede node " + std::to_string(node));
      }
    }
  }
  if (genotype.concat != std::vector<std::size_t>{2, 3, 4, 5}) {
    throw Error("genotype: concat must be [2,3,4,5]");
  }
}

std::array<GenotypeEntry, kGenotypeEntries> derive_cell(std::span<const double> alpha) {
  if (alpha.size() != kEdgesPerCell * kNumOps) {
    throw ShapeError("derive_genotype: expected 14x8 alpha, got " +
                     std::to_string(alpha.size()) + " values");
  }
  struct Choice {
    double score;
    OpKind op;
  };
  std::vector<Choice> choices(kEdgesPerCell);
  for (std::size_t e = 0; e < kEdgesPerCell; ++e) {
    const double* row = alpha.data() + e * kNumOps;
    const double mx = *std::max_element(row, row + kNumOps);
    double z = 0.0;
    for (std::size_t k = 0; k < kNumOps; ++k) z += std::exp(row[k] - mx);
    Choice best{-1.0, OpKind::None};
    for (std::size_t k = 1; k < kNumOps; ++k) {  // column 0 is 'none'
      const double p = std::exp(row[k] - mx) / z;
      if (p > best.score) best = {p, kAllOps[k]};
    }
    choices[e] = best;
  }

  std::array<GenotypeEntry, kGenotypeEntries> out{};
  for (std::size_t n = 0; n < kIntermediateNodes; ++n) {
    const std::size_t node = kInputNodes + n;
    const std::size_t first = CellSpec::first_edge(node);
    std::vector<std::size_t> preds(node);
    for (std::size_t i = 0; i < node; ++i) preds[i] = i;
    std::stable_sort(preds.begin(), preds.end(), [&](std::size_t a, std::size_t b) {
      return choices[first + a].score > choices[first + b].score;
    });
    std::size_t lo = std::min(preds[0], preds[1]), hi = std::max(preds[0], preds[1]);
    out[2 * n] = {choices[first + lo].op, lo};
    out[2 * n + 1] = {choices[first + hi].op, hi};
  }
  return out;
}

Genotype derive_genotype(const AlphaSnapshot& alpha) {
  Genotype g;
  g.normal = derive_cell(alpha.normal);
  g.reduce = derive_cell(alpha.reduce);
  return g;
}

Genotype derive_genotype(const ArchWeights& arch) {
  return derive_genotype(AlphaSnapshot::of(arch));
}

std::size_t count_ops(const Genotype& genotype, CellKind kind, OpKind op) {
  const auto& cell = genotype.of(kind);
  return static_cast<std::size_t>(std::count_if(
      cell.begin(), cell.end(), [op](const GenotypeEntry& e) { return e.op == op; }));
}

// ---- discrete network ---------------------------------------------------

DiscreteCell::DiscreteCell(const Genotype& genotype, CellKind kind, bool reduction_prev,
                           std::size_t c_prev_prev, std::size_t c_prev,
                           std::size_t channels, Rng& rng)
    : entries_(genotype.of(kind)) {
  if (reduction_prev) {
    preprocess0_ = std::make_unique<FactorizedReduce>(c_prev_prev, channels, rng);
  } else {
    preprocess0_ = std::make_unique<ReluConvBn>(c_prev_prev, channels, 1, 1, rng);
  }
  preprocess1_ = std::make_unique<ReluConvBn>(c_prev, channels, 1, 1, rng);
  for (const GenotypeEntry& e : entries_) {
    const std::size_t stride =
        (kind == CellKind::Reduction && e.predecessor < kInputNodes) ? 2 : 1;
    ops_.push_back(make_operation(e.op, channels, stride, rng));
  }
}

Tensor DiscreteCell::forward(const Tensor& s0, const Tensor& s1) {
  std::vector<Tensor> states{preprocess0_->forward(s0), preprocess1_->forward(s1)};
  for (std::size_t n = 0; n < kIntermediateNodes; ++n) {
    std::vector<Tensor> incoming;
    for (std::size_t i = 2 * n; i < 2 * n + 2; ++i) {
      incoming.push_back(ops_[i]->forward(states[entries_[i].predecessor]));
    }
    states.push_back(node_aggregate(incoming));
  }
  return concat_channels({states.begin() + kInputNodes, states.end()});
}

std::vector<Tensor> DiscreteCell::parameters() const {
  std::vector<Tensor> out = preprocess0_->parameters();
  for (const Tensor& p : preprocess1_->parameters()) out.push_back(p);
  for (const ModulePtr& op : ops_) {
    for (const Tensor& p : op->parameters()) out.push_back(p);
  }
  return out;
}

DiscreteNetwork::DiscreteNetwork(const Genotype& genotype, const DiscreteSpec& spec)
    : spec_(spec) {
  validate(genotype);
  if (spec.depth < 1) throw Error("discrete network: depth must be >= 1");
  SupernetSpec layout;
  layout.depth = spec.depth;
  Rng rng(spec.seed);
  const std::size_t stem_channels = spec.stem_multiplier * spec.channels;
  stem_ = make_conv(spec.in_channels, stem_channels, 3, 1, 1, 1, rng);
  std::size_t c_prev_prev = stem_channels, c_prev = stem_channels;
  std::size_t current = spec.channels;
  bool reduction_prev = false;
  for (std::size_t i = 0; i < spec.depth; ++i) {
    const bool reduction = layout.is_reduction(i);
    if (reduction) current *= 2;
    cells_.push_back(std::make_unique<DiscreteCell>(
        genotype, reduction ? CellKind::Reduction : CellKind::Normal, reduction_prev,
        c_prev_prev, c_prev, current, rng));
    reduction_prev = reduction;
    c_prev_prev = c_prev;
    c_prev = kIntermediateNodes * current;
  }
  classifier_ = std::make_unique<Linear>(c_prev, spec.n_classes, true, rng);
}

Tensor DiscreteNetwork::forward(const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != spec_.in_channels) {
    throw ShapeError("discrete network: unexpected input " + shape_str(images.shape()));
  }
  Tensor s0 = batch_norm(conv2d(images, stem_));
  Tensor s1 = s0;
  for (const auto& cell : cells_) {
    Tensor out = cell->forward(s0, s1);
    s0 = s1;
    s1 = out;
  }
  Tensor pooled = reshape(global_pool(s1, PoolKind::Avg), {s1.dim(0), s1.dim(1)});
  return classifier_->forward(pooled);
}

std::vector<Tensor> DiscreteNetwork::parameters() const {
  std::vector<Tensor> out{stem_.weight};
  for (const auto& cell : cells_) {
    for (const Tensor& p : cell->parameters()) out.push_back(p);
  }
  for (const Tensor& p : classifier_->parameters()) out.push_back(p);
  return out;
}

std::size_t DiscreteNetwork::parameter_count() const {
  std::size_t total = 0;
  for (const Tensor& p : parameters()) total += p.numel();
  return total;
}

std::unique_ptr<DiscreteNetwork> build_discrete_network(const Genotype& genotype,
                                                        const DiscreteSpec& spec) {
  return std::make_unique<DiscreteNetwork>(genotype, spec);
}

}  // namespace adarts
