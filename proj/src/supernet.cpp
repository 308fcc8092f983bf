#include "adarts/supernet.hpp"

#include <string>

namespace adarts {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::None: return "none";
    case OpKind::MaxPool3x3: return "maxpool_3x3";
    case OpKind::AvgPool3x3: return "avgpool_3x3";
    case OpKind::SkipConnect: return "skip_connect";
    case OpKind::SepConv3x3: return "sepconv_3x3";
    case OpKind::DilConv3x3: return "dilconv_3x3";
    case OpKind::SepConv5x5: return "sepconv_5x5";
    case OpKind::DilConv5x5: return "dilconv_5x5";
  }
  return "unknown";
}

OpKind op_from_name(std::string_view name) {
  for (OpKind kind : kAllOps) {
    if (op_name(kind) == name) return kind;
  }
  throw Error("unknown operation '" + std::string(name) + "'");
}

ModulePtr make_operation(OpKind kind, std::size_t channels, std::size_t stride,
                         Rng& rng) {
  switch (kind) {
    case OpKind::None: return std::make_unique<Zero>(stride);
    case OpKind::MaxPool3x3: return std::make_unique<Pool>(PoolKind::Max, stride);
    case OpKind::AvgPool3x3: return std::make_unique<Pool>(PoolKind::Avg, stride);
    case OpKind::SkipConnect:
      if (stride == 1) return std::make_unique<Identity>();
      return std::make_unique<FactorizedReduce>(channels, channels, rng);
    case OpKind::SepConv3x3: return std::make_unique<SepConv>(channels, 3, stride, rng);
    case OpKind::DilConv3x3: return std::make_unique<DilConv>(channels, 3, stride, rng);
    case OpKind::SepConv5x5: return std::make_unique<SepConv>(channels, 5, stride, rng);
    case OpKind::DilConv5x5: return std::make_unique<DilConv>(channels, 5, stride, rng);
  }
  throw Error("make_operation: unknown kind");
}

std::vector<ModulePtr> make_candidates(std::size_t channels, std::size_t stride,
                                       Rng& rng) {
  std::vector<ModulePtr> ops;
  ops.reserve(kNumOps);
  for (OpKind kind : kAllOps) ops.push_back(make_operation(kind, channels, stride, rng));
  return ops;
}

std::vector<CellSpec::Edge> CellSpec::edges() {
  std::vector<Edge> out;
  for (std::size_t to = kInputNodes; to < kInputNodes + kIntermediateNodes; ++to) {
    for (std::size_t from = 0; from < to; ++from) out.push_back({from, to});
  }
  return out;
}

std::size_t CellSpec::first_edge(std::size_t node) {
  if (node < kInputNodes || node >= kInputNodes + kIntermediateNodes) {
    throw Error("cell: node " + std::to_string(node) + " is not intermediate");
  }
  std::size_t index = 0;
  for (std::size_t to = kInputNodes; to < node; ++to) index += to;
  return index;
}

std::string_view mode_name(SearchMode mode) {
  switch (mode) {
    case SearchMode::Attention: return "attention";
    case SearchMode::Random: return "random";
    case SearchMode::Full: return "full";
  }
  return "unknown";
}

SearchMode mode_from_name(std::string_view name) {
  if (name == "attention") return SearchMode::Attention;
  if (name == "random") return SearchMode::Random;
  if (name == "full") return SearchMode::Full;
  throw Error("unknown search mode '" + std::string(name) + "'");
}

ArchWeights ArchWeights::create(double noise, Rng& rng) {
  auto matrix = [&] {
    std::vector<double> v(kEdgesPerCell * kNumOps, 0.0);
    if (noise > 0.0) {
      for (double& x : v) x = rng.normal(0.0, noise);
    }
    return Tensor::from({kEdgesPerCell, kNumOps}, std::move(v), true);
  };
  ArchWeights out;
  out.normal = matrix();
  out.reduce = matrix();
  return out;
}

Tensor arch_softmax(const Tensor& alpha) { return softmax_lastdim(alpha); }

Tensor node_aggregate(const std::vector<Tensor>& edge_outputs) {
  if (edge_outputs.empty()) throw Error("node_aggregate: no incoming edges");
  Tensor total = edge_outputs.front();
  for (std::size_t i = 1; i < edge_outputs.size(); ++i) total = add(total, edge_outputs[i]);
  return total;
}

// ---- cell ---------------------------------------------------------------

SearchCell::SearchCell(CellKind kind, bool reduction_prev, std::size_t c_prev_prev,
                       std::size_t c_prev, std::size_t channels, SearchMode mode,
                       std::size_t proportion, std::size_t reduction,
                       std::shared_ptr<SearchContext> context, Rng& rng)
    : kind_(kind),
      mode_(mode),
      channels_(channels),
      op_width_(mode == SearchMode::Full ? channels : selected_width(channels, proportion)),
      proportion_(proportion),
      context_(std::move(context)) {
  if (reduction_prev) {
    preprocess0_ = std::make_unique<FactorizedReduce>(c_prev_prev, channels, rng);
  } else {
    preprocess0_ = std::make_unique<ReluConvBn>(c_prev_prev, channels, 1, 1, rng);
  }
  preprocess1_ = std::make_unique<ReluConvBn>(c_prev, channels, 1, 1, rng);
  for (const CellSpec::Edge& e : CellSpec::edges()) {
    Edge edge;
    edge.stride = (kind == CellKind::Reduction && e.from < kInputNodes) ? 2 : 1;
    edge.ops = make_candidates(op_width_, edge.stride, rng);
    if (mode == SearchMode::Attention) {
      edge.attention = AttentionUnit::create(channels, reduction, rng);
    }
    edges_.push_back(std::move(edge));
  }
}

Tensor SearchCell::edge_forward(std::size_t index, const Tensor& x,
                                const Tensor& weight_row) {
  Edge& edge = edges_.at(index);
  AllocationCounter* counter = &context_->op_space;
  switch (mode_) {
    case SearchMode::Full:
      edge.last_mask = ChannelMask{std::vector<bool>(x.dim(1), true), 1};
      return mixed_op_full(x, weight_row, edge.ops, counter);
    case SearchMode::Random:
      edge.last_mask = random_channels(x.dim(1), proportion_, context_->mask_rng);
      return partial_mixed_op(x, edge.last_mask, weight_row, edge.ops, edge.stride, counter);
    case SearchMode::Attention: {
      Tensor fc = channel_attention_weights(x, *edge.attention);
      Tensor scaled = apply_attention(x, fc);
      edge.last_mask = select_channels(batch_mean_weights(fc), proportion_);
      return partial_mixed_op(scaled, edge.last_mask, weight_row, edge.ops, edge.stride,
                              counter);
    }
  }
  throw Error("edge_forward: unknown mode");
}

std::vector<Tensor> SearchCell::intermediate_nodes(const Tensor& s0, const Tensor& s1,
                                                   const Tensor& weights) {
  if (weights.rank() != 2 || weights.dim(0) != kEdgesPerCell || weights.dim(1) != kNumOps) {
    throw ShapeError("cell: expected (14,8) operation weights, got " +
                     shape_str(weights.shape()));
  }
  std::vector<Tensor> states{s0, s1};
  std::size_t edge = 0;
  for (std::size_t node = kInputNodes; node < kInputNodes + kIntermediateNodes; ++node) {
    std::vector<Tensor> incoming;
    for (std::size_t from = 0; from < node; ++from, ++edge) {
      incoming.push_back(edge_forward(edge, states[from], pick_row(weights, edge)));
    }
    states.push_back(node_aggregate(incoming));
  }
  return {states.begin() + kInputNodes, states.end()};
}

Tensor SearchCell::forward(const Tensor& s0, const Tensor& s1, const Tensor& weights) {
  return concat_channels(
      intermediate_nodes(preprocess0_->forward(s0), preprocess1_->forward(s1), weights));
}

std::vector<Tensor> SearchCell::parameters() const {
  std::vector<Tensor> out = preprocess0_->parameters();
  for (const Tensor& p : preprocess1_->parameters()) out.push_back(p);
  for (const Edge& edge : edges_) {
    for (const ModulePtr& op : edge.ops) {
      for (const Tensor& p : op->parameters()) out.push_back(p);
    }
    if (edge.attention) {
      for (const Tensor& p : edge.attention->parameters()) out.push_back(p);
    }
  }
  return out;
}

std::unique_ptr<SearchCell> build_cell(CellKind kind, std::size_t channels,
                                       SearchMode mode, std::size_t proportion,
                                       std::size_t reduction, Rng& rng) {
  return std::make_unique<SearchCell>(kind, false, channels, channels, channels, mode,
                                      proportion, reduction,
                                      std::make_shared<SearchContext>(), rng);
}

// ---- network ------------------------------------------------------------

std::vector<std::size_t> SupernetSpec::reduction_positions() const {
  return {depth / 3, 2 * depth / 3};
}

bool SupernetSpec::is_reduction(std::size_t cell) const {
  for (std::size_t p : reduction_positions()) {
    if (p == cell) return true;
  }
  return false;
}

namespace {

void validate(const SupernetSpec& spec) {
  if (spec.depth < 1) throw Error("supernet: depth must be >= 1");
  if (spec.channels < 1) throw Error("supernet: channels must be >= 1");
  if (spec.n_classes < 2) throw Error("supernet: need at least 2 classes");
  if (spec.proportion < 1) throw Error("supernet: K must be >= 1");
  if (spec.reduction < 1) throw Error("supernet: r must be >= 1");
}

}  // namespace

Supernet::Supernet(const SupernetSpec& spec)
    : spec_((validate(spec), spec)), context_(std::make_shared<SearchContext>()) {
  Rng rng(spec.seed);
  context_->mask_rng = rng.fork(1);
  Rng alpha_rng = rng.fork(2);
  Rng weight_rng = rng.fork(3);

  const std::size_t stem_channels = spec.stem_multiplier * spec.channels;
  stem_ = make_conv(spec.in_channels, stem_channels, 3, 1, 1, 1, weight_rng);
  std::size_t c_prev_prev = stem_channels, c_prev = stem_channels;
  std::size_t current = spec.channels;
  bool reduction_prev = false;
  for (std::size_t i = 0; i < spec.depth; ++i) {
    const bool reduction = spec.is_reduction(i);
    if (reduction) current *= 2;
    cells_.push_back(std::make_unique<SearchCell>(
        reduction ? CellKind::Reduction : CellKind::Normal, reduction_prev, c_prev_prev,
        c_prev, current, spec.mode, spec.proportion, spec.reduction, context_,
        weight_rng));
    reduction_prev = reduction;
    c_prev_prev = c_prev;
    c_prev = kIntermediateNodes * current;
  }
  classifier_ = std::make_unique<Linear>(c_prev, spec.n_classes, true, weight_rng);
  arch_ = ArchWeights::create(spec.alpha_noise, alpha_rng);
}

Tensor Supernet::forward(const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != spec_.in_channels) {
    throw ShapeError("supernet: expected (B," + std::to_string(spec_.in_channels) +
                     ",H,W) images, got " + shape_str(images.shape()));
  }
  Tensor normal = arch_softmax(arch_.normal);
  Tensor reduce = arch_softmax(arch_.reduce);
  Tensor s0 = batch_norm(conv2d(images, stem_));
  Tensor s1 = s0;
  for (const auto& cell : cells_) {
    Tensor out = cell->forward(s0, s1, cell->kind() == CellKind::Normal ? normal : reduce);
    s0 = s1;
    s1 = out;
  }
  Tensor pooled = reshape(global_pool(s1, PoolKind::Avg), {s1.dim(0), s1.dim(1)});
  return classifier_->forward(pooled);
}

std::vector<Tensor> Supernet::weights() const {
  std::vector<Tensor> out{stem_.weight};
  for (const auto& cell : cells_) {
    for (const Tensor& p : cell->parameters()) out.push_back(p);
  }
  for (const Tensor& p : classifier_->parameters()) out.push_back(p);
  return out;
}

std::unique_ptr<Supernet> build_network(const SupernetSpec& spec) {
  return std::make_unique<Supernet>(spec);
}

}  // namespace adarts
