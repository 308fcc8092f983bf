#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "adarts/attention.hpp"
#include "adarts/nn.hpp"
#include "adarts/partial.hpp"
#include "adarts/random.hpp"
#include "adarts/tensor.hpp"

namespace adarts {

// Column order of every α row.
enum class OpKind {
  None,
  MaxPool3x3,
  AvgPool3x3,
  SkipConnect,
  SepConv3x3,
  DilConv3x3,
  SepConv5x5,
  DilConv5x5,
};

inline constexpr std::size_t kNumOps = 8;
inline constexpr std::array<OpKind, kNumOps> kAllOps = {
    OpKind::None,       OpKind::MaxPool3x3, OpKind::AvgPool3x3, OpKind::SkipConnect,
    OpKind::SepConv3x3, OpKind::DilConv3x3, OpKind::SepConv5x5, OpKind::DilConv5x5};

std::string_view op_name(OpKind kind);
OpKind op_from_name(std::string_view name);

ModulePtr make_operation(OpKind kind, std::size_t channels, std::size_t stride, Rng& rng);
std::vector<ModulePtr> make_candidates(std::size_t channels, std::size_t stride, Rng& rng);

inline constexpr std::size_t kInputNodes = 2;
inline constexpr std::size_t kIntermediateNodes = 4;
inline constexpr std::size_t kEdgesPerCell = 14;

enum class CellKind { Normal, Reduction };

/// Seven-node cell: nodes 0,1 are inputs, 2..5 intermediate, 6 the output
/// concatenation. Edges run from every earlier node into each intermediate
/// node, ordered by target node then source node.
struct CellSpec {
  CellKind kind = CellKind::Normal;

  struct Edge {
    std::size_t from;
    std::size_t to;
  };
  static std::vector<Edge> edges();
  // Index of the first edge entering intermediate node `node` (2..5).
  static std::size_t first_edge(std::size_t node);
};

enum class SearchMode { Attention, Random, Full };

std::string_view mode_name(SearchMode mode);
SearchMode mode_from_name(std::string_view name);

/// Raw architecture logits, one 14×8 matrix per cell kind, shared by all
/// cells of that kind.
struct ArchWeights {
  Tensor normal;
  Tensor reduce;

  // Zeros plus N(0, noise²) entries when noise > 0.
  static ArchWeights create(double noise, Rng& rng);
  Tensor& of(CellKind kind) { return kind == CellKind::Normal ? normal : reduce; }
  const Tensor& of(CellKind kind) const {
    return kind == CellKind::Normal ? normal : reduce;
  }
  std::vector<Tensor> parameters() const { return {normal, reduce}; }
};

/// Softmax of a raw α row (or of every row of a matrix).
Tensor arch_softmax(const Tensor& alpha);

/// Elementwise sum of the edges entering a node.
Tensor node_aggregate(const std::vector<Tensor>& edge_outputs);

/// Shared per-network state the edges touch during forward.
struct SearchContext {
  AllocationCounter op_space;
  Rng mask_rng{0};
};

class SearchCell {
 public:
  SearchCell(CellKind kind, bool reduction_prev, std::size_t c_prev_prev,
             std::size_t c_prev, std::size_t channels, SearchMode mode,
             std::size_t proportion, std::size_t reduction,
             std::shared_ptr<SearchContext> context, Rng& rng);

  /// Full cell: preprocess both inputs, run the 14 edges and concatenate the
  /// intermediate nodes. `weights` is the softmaxed (14,8) matrix.
  Tensor forward(const Tensor& s0, const Tensor& s1, const Tensor& weights);

  /// Intermediate node values for already-preprocessed inputs.
  std::vector<Tensor> intermediate_nodes(const Tensor& s0, const Tensor& s1,
                                         const Tensor& weights);

  /// One edge's contribution given its softmaxed weight row.
  Tensor edge_forward(std::size_t edge, const Tensor& x, const Tensor& weight_row);

  CellKind kind() const { return kind_; }
  std::size_t channels() const { return channels_; }
  std::size_t op_width() const { return op_width_; }
  std::size_t edge_stride(std::size_t edge) const { return edges_[edge].stride; }
  const ChannelMask& last_mask(std::size_t edge) const { return edges_[edge].last_mask; }
  std::vector<Tensor> parameters() const;

 private:
  struct Edge {
    std::size_t stride = 1;
    std::vector<ModulePtr> ops;
    std::optional<AttentionUnit> attention;
    ChannelMask last_mask;
  };

  CellKind kind_;
  SearchMode mode_;
  std::size_t channels_;
  std::size_t op_width_;
  std::size_t proportion_;
  ModulePtr preprocess0_;
  ModulePtr preprocess1_;
  std::vector<Edge> edges_;
  std::shared_ptr<SearchContext> context_;
};

struct SupernetSpec {
  std::size_t depth = 8;
  std::size_t channels = 16;  // C0
  std::size_t n_classes = 10;
  std::size_t in_channels = 3;
  std::size_t stem_multiplier = 3;
  std::size_t proportion = 4;  // K
  std::size_t reduction = 4;   // r
  SearchMode mode = SearchMode::Attention;
  double alpha_noise = 1e-3;
  std::uint64_t seed = 0;

  // {floor(depth/3), floor(2·depth/3)}; coincide for depth 1.
  std::vector<std::size_t> reduction_positions() const;
  bool is_reduction(std::size_t cell) const;
};

std::unique_ptr<SearchCell> build_cell(CellKind kind, std::size_t channels,
                                       SearchMode mode, std::size_t proportion,
                                       std::size_t reduction, Rng& rng);

class Supernet {
 public:
  explicit Supernet(const SupernetSpec& spec);

  Tensor forward(const Tensor& images);

  const SupernetSpec& spec() const { return spec_; }
  ArchWeights& arch() { return arch_; }
  const ArchWeights& arch() const { return arch_; }

  /// Network weights ω, including attention MLPs.
  std::vector<Tensor> weights() const;
  std::vector<Tensor> arch_parameters() const { return arch_.parameters(); }

  /// Doubles allocated inside candidate-operation evaluation since the last
  /// reset.
  std::size_t op_space_floats() const { return context_->op_space.count(); }
  void reset_op_space_counter() { context_->op_space.reset(); }

  const std::vector<std::unique_ptr<SearchCell>>& cells() const { return cells_; }

 private:
  SupernetSpec spec_;
  std::shared_ptr<SearchContext> context_;
  ConvParams stem_;
  std::vector<std::unique_ptr<SearchCell>> cells_;
  std::unique_ptr<Linear> classifier_;
  ArchWeights arch_;
};

std::unique_ptr<Supernet> build_network(const SupernetSpec& spec);

}  // namespace adarts
