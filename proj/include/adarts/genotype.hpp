#pragma once

#include <array>
#include <string>
#include <vector>

#include "adarts/nn.hpp"
#include "adarts/supernet.hpp"

namespace adarts {

/// Raw α values of both cell kinds, row-major 14×8.
struct AlphaSnapshot {
  std::vector<double> normal;
  std::vector<double> reduce;

  static AlphaSnapshot of(const ArchWeights& arch);
  const std::vector<double>& of(CellKind kind) const {
    return kind == CellKind::Normal ? normal : reduce;
  }
  std::string to_json() const;
  static AlphaSnapshot from_json(const std::string& text);
};

struct GenotypeEntry {
  OpKind op;
  std::size_t predecessor;

  bool operator==(const GenotypeEntry&) const = default;
};

inline constexpr std::size_t kGenotypeEntries = 2 * kIntermediateNodes;

/// Two (op, predecessor) entries per intermediate node; entries 2k, 2k+1
/// belong to node k+2 and are listed by ascending predecessor.
struct Genotype {
  std::array<GenotypeEntry, kGenotypeEntries> normal;
  std::array<GenotypeEntry, kGenotypeEntries> reduce;
  std::vector<std::size_t> concat = {2, 3, 4, 5};

  const std::array<GenotypeEntry, kGenotypeEntries>& of(CellKind kind) const {
    return kind == CellKind::Normal ? normal : reduce;
  }
  bool operator==(const Genotype&) const = default;

  std::string to_json() const;
  static Genotype from_json(const std::string& text);
};

/// Throws when an entry is 'none' or its predecessor does not precede it.
void validate(const Genotype& genotype);

/// Per edge, the strongest non-none softmax weight decides both the edge score
/// and its op; each node keeps its two best edges, ties to the lower index.
std::array<GenotypeEntry, kGenotypeEntries> derive_cell(std::span<const double> alpha);
Genotype derive_genotype(const AlphaSnapshot& alpha);
Genotype derive_genotype(const ArchWeights& arch);

std::size_t count_ops(const Genotype& genotype, CellKind kind, OpKind op);

/// Cell built from a genotype: full-width ops, no α, no masks.
class DiscreteCell {
 public:
  DiscreteCell(const Genotype& genotype, CellKind kind, bool reduction_prev,
               std::size_t c_prev_prev, std::size_t c_prev, std::size_t channels,
               Rng& rng);
  Tensor forward(const Tensor& s0, const Tensor& s1);
  std::vector<Tensor> parameters() const;

 private:
  std::array<GenotypeEntry, kGenotypeEntries> entries_;
  ModulePtr preprocess0_;
  ModulePtr preprocess1_;
  std::vector<ModulePtr> ops_;
};

struct DiscreteSpec {
  std::size_t depth = 20;
  std::size_t channels = 16;
  std::size_t n_classes = 10;
  std::size_t in_channels = 3;
  std::size_t stem_multiplier = 3;
  std::uint64_t seed = 0;
};

class DiscreteNetwork {
 public:
  DiscreteNetwork(const Genotype& genotype, const DiscreteSpec& spec);
  Tensor forward(const Tensor& images);
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

 private:
  DiscreteSpec spec_;
  ConvParams stem_;
  std::vector<std::unique_ptr<DiscreteCell>> cells_;
  std::unique_ptr<Linear> classifier_;
};

std::unique_ptr<DiscreteNetwork> build_discrete_network(const Genotype& genotype,
                                                        const DiscreteSpec& spec);

}  // namespace adarts
