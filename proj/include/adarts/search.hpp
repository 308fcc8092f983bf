#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "adarts/data.hpp"
#include "adarts/genotype.hpp"
#include "adarts/optim.hpp"
#include "adarts/supernet.hpp"

namespace adarts {

struct SearchConfig {
  SupernetSpec net;  // n_classes and in_channels are taken from the data
  std::size_t epochs = 80;
  std::size_t batchsize = 96;
  double w_lr = 0.025;
  SgdOptions w_opt{0.9, 3e-4};
  AdamOptions a_opt{6e-4, 0.5, 0.999, 1e-3, 1e-8};
  double train_fraction = 0.5;

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  std::size_t skip_normal = 0;
  std::size_t skip_reduction = 0;
  std::size_t opspace_floats = 0;
  double seconds = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean loss and accuracy over in-order batches, without recording a graph.
Evaluation evaluate(const std::function<Tensor(const Tensor&)>& forward,
                    const Dataset& data, std::size_t batchsize);

void set_requires_grad(const std::vector<Tensor>& params, bool on);

/// Owns the supernet and both optimizers for a first-order alternating search.
class SearchEngine {
 public:
  SearchEngine(const SearchConfig& config, std::size_t n_classes, std::size_t in_channels);

  /// One pass over paired (train, val) batches. Per pair: an Adam step on α
  /// from the val batch, then an SGD step on ω from the train batch.
  EpochMetrics bilevel_epoch(const Dataset& train, const Dataset& val, std::size_t epoch);

  /// Single architecture step on one batch (ω frozen).
  double arch_step(const Batch& batch);
  /// Single weight step on one batch (α frozen); records the op-space count.
  double weight_step(const Batch& batch, double lr);

  Supernet& net() { return *net_; }
  Sgd& weight_optimizer() { return sgd_; }
  Adam& arch_optimizer() { return adam_; }
  std::size_t last_opspace_floats() const { return last_opspace_; }

 private:
  SearchConfig config_;
  std::unique_ptr<Supernet> net_;
  Sgd sgd_;
  Adam adam_;
  std::size_t last_opspace_ = 0;
};

struct SearchResult {
  AlphaSnapshot alpha;
  std::vector<EpochMetrics> metrics;
  Genotype genotype;
  std::vector<Genotype> epoch_genotypes;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Splits `data` into train/val halves (seeded), runs every epoch and derives
/// the final genotype.
SearchResult run_search(const SearchConfig& config, const Dataset& data,
                        const EpochCallback& on_epoch = {});

/// Doubles allocated inside candidate-op evaluation for one forward pass.
std::size_t op_space_float_counter(Supernet& net, const Tensor& images);

}  // namespace adarts
