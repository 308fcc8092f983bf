#include "adarts/search.hpp"

#include <chrono>
#include <sstream>

namespace adarts {

void SearchConfig::validate() const {
  if (epochs == 0) throw Error("search: epochs must be positive");
  if (batchsize < 2) throw Error("search: batchsize must be >= 2");
  if (!(w_lr >= 0.0) || !(a_opt.lr >= 0.0)) throw Error("search: learning rates must be non-negative");
  if (net.proportion < 1) throw Error("search: K must be >= 1");
  if (w_opt.momentum < 0.0 || w_opt.weight_decay < 0.0 || a_opt.weight_decay < 0.0) {
    throw Error("search: momentum and weight decay must be non-negative");
  }
  if (!(a_opt.beta1 >= 0.0 && a_opt.beta1 < 1.0 && a_opt.beta2 >= 0.0 && a_opt.beta2 < 1.0)) {
    throw Error("search: Adam betas must lie in [0,1)");
  }
}

std::string metrics_csv_header() {
  return "epoch,train_loss,val_loss,val_acc,skip_normal,skip_reduction,opspace_floats,seconds";
}

std::string metrics_csv_row(const EpochMetrics& m) {
  std::ostringstream os;
  os.precision(10);
  os << m.epoch << ',' << m.train_loss << ',' << m.val_loss << ',' << m.val_acc << ','
     << m.skip_normal << ',' << m.skip_reduction << ',' << m.opspace_floats << ','
     << m.seconds;
  return os.str();
}

Evaluation evaluate(const std::function<Tensor(const Tensor&)>& forward,
                    const Dataset& data, std::size_t batchsize) {
  NoGradGuard no_grad;
  double loss = 0.0;
  std::size_t correct = 0;
  for (const Batch& batch : sequential_batches(data, batchsize)) {
    Tensor logits = forward(batch.images);
    loss += cross_entropy(logits, batch.labels).item() * static_cast<double>(batch.labels.size());
    const std::size_t classes = logits.dim(1);
    auto v = logits.values();
    for (std::size_t i = 0; i < batch.labels.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < classes; ++k) {
        if (v[i * classes + k] > v[i * classes + best]) best = k;
      }
      if (static_cast<int>(best) == batch.labels[i]) ++correct;
    }
  }
  const auto n = static_cast<double>(data.size());
  return {loss / n, static_cast<double>(correct) / n};
}

void set_requires_grad(const std::vector<Tensor>& params, bool on) {
  for (Tensor p : params) p.set_requires_grad(on);
}

namespace {

SupernetSpec with_data_shape(SupernetSpec spec, std::size_t n_classes,
                             std::size_t in_channels) {
  spec.n_classes = n_classes;
  spec.in_channels = in_channels;
  return spec;
}

}  // namespace

SearchEngine::SearchEngine(const SearchConfig& config, std::size_t n_classes,
                           std::size_t in_channels)
    : config_((config.validate(), config)),
      net_(build_network(with_data_shape(config.net, n_classes, in_channels))),
      sgd_(net_->weights(), config.w_opt),
      adam_(net_->arch_parameters(), config.a_opt) {
  sgd_.zero_grad();
  adam_.zero_grad();
}

double SearchEngine::arch_step(const Batch& batch) {
  const std::vector<Tensor> weights = net_->weights();
  set_requires_grad(weights, false);
  adam_.zero_grad();
  Tensor loss = cross_entropy(net_->forward(batch.images), batch.labels);
  backward(loss);
  adam_.step();
  set_requires_grad(weights, true);
  return loss.item();
}

double SearchEngine::weight_step(const Batch& batch, double lr) {
  const std::vector<Tensor> arch = net_->arch_parameters();
  set_requires_grad(arch, false);
  sgd_.zero_grad();
  net_->reset_op_space_counter();
  Tensor loss = cross_entropy(net_->forward(batch.images), batch.labels);
  last_opspace_ = net_->op_space_floats();
  backward(loss);
  sgd_.step(lr);
  set_requires_grad(arch, true);
  return loss.item();
}

EpochMetrics SearchEngine::bilevel_epoch(const Dataset& train, const Dataset& val,
                                         std::size_t epoch) {
  if (train.size() == 0 || val.size() == 0) throw Error("bilevel_epoch: empty split");
  const auto start = std::chrono::steady_clock::now();
  const double lr = cosine_lr(static_cast<double>(epoch), static_cast<double>(config_.epochs),
                              config_.w_lr);
  const std::uint64_t seed = config_.net.seed;
  BatchIterator train_batches(train, config_.batchsize, seed * 2 + 1, epoch);
  BatchIterator val_batches(val, config_.batchsize, seed * 2 + 2, epoch);

  EpochMetrics m;
  m.epoch = epoch;
  Batch tb, vb;
  std::size_t steps = 0;
  while (train_batches.next(tb) && val_batches.next(vb)) {
    arch_step(vb);
    m.train_loss += weight_step(tb, lr);
    ++steps;
  }
  if (steps == 0) throw Error("bilevel_epoch: no complete batch pair");
  m.train_loss /= static_cast<double>(steps);
  m.opspace_floats = last_opspace_;

  const Evaluation eval = evaluate([this](const Tensor& x) { return net_->forward(x); }, val,
                                   config_.batchsize);
  m.val_loss = eval.loss;
  m.val_acc = eval.accuracy;
  const Genotype g = derive_genotype(net_->arch());
  m.skip_normal = count_ops(g, CellKind::Normal, OpKind::SkipConnect);
  m.skip_reduction = count_ops(g, CellKind::Reduction, OpKind::SkipConnect);
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return m;
}

SearchResult run_search(const SearchConfig& config, const Dataset& data,
                        const EpochCallback& on_epoch) {
  auto [train, val] = split(data, config.train_fraction, config.net.seed);
  SearchEngine engine(config, data.n_classes, data.channels());
  SearchResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochMetrics m = engine.bilevel_epoch(train, val, epoch);
    result.metrics.push_back(m);
    result.epoch_genotypes.push_back(derive_genotype(engine.net().arch()));
    if (on_epoch) on_epoch(m);
  }
  result.alpha = AlphaSnapshot::of(engine.net().arch());
  result.genotype = derive_genotype(result.alpha);
  return result;
}

std::size_t op_space_float_counter(Supernet& net, const Tensor& images) {
  NoGradGuard no_grad;
  net.reset_op_space_counter();
  net.forward(images);
  return net.op_space_floats();
}

}  // namespace adarts
