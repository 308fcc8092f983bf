#include "adarts/commands.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

namespace adarts {

namespace fs = std::filesystem;

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string metrics_csv(const std::vector<EpochMetrics>& metrics) {
  std::string out = metrics_csv_header() + "\n";
  for (const EpochMetrics& m : metrics) out += metrics_csv_row(m) + "\n";
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

SearchResult search_logged(const RunConfig& cfg, const Dataset& data, std::ostream& log,
                           const std::string& tag) {
  log << tag << metrics_csv_header() << "\n";
  return run_search(cfg.search_config(), data, [&](const EpochMetrics& m) {
    log << tag << metrics_csv_row(m) << "\n" << std::flush;
  });
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

AblationRow summarize(std::string label, const SearchResult& result, double seconds) {
  const EpochMetrics& last = result.metrics.back();
  return {std::move(label), last.opspace_floats, last.val_acc, last.skip_normal,
          last.skip_reduction, seconds};
}

}  // namespace

SearchResult cmd_search(const RunConfig& cfg, std::ostream& log) {
  const Dataset data = load_dataset(cfg);
  SearchResult result = search_logged(cfg, data, log, "");
  const fs::path out(cfg.out_dir);
  write_atomic(out / "metrics.csv", metrics_csv(result.metrics));
  write_atomic(out / "alpha.json", result.alpha.to_json());
  write_atomic(out / "genotype.json", result.genotype.to_json());
  return result;
}

Genotype cmd_derive(const fs::path& alpha_path, const fs::path& genotype_path) {
  const Genotype g = derive_genotype(AlphaSnapshot::from_json(read_file(alpha_path)));
  write_atomic(genotype_path, g.to_json());
  return g;
}

std::string eval_csv_header() { return "epoch,train_loss,val_loss,val_acc,seconds"; }

std::vector<EvalEpoch> cmd_eval(const fs::path& genotype_path, const RunConfig& cfg,
                                std::ostream& log) {
  const Genotype genotype = Genotype::from_json(read_file(genotype_path));
  validate(genotype);
  if (cfg.eval_epochs == 0) throw ConfigError("config: eval_epochs must be positive");
  const Dataset data = load_dataset(cfg);
  auto [train, val] = split(data, 0.5, cfg.seed);

  DiscreteSpec spec;
  spec.depth = cfg.eval_depth;
  spec.channels = cfg.channels;
  spec.n_classes = data.n_classes;
  spec.in_channels = data.channels();
  spec.seed = cfg.seed;
  auto net = build_discrete_network(genotype, spec);
  Sgd sgd(net->parameters(), {cfg.w_momentum, cfg.w_decay});

  std::vector<EvalEpoch> log_rows;
  std::string csv = eval_csv_header() + "\n";
  log << eval_csv_header() << "\n";
  for (std::size_t epoch = 0; epoch < cfg.eval_epochs; ++epoch) {
    const auto start = Clock::now();
    const double lr = cosine_lr(static_cast<double>(epoch), static_cast<double>(cfg.eval_epochs),
                                cfg.w_lr);
    BatchIterator it(train, cfg.batchsize, cfg.seed * 2 + 3, epoch);
    Batch batch;
    EvalEpoch row;
    row.epoch = epoch;
    std::size_t steps = 0;
    while (it.next(batch)) {
      sgd.zero_grad();
      Tensor loss = cross_entropy(net->forward(batch.images), batch.labels);
      backward(loss);
      sgd.step(lr);
      row.train_loss += loss.item();
      ++steps;
    }
    row.train_loss /= static_cast<double>(steps);
    const Evaluation ev =
        evaluate([&](const Tensor& x) { return net->forward(x); }, val, cfg.batchsize);
    row.val_loss = ev.loss;
    row.val_acc = ev.accuracy;
    row.seconds = seconds_since(start);
    const std::string line = std::to_string(row.epoch) + "," + format_double(row.train_loss) +
                             "," + format_double(row.val_loss) + "," +
                             format_double(row.val_acc) + "," + format_double(row.seconds);
    csv += line + "\n";
    log << line << "\n" << std::flush;
    log_rows.push_back(row);
  }
  write_atomic(fs::path(cfg.out_dir) / "eval_metrics.csv", csv);
  return log_rows;
}

GradCheckReport cmd_gradcheck(std::uint64_t seed, std::ostream& log) {
  GradCheckReport report = run_gradcheck(seed);
  for (const GradCheckCase& c : report.cases) {
    log << c.name << " seed=" << c.seed << " elements=" << c.elements
        << " rel_error=" << c.rel_error << " redraws=" << c.redraws
        << (c.rel_error <= report.tolerance ? " ok" : " FAIL") << "\n";
  }
  log << report.cases.size() << " cases, " << report.failures() << " failures, max rel_error "
      << report.max_error() << " (tolerance " << report.tolerance << ", h " << report.step
      << ")\n";
  return report;
}

std::vector<AblationRow> cmd_ablate_k(const RunConfig& cfg, const std::vector<std::size_t>& ks,
                                      std::ostream& log) {
  if (ks.empty()) throw ConfigError("ablate-k: empty K list");
  const Dataset data = load_dataset(cfg);
  std::vector<AblationRow> rows;
  std::string csv = "K,opspace_floats,final_val_acc,seconds\n";
  for (std::size_t k : ks) {
    RunConfig run = cfg;
    run.K = k;
    const auto start = Clock::now();
    const SearchResult result = search_logged(run, data, log, "K=" + std::to_string(k) + " ");
    rows.push_back(summarize(std::to_string(k), result, seconds_since(start)));
    const AblationRow& r = rows.back();
    csv += r.label + "," + std::to_string(r.opspace_floats) + "," +
           format_double(r.final_val_acc) + "," + format_double(r.seconds) + "\n";
  }
  write_atomic(fs::path(cfg.out_dir) / "ablation.csv", csv);
  return rows;
}

std::vector<AblationRow> cmd_ablate_mode(const RunConfig& cfg,
                                         const std::vector<SearchMode>& modes,
                                         std::ostream& log) {
  if (modes.empty()) throw ConfigError("ablate-mode: empty mode list");
  const Dataset data = load_dataset(cfg);
  std::vector<AblationRow> rows;
  std::string csv = "mode,opspace_floats,final_val_acc,skip_normal,skip_reduction,seconds\n";
  for (SearchMode mode : modes) {
    RunConfig run = cfg;
    run.mode = mode;
    const std::string name(mode_name(mode));
    const auto start = Clock::now();
    const SearchResult result = search_logged(run, data, log, name + " ");
    rows.push_back(summarize(name, result, seconds_since(start)));
    const AblationRow& r = rows.back();
    csv += r.label + "," + std::to_string(r.opspace_floats) + "," +
           format_double(r.final_val_acc) + "," + std::to_string(r.skip_normal) + "," +
           std::to_string(r.skip_reduction) + "," + format_double(r.seconds) + "\n";
  }
  write_atomic(fs::path(cfg.out_dir) / "ablation_mode.csv", csv);
  return rows;
}

SkipComparison cmd_skip_compare(const RunConfig& cfg, std::ostream& log) {
  const Dataset data = load_dataset(cfg);
  SkipComparison cmp;
  RunConfig run = cfg;
  run.mode = SearchMode::Full;
  cmp.full = search_logged(run, data, log, "full ").metrics;
  run.mode = SearchMode::Attention;
  cmp.attention = search_logged(run, data, log, "attention ").metrics;

  std::string csv =
      "epoch,full_skip_normal,full_skip_reduction,attention_skip_normal,attention_skip_reduction\n";
  std::size_t full_total = 0, attention_total = 0;
  for (std::size_t e = 0; e < cmp.full.size(); ++e) {
    const EpochMetrics& f = cmp.full[e];
    const EpochMetrics& a = cmp.attention[e];
    csv += std::to_string(e) + "," + std::to_string(f.skip_normal) + "," +
           std::to_string(f.skip_reduction) + "," + std::to_string(a.skip_normal) + "," +
           std::to_string(a.skip_reduction) + "\n";
    full_total += f.skip_normal + f.skip_reduction;
    attention_total += a.skip_normal + a.skip_reduction;
  }
  write_atomic(fs::path(cfg.out_dir) / "skip_compare.csv", csv);
  const char* direction = full_total > attention_total   ? "full mode kept more skip connections"
                          : full_total < attention_total ? "attention mode kept more skip connections"
                                                         : "both modes kept the same number of skip connections";
  log << "skip connections summed over epochs: full " << full_total << ", attention "
      << attention_total << " (" << direction << ")\n";
  return cmp;
}

}  // namespace adarts
