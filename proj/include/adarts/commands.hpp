#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "adarts/config.hpp"
#include "adarts/genotype.hpp"
#include "adarts/gradcheck.hpp"
#include "adarts/search.hpp"

namespace adarts {

/// Writes `content` to a sibling temporary file and renames it over `path`,
/// so readers never observe a partial artifact. Creates parent directories.
void write_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// Header plus one line per epoch.
std::string metrics_csv(const std::vector<EpochMetrics>& metrics);

/// Search on the configured dataset; writes metrics.csv, genotype.json and
/// alpha.json under out_dir. Progress lines go to `log`.
SearchResult cmd_search(const RunConfig& cfg, std::ostream& log);

/// alpha.json → genotype.json.
Genotype cmd_derive(const std::filesystem::path& alpha_path,
                    const std::filesystem::path& genotype_path);

struct EvalEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double seconds = 0.0;
};

std::string eval_csv_header();

/// Trains the discrete network of `genotype_path` (eval_depth cells) with SGD
/// and cosine decay for eval_epochs; writes eval_metrics.csv under out_dir.
std::vector<EvalEpoch> cmd_eval(const std::filesystem::path& genotype_path,
                                const RunConfig& cfg, std::ostream& log);

/// Runs the finite-difference suite and prints one line per case.
GradCheckReport cmd_gradcheck(std::uint64_t seed, std::ostream& log);

struct AblationRow {
  std::string label;  // K value or mode name
  std::size_t opspace_floats = 0;
  double final_val_acc = 0.0;
  std::size_t skip_normal = 0;
  std::size_t skip_reduction = 0;
  double seconds = 0.0;
};

/// One search per K; ablation.csv rows `K,opspace_floats,final_val_acc,seconds`.
std::vector<AblationRow> cmd_ablate_k(const RunConfig& cfg, const std::vector<std::size_t>& ks,
                                      std::ostream& log);

/// One search per mode; ablation_mode.csv rows
/// `mode,opspace_floats,final_val_acc,skip_normal,skip_reduction,seconds`.
std::vector<AblationRow> cmd_ablate_mode(const RunConfig& cfg,
                                         const std::vector<SearchMode>& modes, std::ostream& log);

struct SkipComparison {
  std::vector<EpochMetrics> full;
  std::vector<EpochMetrics> attention;
};

/// Same run in full and attention mode; skip_compare.csv rows
/// `epoch,full_skip_normal,full_skip_reduction,attention_skip_normal,attention_skip_reduction`.
SkipComparison cmd_skip_compare(const RunConfig& cfg, std::ostream& log);

}  // namespace adarts
