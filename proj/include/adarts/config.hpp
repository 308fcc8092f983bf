#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "adarts/data.hpp"
#include "adarts/search.hpp"

namespace adarts {

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Every knob a command can read. Defaults are the full-scale search settings.
struct RunConfig {
  std::string dataset = "synthetic";  // synthetic | cifar10
  std::string data_path;
  std::size_t depth = 8;
  std::size_t channels = 16;
  std::size_t epochs = 80;
  std::size_t batchsize = 96;
  std::size_t K = 4;
  std::size_t r = 4;
  SearchMode mode = SearchMode::Attention;
  std::uint64_t seed = 0;
  double w_lr = 0.025;
  double w_momentum = 0.9;
  double w_decay = 3e-4;
  double a_lr = 6e-4;
  double a_beta1 = 0.5;
  double a_beta2 = 0.999;
  double a_decay = 1e-3;
  std::string out_dir = "out";

  std::size_t synthetic_n = 2000;
  std::size_t synthetic_size = 16;
  std::size_t synthetic_classes = 4;
  double synthetic_noise = 0.1;
  std::size_t data_limit = 0;  // 0 keeps every CIFAR record
  std::size_t eval_depth = 20;
  std::size_t eval_epochs = 600;

  /// Applies one key=value pair; throws ConfigError on an unknown key or a
  /// value that does not parse completely.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  SearchConfig search_config() const;
  SyntheticSpec synthetic_spec() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Keys in file order of the help listing.
const std::vector<ConfigKey>& config_keys();

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
/// Errors carry the line number.
void apply_config_text(RunConfig& cfg, std::string_view text, std::string_view origin = "config");
RunConfig load_config(const std::filesystem::path& path);

/// The dataset named by `dataset`: the synthetic generator, or every
/// data_batch_*.bin (else test_batch.bin) under `data_path` (or that file).
Dataset load_dataset(const RunConfig& cfg);

}  // namespace adarts
