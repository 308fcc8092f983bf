#include "adarts/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace adarts {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ConfigError("config: key '" + std::string(key) + "' expects a number, got '" +
                      std::string(text) + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) {
      throw ConfigError("config: key '" + std::string(key) + "' must be finite");
    }
  }
  return value;
}

template <typename T>
std::string format_number(T value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

struct Field {
  std::string help;
  std::function<void(RunConfig&, std::string_view key, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number(T RunConfig::*member, std::string help) {
  return {std::move(help),
          [member](RunConfig& c, std::string_view key, std::string_view v) {
            c.*member = parse_number<T>(key, v);
          },
          [member](const RunConfig& c) { return format_number(c.*member); }};
}

Field text(std::string RunConfig::*member, std::string help) {
  return {std::move(help),
          [member](RunConfig& c, std::string_view, std::string_view v) { c.*member = v; },
          [member](const RunConfig& c) { return c.*member; }};
}

// Key order is the help order; lookups go through the index below.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    t.emplace_back("dataset",
                   Field{"synthetic | cifar10",
                         [](RunConfig& c, std::string_view, std::string_view v) {
                           if (v != "synthetic" && v != "cifar10") {
                             throw ConfigError("config: dataset must be synthetic or cifar10, got '" +
                                               std::string(v) + "'");
                           }
                           c.dataset = v;
                         },
                         [](const RunConfig& c) { return c.dataset; }});
    t.emplace_back("data_path", text(&RunConfig::data_path, "CIFAR-10 binary file or directory"));
    t.emplace_back("depth", number(&RunConfig::depth, "cells in the search network"));
    t.emplace_back("channels", number(&RunConfig::channels, "initial channel count C0"));
    t.emplace_back("epochs", number(&RunConfig::epochs, "search epochs"));
    t.emplace_back("batchsize", number(&RunConfig::batchsize, "mini-batch size"));
    t.emplace_back("K", number(&RunConfig::K, "channel proportion: 1/K of channels enter the op space"));
    t.emplace_back("r", number(&RunConfig::r, "attention MLP reduction ratio"));
    t.emplace_back("mode",
                   Field{"attention | random | full",
                         [](RunConfig& c, std::string_view, std::string_view v) {
                           try {
                             c.mode = mode_from_name(v);
                           } catch (const Error& e) {
                             throw ConfigError(std::string("config: ") + e.what());
                           }
                         },
                         [](const RunConfig& c) { return std::string(mode_name(c.mode)); }});
    t.emplace_back("seed", number(&RunConfig::seed, "seed for init, data, splits and masks"));
    t.emplace_back("w_lr", number(&RunConfig::w_lr, "initial SGD learning rate for weights (cosine to 0)"));
    t.emplace_back("w_momentum", number(&RunConfig::w_momentum, "SGD momentum"));
    t.emplace_back("w_decay", number(&RunConfig::w_decay, "SGD weight decay"));
    t.emplace_back("a_lr", number(&RunConfig::a_lr, "Adam learning rate for architecture weights"));
    t.emplace_back("a_beta1", number(&RunConfig::a_beta1, "Adam beta1"));
    t.emplace_back("a_beta2", number(&RunConfig::a_beta2, "Adam beta2"));
    t.emplace_back("a_decay", number(&RunConfig::a_decay, "Adam weight decay"));
    t.emplace_back("out_dir", text(&RunConfig::out_dir, "directory receiving artifacts"));
    t.emplace_back("synthetic_n", number(&RunConfig::synthetic_n, "synthetic samples"));
    t.emplace_back("synthetic_size", number(&RunConfig::synthetic_size, "synthetic image side"));
    t.emplace_back("synthetic_classes", number(&RunConfig::synthetic_classes, "synthetic classes"));
    t.emplace_back("synthetic_noise", number(&RunConfig::synthetic_noise, "synthetic pixel noise sigma"));
    t.emplace_back("data_limit", number(&RunConfig::data_limit, "keep the first N CIFAR records (0 = all)"));
    t.emplace_back("eval_depth", number(&RunConfig::eval_depth, "cells in the evaluation network"));
    t.emplace_back("eval_epochs", number(&RunConfig::eval_epochs, "training epochs of the evaluation network"));
    return t;
  }();
  return table;
}

const Field& field(std::string_view key) {
  static const std::map<std::string, const Field*, std::less<>> index = [] {
    std::map<std::string, const Field*, std::less<>> m;
    for (const auto& [name, f] : fields()) m.emplace(name, &f);
    return m;
  }();
  auto it = index.find(key);
  if (it == index.end()) throw ConfigError("config: unknown key '" + std::string(key) + "'");
  return *it->second;
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  field(key).set(*this, key, trim(value));
}

std::string RunConfig::get(std::string_view key) const { return field(key).get(*this); }

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& [name, f] : fields()) k.push_back({name, f.help});
    return k;
  }();
  return keys;
}

SearchConfig RunConfig::search_config() const {
  SearchConfig s;
  s.net.depth = depth;
  s.net.channels = channels;
  s.net.proportion = K;
  s.net.reduction = r;
  s.net.mode = mode;
  s.net.seed = seed;
  s.epochs = epochs;
  s.batchsize = batchsize;
  s.w_lr = w_lr;
  s.w_opt = {w_momentum, w_decay};
  s.a_opt = {a_lr, a_beta1, a_beta2, a_decay, 1e-8};
  return s;
}

SyntheticSpec RunConfig::synthetic_spec() const {
  return {synthetic_n, synthetic_size, synthetic_classes, synthetic_noise, seed};
}

void apply_config_text(RunConfig& cfg, std::string_view text, std::string_view origin) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos) {
      throw ConfigError(where + ": expected key=value, got '" + std::string(line) + "'");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, buf.str(), path.string());
  return cfg;
}

Dataset load_dataset(const RunConfig& cfg) {
  if (cfg.dataset == "synthetic") return make_synthetic(cfg.synthetic_spec());
  namespace fs = std::filesystem;
  if (cfg.data_path.empty()) throw ConfigError("config: dataset cifar10 needs data_path");
  const fs::path root(cfg.data_path);
  std::vector<fs::path> files;
  if (fs::is_directory(root)) {
    for (const auto& entry : fs::directory_iterator(root)) {
      const std::string name = entry.path().filename().string();
      if (name.starts_with("data_batch_") && name.ends_with(".bin")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty() && fs::exists(root / "test_batch.bin")) files.push_back(root / "test_batch.bin");
    if (files.empty()) throw ConfigError("config: no CIFAR-10 batches under " + root.string());
  } else {
    files.push_back(root);
  }
  return load_cifar10_binary(files, cfg.data_limit);
}

}  // namespace adarts
