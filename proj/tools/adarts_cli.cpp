#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "adarts/commands.hpp"

namespace {

using adarts::RunConfig;

// Config file first, then every --key given on the command line.
struct ConfigOptions {
  std::string file;
  std::map<std::string, std::optional<std::string>> overrides;

  void attach(CLI::App& cmd) {
    cmd.add_option("-c,--config", file, "key=value config file");
    const RunConfig defaults;
    for (const auto& key : adarts::config_keys()) {
      cmd.add_option("--" + key.name, overrides[key.name],
                     key.help + " (default: " + defaults.get(key.name) + ")")
          ->group("Config keys");
    }
  }

  RunConfig resolve() const {
    RunConfig cfg = file.empty() ? RunConfig{} : adarts::load_config(file);
    for (const auto& [key, value] : overrides) {
      if (value) cfg.set(key, *value);
    }
    return cfg;
  }
};

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& text, Parse parse) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-guided partial-channel differentiable architecture search"};
  app.require_subcommand(1);

  ConfigOptions search_opts, eval_opts, ablate_k_opts, ablate_mode_opts, skip_opts;

  auto* search = app.add_subcommand("search", "search cells; writes genotype.json, metrics.csv, alpha.json");
  search_opts.attach(*search);

  std::string alpha_path, derive_out;
  auto* derive = app.add_subcommand("derive", "alpha.json -> genotype.json");
  derive->add_option("alpha", alpha_path, "alpha snapshot written by search")->required();
  derive->add_option("-o,--output", derive_out, "genotype path (default: next to the snapshot)");

  std::string genotype_path;
  auto* eval = app.add_subcommand("eval", "train the discrete network of a genotype; writes eval_metrics.csv");
  eval->add_option("genotype", genotype_path, "genotype.json")->required();
  eval_opts.attach(*eval);

  std::uint64_t gradcheck_seed = 0;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  gradcheck->add_option("--seed", gradcheck_seed, "suite seed")->capture_default_str();

  std::string ks_text = "1,2,4,8,16";
  auto* ablate_k = app.add_subcommand("ablate-k", "one search per K; writes ablation.csv");
  ablate_k->add_option("--ks", ks_text, "comma-separated K values")->capture_default_str();
  ablate_k_opts.attach(*ablate_k);

  std::string modes_text = "attention,random,full";
  auto* ablate_mode = app.add_subcommand("ablate-mode", "one search per mode; writes ablation_mode.csv");
  ablate_mode->add_option("--modes", modes_text, "comma-separated modes")->capture_default_str();
  ablate_mode_opts.attach(*ablate_mode);

  auto* skip = app.add_subcommand("skip-compare", "full vs attention skip counts; writes skip_compare.csv");
  skip_opts.attach(*skip);

  CLI11_PARSE(app, argc, argv);

  try {
    if (search->parsed()) {
      adarts::cmd_search(search_opts.resolve(), std::cout);
    } else if (derive->parsed()) {
      std::filesystem::path out = derive_out;
      if (out.empty()) out = std::filesystem::path(alpha_path).parent_path() / "genotype.json";
      std::cout << adarts::cmd_derive(alpha_path, out).to_json();
    } else if (eval->parsed()) {
      adarts::cmd_eval(genotype_path, eval_opts.resolve(), std::cout);
    } else if (gradcheck->parsed()) {
      return adarts::cmd_gradcheck(gradcheck_seed, std::cout).passed() ? 0 : 2;
    } else if (ablate_k->parsed()) {
      const auto ks = parse_list<std::size_t>(ks_text, [](const std::string& s) {
        RunConfig probe;
        probe.set("K", s);
        return probe.K;
      });
      adarts::cmd_ablate_k(ablate_k_opts.resolve(), ks, std::cout);
    } else if (ablate_mode->parsed()) {
      const auto modes = parse_list<adarts::SearchMode>(modes_text, [](const std::string& s) {
        RunConfig probe;
        probe.set("mode", s);
        return probe.mode;
      });
      adarts::cmd_ablate_mode(ablate_mode_opts.resolve(), modes, std::cout);
    } else if (skip->parsed()) {
      adarts::cmd_skip_compare(skip_opts.resolve(), std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "adarts: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
