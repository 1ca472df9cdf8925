#include <cstdint>
#include <exception>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "memtax/config.hpp"
#include "memtax/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"memtax: memorization taxonomy pipeline"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  const std::map<std::string, std::string> about = {
      {"index", "build the 32-token duplicate index over the corpus"},
      {"featurize", "compute per-sample features"},
      {"taxonomy", "assign recitation, reconstruction or recollection"},
      {"stats", "histograms, KL curves and feature-label dependence"},
      {"train", "fit baseline, taxonomic and partitioned predictors"},
      {"evaluate", "score the trained predictors on the test split"},
      {"cohort", "per-cohort category counts and shares"},
      {"synth", "generate a synthetic corpus with planted sequences and labels"}};
  for (const auto& name : memtax::pipeline_commands()) {
    auto* sub = app.add_subcommand(name, about.at(name));
    sub->add_option("--config", config_path, "run configuration (JSON)")->required();
    sub->add_option("--seed", seed, "root seed, overrides the config");
    sub->add_option("--out", out, "artifact directory, overrides paths.output");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = memtax::load_config(
        config_path, seed, out ? std::optional<std::filesystem::path>(*out) : std::nullopt);
    memtax::run_command(command, cfg);
  } catch (const memtax::ConfigError& e) {
    std::cerr << "memtax " << command << ": config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "memtax " << command << ": error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
