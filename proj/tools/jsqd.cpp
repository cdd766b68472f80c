// jsqd: run experiment configs, derive plot data, and run the built-in self-test.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "jsqd/experiment.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"JSQ(d) large-deviation experiments"};
  app.require_subcommand(1);

  std::string config, out_dir;
  auto* run = app.add_subcommand("run", "run the experiment described by a JSON config");
  run->add_option("config", config, "config file")->required();
  run->add_option("--out", out_dir, "output directory (overrides output_dir)");

  std::string results, plot_out;
  auto* plot = app.add_subcommand("plot-data", "write series,x,y,stderr CSV from a results.json");
  plot->add_option("results", results, "results.json")->required();
  plot->add_option("--out", plot_out, "output CSV (default: plot_data.csv next to the input)");

  std::string self_dir = "jsqd-selftest";
  auto* self = app.add_subcommand("selftest", "run the built-in battery of small studies");
  self->add_option("--out", self_dir, "scratch directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : jsqd::kExitConfig;
  }

  try {
    if (*run) {
      auto cfg = jsqd::load_config(config);
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      const auto outcome = jsqd::run_experiment(cfg, std::cout);
      std::cout << "wrote " << outcome.results.string() << "\n";
      return outcome.exit_code;
    }
    if (*plot) {
      const fs::path out = plot_out.empty() ? fs::path(results).parent_path() / "plot_data.csv" : fs::path(plot_out);
      jsqd::emit_plot_data(results, out);
      std::cout << "wrote " << out.string() << "\n";
      return jsqd::kExitOk;
    }
    return jsqd::run_selftest(self_dir, std::cout);
  } catch (const jsqd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return jsqd::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
