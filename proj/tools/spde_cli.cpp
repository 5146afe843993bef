#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "spde/io.hpp"

namespace {

void apply_env_overrides(spde::RunConfig& cfg) {
  if (const char* dir = std::getenv("SPDE_OUTPUT_DIR")) cfg.output.directory = dir;
  if (const char* w = std::getenv("SPDE_WORKERS")) {
    const int workers = std::atoi(w);
    if (workers > 0) {
      cfg.tails.workers = cfg.stable.workers = cfg.pitchfork.workers =
          cfg.perp.workers = cfg.probe.workers = workers;
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pseudospectral simulation and concentration experiments for "
               "Wick-renormalised slowly time-dependent SPDEs on the 2-D torus"};
  app.require_subcommand(1);

  std::string config_path, manifest_path;
  bool quick = false;

  CLI::App* run = app.add_subcommand("run", "run an experiment from a config file");
  run->add_option("config", config_path, "key = value config file")->required();

  CLI::App* report = app.add_subcommand("report", "summarise a finished run");
  report->add_option("manifest", manifest_path, "manifest.json of the run")->required();

  CLI::App* self = app.add_subcommand("selftest", "run the built-in oracle suite");
  self->add_flag("--quick", quick, "reduced sample counts");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      spde::RunConfig cfg = spde::load_config(config_path);
      apply_env_overrides(cfg);
      return spde::run_experiment(cfg, std::cout);
    }
    if (report->parsed()) return spde::report_command(manifest_path, std::cout);
    return spde::selftest(quick, std::cout);
  } catch (const spde::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
