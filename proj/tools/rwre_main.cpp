#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "rwre/error.hpp"
#include "rwre/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Random walks in random environment with bounded jumps"};
  std::string experiment;
  std::string config_file;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int workers = 0;
  bool quiet = false;
  app.add_option("experiment", experiment, "walk | branching | lyapunov | kappa | pi | lln | tails | tran | collapse | uz-check | nu-tail")
      ->required()
      ->check(CLI::IsMember(rwre::experiment_names()));
  app.add_option("--config", config_file, "configuration file")->required()->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
  app.add_option("--out", out_dir, "output directory");
  auto* workers_opt = app.add_option("--workers", workers, "worker threads (overrides the config)")->check(CLI::Range(1, 256));
  app.add_flag("--quiet", quiet, "print nothing on success");
  app.set_version_flag("--version", rwre::version());
  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = rwre::ExperimentConfig::load(config_file);
    if (!cfg.experiment.empty() && cfg.experiment != experiment) {
      throw rwre::Error(rwre::ErrorKind::ConfigError,
                        "config names experiment '" + cfg.experiment + "' but '" + experiment + "' was requested");
    }
    cfg.experiment = experiment;
    if (*seed_opt) cfg.seed = seed;
    if (*workers_opt) cfg.workers = workers;
    const auto outcome = rwre::run(cfg, rwre::RunOptions{out_dir, quiet});
    if (!quiet || !outcome.all_passed) {
      std::printf("%s: %s (%s)\n", experiment.c_str(),
                  outcome.error ? "ERROR" : (outcome.all_passed ? "PASS" : "FAIL"), outcome.summary_file.c_str());
    }
    if (outcome.error) return 2;
    return outcome.all_passed ? 0 : 1;
  } catch (const rwre::Error& e) {
    std::cerr << "rwre: " << rwre::to_string(e.kind()) << ": " << e.what() << '\n';
    return e.kind() == rwre::ErrorKind::ConfigError ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "rwre: " << e.what() << '\n';
    return 2;
  }
}
