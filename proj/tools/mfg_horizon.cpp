#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mfg/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Mean-field game horizon lab"};
  std::string mode;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  int workers = 0;
  std::string modes;
  for (const auto& m : mfg::experiment_modes()) modes += (modes.empty() ? "" : ", ") + m;
  app.add_option("mode", mode, "Experiment mode: " + modes)->required();
  app.add_option("--config", config_path, "JSON config file")->required();
  app.add_option("--seed", seed, "Seed, overrides MFG_SEED and the config");
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  app.add_option("--workers", workers, "Worker threads (0 = hardware concurrency)")->check(CLI::NonNegativeNumber);
  CLI11_PARSE(app, argc, argv);

  mfg::ExperimentOptions options;
  options.mode = mode;
  options.out_dir = out_dir;
  options.workers = workers;
  try {
    options.config = mfg::load_config_file(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return mfg::kExitError;
  }
  if (seed) {
    options.seed = seed;
  } else if (const char* env = std::getenv("MFG_SEED")) {
    try {
      std::size_t used = 0;
      options.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      std::cerr << "error: MFG_SEED must be a non-negative integer\n";
      return mfg::kExitError;
    }
  }
  if (options.config.is_object() && options.config.contains("mode") && options.config["mode"] != mode) {
    std::cerr << "error: config field mode disagrees with the command line\n";
    return mfg::kExitError;
  }

  const mfg::ExperimentResult result = mfg::run_experiment(options);
  std::cout << "status: " << result.status << "\n";
  if (!result.message.empty()) std::cerr << (result.exit_code == mfg::kExitError ? "error: " : "") << result.message << "\n";
  if (!result.summary.empty()) std::cout << result.summary.dump(2) << "\n";
  for (const auto& f : result.outputs) std::cout << "wrote " << out_dir << "/" << f << "\n";
  std::cout << "wrote " << out_dir << "/manifest.json\n";
  return result.exit_code;
}
