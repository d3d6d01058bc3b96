#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mfg/common.hpp"

namespace mfg {

/// Invalid experiment configuration; the message names the offending field.
class ConfigError : public MfgError {
 public:
  using MfgError::MfgError;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitFlagged = 2;

std::vector<std::string> experiment_modes();

struct ExperimentOptions {
  std::string mode;  // empty: taken from the config
  nlohmann::json config = nlohmann::json::object();
  std::optional<std::uint64_t> seed;  // overrides the config seed
  std::string out_dir = "out";
  int workers = 0;  // 0 keeps the current worker count
};

struct ExperimentResult {
  int exit_code = kExitOk;
  std::string status;  // ok, flagged or error
  std::string message;
  nlohmann::json summary = nlohmann::json::object();
  std::vector<std::string> outputs;  // files written besides the manifest
};

/// Runs one experiment and writes its artifacts and manifest.json into out_dir.
/// Never throws: hard errors become exit code 1 with a manifest when possible.
ExperimentResult run_experiment(const ExperimentOptions& options);

/// Git blob hash: SHA-1 of "blob <size>\0" followed by the content, in hex.
std::string git_blob_sha1(std::string_view content);

/// Parses a JSON config file; throws ConfigError on unreadable or malformed input.
nlohmann::json load_config_file(const std::string& path);

}  // namespace mfg
