#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lenopt/config.hpp"

namespace lenopt::cli {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitInput = 2, kExitNumeric = 3, kExitIo = 4 };

/// Parsed command line. Optional fields fall back to the config file.
struct CommandOptions {
  std::string command;  // train, search, eval, plot, export
  std::optional<std::string> config_path;
  std::optional<std::string> pipeline;
  std::optional<std::string> strategy;
  std::optional<int> budget;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> lengths;
  std::optional<std::string> checkpoint;
  std::optional<std::string> task;
  std::optional<double> full_f1;  // plot: full-model F1 in points
  int wall_clock_repeats = 0;     // eval: 0 disables timing
  std::vector<std::string> inputs;  // plot: CSV files
  std::string out;
  /// Resolved configuration recorded in a manifest; takes precedence over config_path.
  std::optional<nlohmann::json> config_snapshot;
};

nlohmann::json options_to_json(const CommandOptions& options);
CommandOptions options_from_json(const nlohmann::json& j);

/// Config file (or defaults) with the flag overrides applied.
RunConfig resolve_config(const CommandOptions& options);

/// Where a command writes its manifest: <out>/manifest.json for directory
/// outputs, <out stem>.manifest.json next to single-file outputs.
std::filesystem::path manifest_path(const CommandOptions& options);

/// Runs one command. Library exceptions propagate; see run_cli for codes.
void run_command(const CommandOptions& options, std::ostream& out);

/// Re-runs the command recorded in a manifest, optionally into another output.
void replay_manifest(const std::filesystem::path& manifest, const std::optional<std::string>& out_override,
                     std::ostream& out);

/// Full command-line entry point; maps exceptions onto ExitCode.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lenopt::cli
