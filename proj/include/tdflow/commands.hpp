#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tdflow {

struct CommandOptions {
  std::string command;  // train | eval | gamma-sweep | variance-probe | transport-probe | plan | oracle | plot
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<int> steps;                          // train only
  std::optional<std::filesystem::path> checkpoint;   // overrides the config's checkpoint
  std::optional<std::filesystem::path> input{};      // plot only: overrides plot.csv
};

const std::vector<std::string>& command_names();

/// Runs one command in a fresh directory `<root>/<run-id>/` and returns that directory.
/// The output root is, in order: options.out, $TDFLOW_OUT, the config's out_dir, "runs".
std::filesystem::path run_command(const CommandOptions& options);

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitNumeric = 3, kExitIo = 4 };

/// Exit code for an exception thrown by run_command.
int exit_code_for(const std::exception& e);

}  // namespace tdflow
