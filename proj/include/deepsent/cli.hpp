#pragma once

// Command-line driver. Subcommands: ingest, train, eval, probe, cluster,
// pca, oasis, gradcheck.

#include <string>
#include <vector>

namespace deepsent {

enum ExitCode : int {
  kExitOk = 0,
  kExitIo = 2,
  kExitConfig = 3,
  kExitTraining = 4,
  kExitCheckpoint = 5,
  kExitAnalysis = 6,
  kExitGradcheck = 7,
};

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

/// Parses a flat `key = value` config file (# comments, blank lines
/// allowed). Keys may use '-' or '_'.
std::vector<std::pair<std::string, std::string>> parse_flat_config(const std::string& text);

}  // namespace deepsent
