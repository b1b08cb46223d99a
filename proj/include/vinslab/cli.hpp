#pragma once

#include <ostream>

namespace vinslab {

/// Exit statuses of run_cli.
enum ExitStatus : int {
  exit_ok = 0,
  exit_failure = 1,
  exit_config = 2,
  exit_dependency = 3,
};

/// `vinslab <command> [--config FILE] [--set key=value]... [--jobs N]`.
/// Artifacts go under the configured output directory, one subdirectory per
/// command, each with the resolved configuration in config.txt.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vinslab
