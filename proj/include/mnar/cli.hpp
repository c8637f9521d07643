#pragma once
// Command-line front end: fit, simulate, example1-check.

#include <ostream>
#include <string>
#include <vector>

#include "mnar/error.hpp"

namespace mnar {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitConvergence = 3,
  kExitPositivity = 4,
  kExitNotEquivalent = 5,
};

int exit_code_for(ErrorCode code);

// `args` excludes the program name. Human-readable tables go to `out`, the
// single-line diagnostic to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mnar
