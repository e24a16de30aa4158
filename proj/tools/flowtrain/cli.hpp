#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace flowrbm::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kRuntimeFailure = 2,
};

/// Runs the `flowtrain` command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flowrbm::cli
