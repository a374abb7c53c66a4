#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cdpkit::cli {

enum ExitCode : int {
  kOk = 0,
  kInvalid = 2,
  kRejected = 3,
  kWeightMismatch = 4,
  kVerifyFailed = 5,
};

/// Runs one command line (arguments after the program name) and returns the
/// process exit code. Reports go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cdpkit::cli
