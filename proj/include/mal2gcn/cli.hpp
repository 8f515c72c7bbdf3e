#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mal2gcn::cli {

inline constexpr std::string_view kToolVersion = "mal2gcn-0.1.0";

// Stable exit codes.
enum ExitCode : int {
  kOk = 0,
  kUsageError = 1,
  kDataError = 2,
  kCheckFailed = 3,
};

// Entry point shared by the binary and the tests. `args` excludes the program
// name. Diagnostics go to `err` as one line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mal2gcn::cli
