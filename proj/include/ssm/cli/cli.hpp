#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ssm::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kNumericError = 3,
};

// Runs one subcommand. args excludes the program name. Machine output goes
// to `out`, diagnostics and the resolved-config echo to `err`; `in` feeds
// `stream --input -`.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in);

}  // namespace ssm::cli
