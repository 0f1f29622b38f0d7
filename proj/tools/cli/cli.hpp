#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace understory::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kInputFormat = 3, kInvariant = 4, kNumeric = 5 };

/// Runs one command line (without the program name). Logs go to `out`,
/// the one-line error report to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace understory::cli
