#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sfl::cli {

/// Exit statuses. Library errors use their ErrorCategory value (3..7).
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `sfl` tool. `args` excludes the program name.
int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Quick invariant checks; one line per check on `out`. Returns the number
/// of failures.
int run_selftest(std::ostream& out);

}  // namespace sfl::cli
