#pragma once

#include <iosfwd>

namespace stereosparse {

/// The stereosparse command line: parses argv, runs the subcommand, and
/// reports the exit code (0 success, 1 runtime error, 2 usage error).
/// Data goes to `out` and files; diagnostics go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stereosparse
