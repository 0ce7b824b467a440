#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace memcal {

/// Exit statuses of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitInput = 1, kExitInfeasible = 2, kExitSolver = 3 };

/// Runs one command line (program name excluded). Data goes to `out`,
/// diagnostics and errors to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace memcal
