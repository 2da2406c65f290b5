#pragma once

#include <iostream>

namespace twophase::cli {

/// Exit codes: 0 success, 2 usage or invalid parameter, 3 unreadable or
/// malformed input data, 4 solver failure.
enum ExitCode : int { kOk = 0, kUsage = 2, kInputData = 3, kSolver = 4 };

/// Entry point for the `twophase` executable. Subcommands: mesh, expand,
/// optimize, eval, export.
int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace twophase::cli
