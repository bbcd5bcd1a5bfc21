#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace microtrap::cli {

enum ExitCode : int { kSuccess = 0, kRuntimeError = 1, kConfigError = 2 };

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace microtrap::cli
