#pragma once

#include <string>
#include <vector>

namespace curvebench {

// Entry point of the curvebench tool. Exit codes: 0 success, 2 configuration
// or usage error, 3 numerical failure.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

extern const char* kToolVersion;

}  // namespace curvebench
