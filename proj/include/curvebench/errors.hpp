#pragma once

#include <stdexcept>
#include <string>

namespace curvebench {

// Numerical failures (divergence, degenerate operators, non-convergence
// where convergence is required). The CLI maps these to exit code 3.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Bad user-facing input: config keys, file paths, malformed files.
// The CLI maps these to exit code 2.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed binary/text artifact files (bad magic, truncation, ...).
class FormatError : public ConfigError {
public:
  explicit FormatError(const std::string& what) : ConfigError(what) {}
};

}  // namespace curvebench
