#pragma once

#include <stdexcept>
#include <string>

namespace celltrack {

// Malformed file contents (bad magic, truncation, syntax). Messages carry the
// path and, where known, the byte offset or line number.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration values or infeasible generator setups.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Cross-artifact disagreement, e.g. mask labels not covered by track records.
class ConsistencyError : public std::runtime_error {
 public:
  explicit ConsistencyError(const std::string& what) : std::runtime_error(what) {}
};

// A violated internal invariant; maps to exit code 3 in the CLI.
class InvariantError : public std::logic_error {
 public:
  explicit InvariantError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace celltrack
