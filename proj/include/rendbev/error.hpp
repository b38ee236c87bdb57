// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace rendbev {

/// Failure categories. Values double as process exit codes in the CLI.
enum class ErrorKind : int {
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Invalid parameters, out-of-domain arguments, bad configuration.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

/// Argument outside an operation's mathematical domain (bad pixel, bad class index).
class DomainError : public ConfigError {
 public:
  explicit DomainError(const std::string& what) : ConfigError(what) {}
};

/// Unreadable, malformed, or missing input data.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

/// Every ray of a run was filtered, so nothing could be optimized.
class NoSupervisionError : public DataError {
 public:
  explicit NoSupervisionError(const std::string& what) : DataError(what) {}
};

/// Non-finite values appeared during optimization.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::kNumeric, what) {}
};

}  // namespace rendbev
