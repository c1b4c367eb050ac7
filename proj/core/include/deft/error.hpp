#pragma once

#include <stdexcept>
#include <string>

namespace deft {

// Process exit codes used by the CLI. Library errors map onto these so
// callers can translate an exception into a stable exit status.
enum class ErrorCode : int {
  config = 2,
  data = 3,
  numeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// Invalid configuration or argument combination supplied by the caller.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCode::config, what) {}
};

/// Vector or matrix shapes do not agree.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ErrorCode::data, what) {}
};

/// Input that is structurally valid but numerically unusable (zero norm,
/// all-identical samples, ...).
class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& what) : Error(ErrorCode::data, what) {}
};

class EmptyInputError : public Error {
 public:
  explicit EmptyInputError(const std::string& what) : Error(ErrorCode::data, what) {}
};

/// File contents do not match the declared format. Messages carry the byte
/// offset of the offending record where known.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(ErrorCode::data, what) {}
};

/// Parsed data violates a dataset invariant (non-finite values, label out of
/// range, ...).
class DataValidationError : public Error {
 public:
  explicit DataValidationError(const std::string& what) : Error(ErrorCode::data, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::data, what) {}
};

/// Non-finite loss or gradient encountered during optimization.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(ErrorCode::numeric, what) {}
};

/// Iterative calibration failed to reach its target.
class CalibrationError : public Error {
 public:
  explicit CalibrationError(const std::string& what) : Error(ErrorCode::numeric, what) {}
};

}  // namespace deft
