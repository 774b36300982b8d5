#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kcd {

// Error taxonomy shared by the whole pipeline. The CLI maps categories to
// exit codes, so every throw site picks the category deliberately.
enum class ErrorCategory {
  FormatError,          // malformed container (bad magic, header, dtype)
  UnsupportedLayout,    // well-formed but rejected layout (fortran order, ...)
  InvalidValue,         // NaN/Inf or out-of-domain payload
  IoError,              // filesystem failure
  ShapeMismatch,        // incompatible dimensions between operands
  InsufficientSamples,  // statistic undefined at this sample count
  SingularSystem,       // normal equations not solvable
  DivergenceError,      // non-finite loss during training
  ConfigError,          // bad user configuration
  PartitionError,       // class set not divisible into K blocks
  EmptyClass,           // a class has no samples
  Internal,
};

inline std::string_view to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::FormatError: return "FormatError";
    case ErrorCategory::UnsupportedLayout: return "UnsupportedLayout";
    case ErrorCategory::InvalidValue: return "InvalidValue";
    case ErrorCategory::IoError: return "IoError";
    case ErrorCategory::ShapeMismatch: return "ShapeMismatch";
    case ErrorCategory::InsufficientSamples: return "InsufficientSamples";
    case ErrorCategory::SingularSystem: return "SingularSystem";
    case ErrorCategory::DivergenceError: return "DivergenceError";
    case ErrorCategory::ConfigError: return "ConfigError";
    case ErrorCategory::PartitionError: return "PartitionError";
    case ErrorCategory::EmptyClass: return "EmptyClass";
    case ErrorCategory::Internal: return "Internal";
  }
  return "Internal";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(std::string(to_string(category)) + ": " + message),
        category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

}  // namespace kcd
