#pragma once

#include <stdexcept>
#include <string>

namespace nucfactor {

enum class ErrorKind {
  InvalidInput,
  DegenerateInput,
  NumericalFailure,
  TuningFailure,
  FormatError,
  ConfigError,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::TuningFailure: return "TuningFailure";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

// Every library failure is reported through this one exception type; callers
// branch on kind() rather than on a class hierarchy.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace nucfactor
