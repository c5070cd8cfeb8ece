#pragma once

#include <stdexcept>
#include <string>

namespace tdg {

enum class ErrorCode {
  InvalidParameter,
  EmptyInput,
  InvalidScene,
  ContractViolation,
  InvalidInput,
  InvalidConfig,
  InvalidState,
  Parse,
  UnsupportedModel,
  UnsupportedFormat,
  Io,
  IncompatibleCheckpoint,
};

const char* to_string(ErrorCode code) noexcept;

/// Single exception type for the library; `code()` tells callers which
/// contract was broken so the CLI can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tdg
