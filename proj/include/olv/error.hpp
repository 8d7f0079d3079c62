#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace olv {

enum class ErrorCode {
  ConfigInvalid,
  DisplacementTooLarge,
  ZeroSeparation,
  BoxTooSmall,
  NonFiniteForce,
  TooFewSamples,
  InconsistentLog,
  QuadratureNotConverged,
  TooFewInsertions,
  TooFewEvents,
  CFLViolation,
  NegativeDensity,
  GridMismatch,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so that
// callers (and the CLI exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace olv
