#include "olv/error.hpp"

namespace olv {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::DisplacementTooLarge: return "DisplacementTooLarge";
    case ErrorCode::ZeroSeparation: return "ZeroSeparation";
    case ErrorCode::BoxTooSmall: return "BoxTooSmall";
    case ErrorCode::NonFiniteForce: return "NonFiniteForce";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::InconsistentLog: return "InconsistentLog";
    case ErrorCode::QuadratureNotConverged: return "QuadratureNotConverged";
    case ErrorCode::TooFewInsertions: return "TooFewInsertions";
    case ErrorCode::TooFewEvents: return "TooFewEvents";
    case ErrorCode::CFLViolation: return "CFLViolation";
    case ErrorCode::NegativeDensity: return "NegativeDensity";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace olv
