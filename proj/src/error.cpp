#include "error.hpp"

namespace ckz {

const char* error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Ok: return "Ok";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::StepMismatch: return "StepMismatch";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::SymbolOutOfRange: return "SymbolOutOfRange";
    case ErrorCode::PositionOutOfPlane: return "PositionOutOfPlane";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::BitstreamExhausted: return "BitstreamExhausted";
    case ErrorCode::HeaderCorrupt: return "HeaderCorrupt";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IOFailure: return "IOFailure";
    case ErrorCode::VerificationFailed: return "VerificationFailed";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

bool is_format_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BadMagic:
    case ErrorCode::UnsupportedVersion:
    case ErrorCode::TruncatedPayload:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::SymbolOutOfRange:
    case ErrorCode::BitstreamExhausted:
    case ErrorCode::HeaderCorrupt:
    case ErrorCode::ChecksumMismatch:
      return true;
    default:
      return false;
  }
}

}  // namespace ckz
