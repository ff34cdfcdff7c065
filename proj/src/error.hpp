#pragma once

#include <stdexcept>
#include <string>

namespace ckz {

// Numeric values are part of the C API (ckz_status) and must stay in sync.
enum class ErrorCode : int {
  Ok = 0,
  BadMagic = 1,
  UnsupportedVersion = 2,
  TruncatedPayload = 3,
  ShapeMismatch = 4,
  StepMismatch = 5,
  NonFiniteInput = 6,
  SymbolOutOfRange = 7,
  PositionOutOfPlane = 8,
  NonFiniteGradient = 9,
  BitstreamExhausted = 10,
  HeaderCorrupt = 11,
  ChecksumMismatch = 12,
  NonFiniteLoss = 13,
  InvalidArgument = 14,
  IOFailure = 15,
  VerificationFailed = 16,
  Internal = 17,
};

const char* error_name(ErrorCode code) noexcept;

/// True for the codes that indicate a malformed or corrupted file.
bool is_format_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ckz
