#pragma once

#include <stdexcept>
#include <string>

namespace vblmm {

enum class ErrorCode {
  InvalidArgument,
  SingularBlock,
  SingularGroupSchur,
  SingularSchur,
  SingularMatrix,
  NonSpd,
  OutOfSupport,
  MissingColumn,
  RaggedGroup,
  NonNumeric,
  ConstantColumn,
  DimensionMismatch,
  NumericalBreakdown,
  TooFewDraws,
  GridTooNarrow,
  ConfigError,
  IoError,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SingularBlock: return "SingularBlock";
    case ErrorCode::SingularGroupSchur: return "SingularGroupSchur";
    case ErrorCode::SingularSchur: return "SingularSchur";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::NonSpd: return "NonSpd";
    case ErrorCode::OutOfSupport: return "OutOfSupport";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::RaggedGroup: return "RaggedGroup";
    case ErrorCode::NonNumeric: return "NonNumeric";
    case ErrorCode::ConstantColumn: return "ConstantColumn";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NumericalBreakdown: return "NumericalBreakdown";
    case ErrorCode::TooFewDraws: return "TooFewDraws";
    case ErrorCode::GridTooNarrow: return "GridTooNarrow";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace vblmm
