#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace streamgemm {

enum class ErrorCode {
  EmptyConfig,
  MissingNetHeader,
  UnknownSection,
  NonIntegralOutputDim,
  MissingRequiredKey,
  InvalidValue,
  TruncatedFile,
  TrailingBytes,
  BadHeader,
  NegativeVariance,
  DimMismatch,
  BudgetExceeded,
  InvalidPreset,
  UnsupportedLayer,
  SchemaMismatch,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so that
/// callers (CLI exit codes, Python bindings, tests) can branch on the kind.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyConfig: return "EmptyConfig";
    case ErrorCode::MissingNetHeader: return "MissingNetHeader";
    case ErrorCode::UnknownSection: return "UnknownSection";
    case ErrorCode::NonIntegralOutputDim: return "NonIntegralOutputDim";
    case ErrorCode::MissingRequiredKey: return "MissingRequiredKey";
    case ErrorCode::InvalidValue: return "InvalidValue";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::TrailingBytes: return "TrailingBytes";
    case ErrorCode::BadHeader: return "BadHeader";
    case ErrorCode::NegativeVariance: return "NegativeVariance";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::InvalidPreset: return "InvalidPreset";
    case ErrorCode::UnsupportedLayer: return "UnsupportedLayer";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace streamgemm
