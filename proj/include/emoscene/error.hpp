#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace emoscene {

enum class ErrorCode {
  MalformedSyntax,
  SchemaViolation,
  IoError,
  DecodeError,
  ConfigError,
  DegenerateImage,
  NoModels,
  NoSources,
  ZeroVariance,
  DegenerateInput,
  WeightOutOfRange,
  LengthMismatch,
  EmptyInput,
  DimensionMismatch,
  ZeroVector,
  AllAnchorsSkipped,
  NonFiniteComponent,
  AlreadyFinalized,
  MissingRationale,
  IncompleteDecision,
  InvalidVerdict,
  UnknownItem,
  ReplayMismatch,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedSyntax: return "MalformedSyntax";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::DegenerateImage: return "DegenerateImage";
    case ErrorCode::NoModels: return "NoModels";
    case ErrorCode::NoSources: return "NoSources";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::WeightOutOfRange: return "WeightOutOfRange";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::AllAnchorsSkipped: return "AllAnchorsSkipped";
    case ErrorCode::NonFiniteComponent: return "NonFiniteComponent";
    case ErrorCode::AlreadyFinalized: return "AlreadyFinalized";
    case ErrorCode::MissingRationale: return "MissingRationale";
    case ErrorCode::IncompleteDecision: return "IncompleteDecision";
    case ErrorCode::InvalidVerdict: return "InvalidVerdict";
    case ErrorCode::UnknownItem: return "UnknownItem";
    case ErrorCode::ReplayMismatch: return "ReplayMismatch";
  }
  return "Unknown";
}

// Every failure in the library is reported as an Error carrying a code and,
// where one exists, the name of the offending field, series or path.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string field, const std::string& reason)
      : std::runtime_error(compose(code, field, reason)),
        code_(code),
        field_(std::move(field)),
        reason_(reason) {}

  Error(ErrorCode code, const std::string& reason) : Error(code, std::string{}, reason) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  static std::string compose(ErrorCode code, const std::string& field, const std::string& reason) {
    std::string out{to_string(code)};
    if (!field.empty()) out += "(" + field + ")";
    if (!reason.empty()) out += ": " + reason;
    return out;
  }

  ErrorCode code_;
  std::string field_;
  std::string reason_;
};

}  // namespace emoscene
