#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace symphony {

enum class ErrorCode {
  // actions
  UnknownAction,
  ArityError,
  NoActionBlock,
  MissingCoordinates,
  DisallowedVariant,
  FieldInvariantViolation,
  // trajectory
  EpisodeClosed,
  IndexMismatch,
  // features / loop detection
  DegenerateImage,
  DimensionMismatch,
  // reflection
  PointOutOfBounds,
  UnparseableVerdict,
  ProtocolParseError,
  InconsistentVerdict,
  // orchestrator
  ParseError,
  // tool agents
  GroundingRefused,
  PhraseNotFound,
  AmbiguousSelection,
  Precondition,
  // backends
  BackendError,
  Timeout,
  RateLimited,
  SchemaError,
  UnsupportedCapability,
  PrimitiveFailure,
  EnvironmentError,
  // harness
  InsufficientRuns,
  CorruptLog,
  ConfigError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownAction: return "UnknownAction";
    case ErrorCode::ArityError: return "ArityError";
    case ErrorCode::NoActionBlock: return "NoActionBlock";
    case ErrorCode::MissingCoordinates: return "MissingCoordinates";
    case ErrorCode::DisallowedVariant: return "DisallowedVariant";
    case ErrorCode::FieldInvariantViolation: return "FieldInvariantViolation";
    case ErrorCode::EpisodeClosed: return "EpisodeClosed";
    case ErrorCode::IndexMismatch: return "IndexMismatch";
    case ErrorCode::DegenerateImage: return "DegenerateImage";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::PointOutOfBounds: return "PointOutOfBounds";
    case ErrorCode::UnparseableVerdict: return "UnparseableVerdict";
    case ErrorCode::ProtocolParseError: return "ProtocolParseError";
    case ErrorCode::InconsistentVerdict: return "InconsistentVerdict";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::GroundingRefused: return "GroundingRefused";
    case ErrorCode::PhraseNotFound: return "PhraseNotFound";
    case ErrorCode::AmbiguousSelection: return "AmbiguousSelection";
    case ErrorCode::Precondition: return "Precondition";
    case ErrorCode::BackendError: return "BackendError";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::UnsupportedCapability: return "UnsupportedCapability";
    case ErrorCode::PrimitiveFailure: return "PrimitiveFailure";
    case ErrorCode::EnvironmentError: return "EnvironmentError";
    case ErrorCode::InsufficientRuns: return "InsufficientRuns";
    case ErrorCode::CorruptLog: return "CorruptLog";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

inline ErrorCode error_code_from_string(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::ConfigError); ++i) {
    auto code = static_cast<ErrorCode>(i);
    if (to_string(code) == name) return code;
  }
  return ErrorCode::EnvironmentError;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace symphony
