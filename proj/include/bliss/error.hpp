#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bliss {

enum class ErrorCode {
  ZeroVector,
  DimMismatch,
  KTooLarge,
  EmptyInput,
  NotNormalized,
  NonFinite,
  DuplicateId,
  UnknownLabel,
  UnknownClass,
  EmptyClass,
  EmptyDictionary,
  MissingDictStats,
  OneClassOnly,
  LengthMismatch,
  DegenerateBucket,
  InvalidSplit,
  InvalidConfig,
  EmptyMatrix,
  BadMagic,
  VersionUnsupported,
  HashMismatch,
  TruncatedPayload,
  ManifestInvalid,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::EmptyDictionary: return "EmptyDictionary";
    case ErrorCode::MissingDictStats: return "MissingDictStats";
    case ErrorCode::OneClassOnly: return "OneClassOnly";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DegenerateBucket: return "DegenerateBucket";
    case ErrorCode::InvalidSplit: return "InvalidSplit";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::HashMismatch: return "HashMismatch";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::ManifestInvalid: return "ManifestInvalid";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Filesystem failures, as opposed to content that failed validation.
constexpr bool is_io_error(ErrorCode code) noexcept {
  return code == ErrorCode::IoError;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace bliss
