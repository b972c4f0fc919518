#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace superpose {

enum class ErrorKind {
  SyntaxError,
  IndexOutOfRange,
  DuplicateIndex,
  DuplicateOutput,
  ArityError,
  DimensionMismatch,
  InvalidParams,
  EmptyColumn,
  MidRangeValue,
  InfluenceViolation,
  EmptyOverlap,
  TooManySuperHeavies,
  ConstructionFailed,
  TooManyActive,
  VersionMismatch,
  ChecksumMismatch,
  MalformedFile,
  CoverageFailure,
  InfeasibleSizes,
  IoError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SyntaxError: return "SyntaxError";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::DuplicateIndex: return "DuplicateIndex";
    case ErrorKind::DuplicateOutput: return "DuplicateOutput";
    case ErrorKind::ArityError: return "ArityError";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::EmptyColumn: return "EmptyColumn";
    case ErrorKind::MidRangeValue: return "MidRangeValue";
    case ErrorKind::InfluenceViolation: return "InfluenceViolation";
    case ErrorKind::EmptyOverlap: return "EmptyOverlap";
    case ErrorKind::TooManySuperHeavies: return "TooManySuperHeavies";
    case ErrorKind::ConstructionFailed: return "ConstructionFailed";
    case ErrorKind::TooManyActive: return "TooManyActive";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::MalformedFile: return "MalformedFile";
    case ErrorKind::CoverageFailure: return "CoverageFailure";
    case ErrorKind::InfeasibleSizes: return "InfeasibleSizes";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace superpose
