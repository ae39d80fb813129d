#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace arthromap {

/// Failure categories. The numeric values double as CLI exit codes.
enum class ErrorCode : int {
  kDomain = 10,
  kNonPositiveDepth = 11,
  kDimensionMismatch = 12,
  kDegenerateSize = 13,
  kLengthMismatch = 14,
  kTimestampMismatch = 15,
  kEmptyInput = 16,
  kUnknownLabel = 17,
  kDegenerateDepth = 18,
  kIo = 20,
  kMissingFile = 21,
  kParse = 22,
  kMalformedConfig = 23,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDomain: return "domain_error";
    case ErrorCode::kNonPositiveDepth: return "non_positive_depth";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kDegenerateSize: return "degenerate_size";
    case ErrorCode::kLengthMismatch: return "length_mismatch";
    case ErrorCode::kTimestampMismatch: return "timestamp_mismatch";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kUnknownLabel: return "unknown_label";
    case ErrorCode::kDegenerateDepth: return "degenerate_depth";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kMissingFile: return "missing_file";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kMalformedConfig: return "malformed_config";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace arthromap
