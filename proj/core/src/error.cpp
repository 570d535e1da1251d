#include "patchbank/error.hpp"

namespace patchbank {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kMissingFile: return "missing-file";
    case ErrorCode::kUnsupportedFormat: return "unsupported-format";
    case ErrorCode::kCorruptData: return "corrupt-data";
    case ErrorCode::kBadMagic: return "bad-magic";
    case ErrorCode::kVersionMismatch: return "version-mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kDimensionOverflow: return "dimension-overflow";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kEmptyInput: return "empty-input";
    case ErrorCode::kUndefinedMetric: return "undefined-metric";
    case ErrorCode::kUnsatisfiable: return "unsatisfiable";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kInvariantViolation: return "invariant-violation";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace patchbank
