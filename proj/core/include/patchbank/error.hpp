#pragma once

#include <stdexcept>
#include <string>

namespace patchbank {

enum class ErrorCode {
  kMissingFile,
  kUnsupportedFormat,
  kCorruptData,
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kDimensionOverflow,
  kShapeMismatch,
  kInvalidArgument,
  kEmptyInput,
  kUndefinedMetric,
  kUnsatisfiable,
  kIo,
  kInvariantViolation,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace patchbank
