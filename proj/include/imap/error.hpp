#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace imap {

// Stable error categories. The CLI prints these names on stderr.
enum class ErrorCode {
  kMissingFile,
  kSchemaViolation,
  kGeometryError,
  kChunkMissing,
  kShapeMismatch,
  kCorruptPayload,
  kNonFiniteData,
  kIoError,
  kHeadOutOfRange,
  kNumericalDivergence,
  kEmptyTimestepSet,
  kSingleFrame,
  kEmptyLayerSet,
  kConceptNotInManifest,
  kConceptAttnUnavailable,
  kEmptyConceptList,
  kWindowTooLarge,
  kMissingMask,
  kSpecError,
  kTileMismatch,
  kInvalidArgument,
};

std::string_view error_category(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }
  std::string_view category() const { return error_category(code_); }

 private:
  ErrorCode code_;
};

}  // namespace imap
