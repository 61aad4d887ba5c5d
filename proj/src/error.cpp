#include "imap/error.hpp"

namespace imap {

std::string_view error_category(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kGeometryError: return "GeometryError";
    case ErrorCode::kChunkMissing: return "ChunkMissing";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kCorruptPayload: return "CorruptPayload";
    case ErrorCode::kNonFiniteData: return "NonFiniteData";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kHeadOutOfRange: return "HeadOutOfRange";
    case ErrorCode::kNumericalDivergence: return "NumericalDivergence";
    case ErrorCode::kEmptyTimestepSet: return "EmptyTimestepSet";
    case ErrorCode::kSingleFrame: return "SingleFrame";
    case ErrorCode::kEmptyLayerSet: return "EmptyLayerSet";
    case ErrorCode::kConceptNotInManifest: return "ConceptNotInManifest";
    case ErrorCode::kConceptAttnUnavailable: return "ConceptAttnUnavailable";
    case ErrorCode::kEmptyConceptList: return "EmptyConceptList";
    case ErrorCode::kWindowTooLarge: return "WindowTooLarge";
    case ErrorCode::kMissingMask: return "MissingMask";
    case ErrorCode::kSpecError: return "SpecError";
    case ErrorCode::kTileMismatch: return "TileMismatch";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace imap
