#include "geoinv/core/error.hpp"

namespace geoinv {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::InvalidBounds: return "invalid-bounds";
    case ErrorCode::Domain: return "domain";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::SingularGeometry: return "singular-geometry";
    case ErrorCode::DegenerateCell: return "degenerate-cell";
    case ErrorCode::NearField: return "near-field";
    case ErrorCode::Resolution: return "resolution";
    case ErrorCode::Numeric: return "numeric";
    case ErrorCode::Io: return "io";
    case ErrorCode::Format: return "format";
    case ErrorCode::Config: return "config";
  }
  return "unknown";
}

}  // namespace geoinv
