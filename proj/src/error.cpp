#include "relink/error.hpp"

namespace relink {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "Io";
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateToken: return "DuplicateToken";
    case ErrorCode::CorruptStore: return "CorruptStore";
    case ErrorCode::CorruptModel: return "CorruptModel";
    case ErrorCode::EmptyStore: return "EmptyStore";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::Overlap: return "Overlap";
    case ErrorCode::DuplicateSpan: return "DuplicateSpan";
    case ErrorCode::UnknownSpan: return "UnknownSpan";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DegenerateCalibration: return "DegenerateCalibration";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

bool is_input_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io:
    case ErrorCode::NonFinite:
      return false;
    default:
      return true;
  }
}

}  // namespace relink
