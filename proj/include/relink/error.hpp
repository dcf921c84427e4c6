#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace relink {

enum class ErrorCode {
  Io,
  FileNotFound,
  MalformedLine,
  DimensionMismatch,
  DuplicateToken,
  CorruptStore,
  CorruptModel,
  EmptyStore,
  EmptyTrainingSet,
  OutOfBounds,
  Overlap,
  DuplicateSpan,
  UnknownSpan,
  NonFinite,
  DegenerateCalibration,
  InvalidArgument,
};

std::string_view error_code_name(ErrorCode code);

// True for errors caused by user-supplied input (bad files, bad spans),
// as opposed to internal failures.
bool is_input_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace relink
