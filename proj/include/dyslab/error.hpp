#pragma once

#include <stdexcept>
#include <string>

namespace dyslab {

enum class ErrorCode {
  MissingFile,
  BadMagic,
  UnsupportedEncoding,
  TruncatedData,
  ShapeOverflow,
  ValueOutOfRange,
  EmptySignal,
  BadRange,
  ShapeMismatch,
  DuplicateName,
  ArchMismatch,
  EmptyClass,
  MixedFeatureShapes,
  TooSmall,
  OutOfRange,
  NotAConvLayer,
  LengthMismatch,
  Empty,
  EmptyReference,
  InvalidArgument,
  Io,
};

const char* to_string(ErrorCode code) noexcept;

/// Every recoverable failure in the library is reported as an Error. The code
/// lets callers (CLI exit status, HTTP status) react without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dyslab
