#include "dyslab/error.hpp"

namespace dyslab {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::ShapeOverflow: return "ShapeOverflow";
    case ErrorCode::ValueOutOfRange: return "ValueOutOfRange";
    case ErrorCode::EmptySignal: return "EmptySignal";
    case ErrorCode::BadRange: return "BadRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::ArchMismatch: return "ArchMismatch";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::MixedFeatureShapes: return "MixedFeatureShapes";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::NotAConvLayer: return "NotAConvLayer";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace dyslab
