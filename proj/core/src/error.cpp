#include "airad/error.hpp"

namespace airad {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::UnsupportedTiffFeature: return "UnsupportedTiffFeature";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::ObliqueAffine: return "ObliqueAffine";
    case ErrorCode::ConstantVolume: return "ConstantVolume";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::AlreadyPreprocessed: return "AlreadyPreprocessed";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingWeights: return "MissingWeights";
    case ErrorCode::ModelLoadError: return "ModelLoadError";
    case ErrorCode::StepOutOfRange: return "StepOutOfRange";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::EmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::SpecOverlap: return "SpecOverlap";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::BindFailure: return "BindFailure";
  }
  return "Unknown";
}

}  // namespace airad
