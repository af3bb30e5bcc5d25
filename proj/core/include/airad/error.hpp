#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace airad {

enum class ErrorCode {
  IoFailure,
  BadMagic,
  UnsupportedDatatype,
  TruncatedFile,
  EmptyInput,
  UnsupportedTiffFeature,
  InvalidLabel,
  ObliqueAffine,
  ConstantVolume,
  ZeroVariance,
  AlreadyPreprocessed,
  InvalidArgument,
  ShapeMismatch,
  MissingWeights,
  ModelLoadError,
  StepOutOfRange,
  TooFewRecords,
  EmptyGroundTruth,
  EmptyMask,
  MalformedLine,
  SpecOverlap,
  InvalidSpec,
  BindFailure,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix that what() carries.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace airad
