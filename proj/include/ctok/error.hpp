#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ctok {

enum class ErrorCode {
  InvalidArgument,
  UnknownToken,
  RankTooLarge,
  DegenerateInput,
  DimensionMismatch,
  EmptyCandidates,
  ZeroVector,
  SlotMissing,
  InvalidTemplate,
  SequenceTooLong,
  BadImage,
  EmptyAttributes,
  WeightOutOfRange,
  EmptyBatch,
  OneClassMissing,
  EmptyTrainingSet,
  NonFiniteLoss,
  NoWeights,
  EmptyIndex,
  EmptyInput,
  DuplicateId,
  NoImages,
  UnknownConcept,
  UnknownJob,
  UnknownIndex,
  ConceptBusy,
  UnsupportedBackbone,
  SchemaViolation,
  Io,
  Format,
};

std::string_view to_string(ErrorCode code);

// Every library failure surfaces as ctok::Error; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ctok
