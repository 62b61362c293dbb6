#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace updp {

enum class ErrorCode {
  ZeroVector,
  NonFiniteLoss,
  InvalidDim,
  DimMismatch,
  InvalidConfig,
  InvalidTemperature,
  TooFewInstances,
  NotEnoughViews,
  InvalidPolicy,
  BatchTooSmall,
  NonFiniteGradient,
  BudgetExceedsDataset,
  NotEnoughNeighbors,
  SingleClass,
  EmptySelection,
  EmptyTestSet,
  BadMagic,
  TruncatedFile,
  NonFiniteFeature,
  LabelOutOfRange,
  MissingLabels,
  IoError,
  VersionMismatch,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace updp
