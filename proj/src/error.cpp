#include "updp/error.hpp"

namespace updp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidDim: return "InvalidDim";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidTemperature: return "InvalidTemperature";
    case ErrorCode::TooFewInstances: return "TooFewInstances";
    case ErrorCode::NotEnoughViews: return "NotEnoughViews";
    case ErrorCode::InvalidPolicy: return "InvalidPolicy";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::BudgetExceedsDataset: return "BudgetExceedsDataset";
    case ErrorCode::NotEnoughNeighbors: return "NotEnoughNeighbors";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::NonFiniteFeature: return "NonFiniteFeature";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::MissingLabels: return "MissingLabels";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
  }
  return "Unknown";
}

}  // namespace updp
