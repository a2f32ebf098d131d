#pragma once

#include <stdexcept>
#include <string>

namespace widthlab {

enum class ErrorCode {
  CapExceeded,
  DimensionMismatch,
  ParameterOutOfRange,
  ScaleNotUnit,
  UnsupportedCombination,
  WrongMeasure,
  OutOfSupport,
  WeightNotInSupport,
  EmptyFeatureList,
  NotUnitNorm,
  PackingFailed,
  DegreeCap,
  NegativeIndex,
  ConfigInvalid,
  NumericalFailure,
  IoError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::CapExceeded: return "CapExceeded";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ParameterOutOfRange: return "ParameterOutOfRange";
    case ErrorCode::ScaleNotUnit: return "ScaleNotUnit";
    case ErrorCode::UnsupportedCombination: return "UnsupportedCombination";
    case ErrorCode::WrongMeasure: return "WrongMeasure";
    case ErrorCode::OutOfSupport: return "OutOfSupport";
    case ErrorCode::WeightNotInSupport: return "WeightNotInSupport";
    case ErrorCode::EmptyFeatureList: return "EmptyFeatureList";
    case ErrorCode::NotUnitNorm: return "NotUnitNorm";
    case ErrorCode::PackingFailed: return "PackingFailed";
    case ErrorCode::DegreeCap: return "DegreeCap";
    case ErrorCode::NegativeIndex: return "NegativeIndex";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Single exception type for the library; `code()` discriminates the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

}  // namespace widthlab
