#pragma once

#include <stdexcept>
#include <string>

namespace mixfit {

// Error categories surfaced by the library. The CLI maps these onto exit codes.
enum class ErrorCode {
  NonPositiveWeight,
  WeightSumNotOne,
  AtomOutsideDomain,
  DimensionMismatch,
  ZeroScale,
  InvalidArgument,
  ParameterOutOfDomain,
  SupportViolation,
  AtomOutOfKernelDomain,
  UnsupportedFamily,
  UnsupportedOrder,
  Theta0OutOfDomain,
  EmptyData,
  UnsupportedDimension,
  LengthMismatch,
  IncompatiblePhiFamily,
  NonFiniteObjectiveAtInit,
  EmptyFitList,
  NTooSmall,
  KTooSmall,
  NonPositiveMean,
  TooFewRows,
  ParseError,
  IoError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mixfit
