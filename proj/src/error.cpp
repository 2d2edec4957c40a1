#include "mixfit/error.hpp"

namespace mixfit {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveWeight: return "NonPositiveWeight";
    case ErrorCode::WeightSumNotOne: return "WeightSumNotOne";
    case ErrorCode::AtomOutsideDomain: return "AtomOutsideDomain";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroScale: return "ZeroScale";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParameterOutOfDomain: return "ParameterOutOfDomain";
    case ErrorCode::SupportViolation: return "SupportViolation";
    case ErrorCode::AtomOutOfKernelDomain: return "AtomOutOfKernelDomain";
    case ErrorCode::UnsupportedFamily: return "UnsupportedFamily";
    case ErrorCode::UnsupportedOrder: return "UnsupportedOrder";
    case ErrorCode::Theta0OutOfDomain: return "Theta0OutOfDomain";
    case ErrorCode::EmptyData: return "EmptyData";
    case ErrorCode::UnsupportedDimension: return "UnsupportedDimension";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::IncompatiblePhiFamily: return "IncompatiblePhiFamily";
    case ErrorCode::NonFiniteObjectiveAtInit: return "NonFiniteObjectiveAtInit";
    case ErrorCode::EmptyFitList: return "EmptyFitList";
    case ErrorCode::NTooSmall: return "NTooSmall";
    case ErrorCode::KTooSmall: return "KTooSmall";
    case ErrorCode::NonPositiveMean: return "NonPositiveMean";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace mixfit
