#pragma once

#include <stdexcept>
#include <string>

namespace confsym {

enum class Errc {
  Syntax,
  UndeclaredSymbol,
  AsymmetricMetric,
  DegenerateMetric,
  DimensionTooSmall,
  GuardViolation,
  MissingRealization,
  NonFinite,
  InconsistentBinding,
  MixedVariance,
  RankUnsupported,
  WeightedOperand,
  ExcludedDelta,
  NotKilling,
  WeightMismatch,
  OrderCap,
  NotTraceFree,
  DegreeTooLow,
  UnknownSymbol,
  UnsupportedGenericDegree2,
  Internal,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::Syntax: return "SyntaxError";
    case Errc::UndeclaredSymbol: return "UndeclaredSymbol";
    case Errc::AsymmetricMetric: return "AsymmetricMetric";
    case Errc::DegenerateMetric: return "DegenerateMetric";
    case Errc::DimensionTooSmall: return "DimensionTooSmall";
    case Errc::GuardViolation: return "GuardViolation";
    case Errc::MissingRealization: return "MissingRealization";
    case Errc::NonFinite: return "NonFinite";
    case Errc::InconsistentBinding: return "InconsistentBinding";
    case Errc::MixedVariance: return "MixedVariance";
    case Errc::RankUnsupported: return "RankUnsupported";
    case Errc::WeightedOperand: return "WeightedOperand";
    case Errc::ExcludedDelta: return "ExcludedDelta";
    case Errc::NotKilling: return "NotKilling";
    case Errc::WeightMismatch: return "WeightMismatch";
    case Errc::OrderCap: return "OrderCap";
    case Errc::NotTraceFree: return "NotTraceFree";
    case Errc::DegreeTooLow: return "DegreeTooLow";
    case Errc::UnknownSymbol: return "UnknownSymbol";
    case Errc::UnsupportedGenericDegree2: return "UnsupportedGenericDegree2";
    case Errc::Internal: return "InternalError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

}  // namespace confsym
