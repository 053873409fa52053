#include "qtrack/error.hpp"

namespace qtrack {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::kModel: return "model error";
    case Errc::kErgodicity: return "ergodicity error";
    case Errc::kNumerical: return "numerical error";
    case Errc::kInvalidState: return "invalid state";
    case Errc::kUnsupportedDimension: return "unsupported dimension";
    case Errc::kPrecondition: return "precondition violated";
    case Errc::kDegenerateSteadyState: return "degenerate steady state";
    case Errc::kInternal: return "internal error";
    case Errc::kIrreducibility: return "reducible rate graph";
    case Errc::kInvalidCycle: return "not a valid cycle";
    case Errc::kDegenerateCycle: return "degenerate cycle";
    case Errc::kInconsistentEnsemble: return "inconsistent ensemble";
    case Errc::kUnsupported: return "unsupported";
    case Errc::kConfinementViolation: return "confinement violation";
  }
  return "unknown";
}

Error::Error(Errc code, const std::string& what, double value)
    : std::runtime_error(std::string(to_string(code)) + ": " + what),
      code_(code),
      value_(value) {}

}  // namespace qtrack
