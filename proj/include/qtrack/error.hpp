#pragma once

#include <stdexcept>
#include <string>

namespace qtrack {

enum class Errc {
  kModel,               // dimension mismatch, non-Hermitian Hamiltonian
  kErgodicity,          // Liouvillian null space is degenerate
  kNumerical,           // no normalizable solution
  kInvalidState,        // negative eigenvalue, Bloch vector outside the ball
  kUnsupportedDimension,
  kPrecondition,
  kDegenerateSteadyState,
  kInternal,
  kIrreducibility,
  kInvalidCycle,
  kDegenerateCycle,
  kInconsistentEnsemble,
  kUnsupported,
  kConfinementViolation,
};

const char* to_string(Errc code);

// Single exception type for the library. `value()` carries the offending
// residual or time where one exists (NaN otherwise).
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what, double value = kNoValue);

  Errc code() const noexcept { return code_; }
  double value() const noexcept { return value_; }

  static constexpr double kNoValue = __builtin_nan("");

 private:
  Errc code_;
  double value_;
};

}  // namespace qtrack
