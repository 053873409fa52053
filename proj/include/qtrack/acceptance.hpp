#pragma once

// End-to-end acceptance checks for the resonance-fluorescence scenario and
// the general qubit machinery. Shared by `qtrack verify` and the test suite.

#include <cstdint>
#include <string>
#include <vector>

#include "qtrack/io.hpp"

namespace qtrack {

inline constexpr int kNumCriteria = 11;

struct AcceptanceConfig {
  std::uint64_t seed = 1;
  int n_starts = 2000;
  // Multiplies every tolerance; values below 1 tighten the checks.
  double tolerance_scale = 1.0;
  std::vector<int> only;  // empty: all criteria
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;  // one-line summary of the measured values
  Json measured;
  double seconds = 0.0;
};

CriterionResult run_criterion(int id, const AcceptanceConfig& config);

std::vector<CriterionResult> run_acceptance(const AcceptanceConfig& config);

Json acceptance_report(const AcceptanceConfig& config,
                       const std::vector<CriterionResult>& results);

}  // namespace qtrack
