#pragma once

// Resonance fluorescence of a driven two-level atom:
//   H = Omega (|0><1| + |1><0|) / 2,  c = sqrt(gamma) |0><1|,
// parametrized by the dimensionless drive eps = Omega^2 / gamma^2.

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qtrack/ensemble.hpp"
#include "qtrack/io.hpp"
#include "qtrack/lindblad.hpp"

namespace qtrack {

MasterEquation build_fluorescence_me(double gamma, double omega);

inline double omega_from_epsilon(double gamma, double epsilon) {
  return gamma * std::sqrt(epsilon);
}

// Closed forms: r_ss = (0, 2 gamma Omega, -gamma^2) / (gamma^2 + 2 Omega^2),
// v1 = (1, 0, 0), v_pm = (0, gamma +- sqrt(gamma^2 - 16 Omega^2), 4 Omega)
// (real only for |Omega| < gamma/4).
struct FluorescenceAnalytic {
  Vec3 steady_state;
  Vec3 v1;
  std::optional<Vec3> v_plus;
  std::optional<Vec3> v_minus;
};

FluorescenceAnalytic fluorescence_analytic(double gamma, double omega);

// "v1", "v+" or "v-" by matching the ensemble's eigenvector direction to the
// closed forms; empty when nothing matches.
std::string two_state_family(const PREnsemble& ens, double gamma, double omega);

struct SweepConfig {
  double gamma = 1.0;
  std::vector<double> epsilon_grid;  // ascending, >= 0
  bool two_state = true;
  bool three_state = true;
  std::uint64_t seed = 1;
  int n_starts = 2000;
};

// 60 log-spaced points in [1e-4, 0.12] plus t +- 0.002 around each
// existence threshold t in {0.0335, 0.0610, 0.0625, 0.0795}.
std::vector<double> default_epsilon_grid();

struct SweepRow {
  double epsilon = 0.0;
  std::string family_id;
  int k = 0;
  double h_bits = 0.0;  // NaN when the family does not exist at epsilon
  double s_vn_bits = 0.0;
  bool exists = false;
  double residual = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::string> notes;
  // Largest state-set distance between matched neighbours per 3-state
  // family, for continuity checks.
  double max_match_distance = 0.0;
};

SweepResult sweep_entropy(const SweepConfig& config);

// Columns: epsilon,family_id,K,h_bits,S_vn_bits,exists.
void write_sweep_csv(std::ostream& os, const SweepResult& sweep);

// Ensembles at one drive strength: r_ss, each 2-state ensemble and each
// 3-state cyclic ensemble with probabilities, entropy, x = 0 plane flags and
// mirror partners.
Json emit_bloch_geometry(const SweepConfig& config, double epsilon);

}  // namespace qtrack
