#pragma once

// Unravelling freedom of a master equation and the adaptive (memory
// dependent) local-oscillator scheme that confines a single-jump-operator
// system to a cyclic ensemble.

#include <span>
#include <vector>

#include "qtrack/ensemble.hpp"
#include "qtrack/lindblad.hpp"

namespace qtrack {

// c'_m = sum_l S_ml c_l + beta_m,
// H'   = H - (i/2) sum_m (beta_m^* c'_m - beta_m c'_m^dagger).
// S is M x L with S^dagger S = I_L.
struct UnravellingTransform {
  CMatrix S;
  CVector beta;

  static UnravellingTransform shift(int num_ops, const CVector& beta);
};

MasterEquation transform_me(const MasterEquation& me,
                            const UnravellingTransform& t,
                            double tol = kDefaultTol);

// c|phi> = a |phi> + b |next>.
struct JumpDecomposition {
  Complex a;
  Complex b;
  double residual = 0.0;  // norm of the component outside span{phi, next}
};

JumpDecomposition decompose_jump_action(const CMatrix& c, const CVector& phi,
                                        const CVector& next,
                                        double tol = kDefaultTol);

struct AdaptiveScheme {
  std::vector<CVector> cycle;        // |phi_k>, jumps go k -> k+1 mod K
  std::vector<Complex> betas;        // beta^k = -a_k
  std::vector<Complex> amplitudes;   // b_k: (c + beta^k)|phi_k> = b_k |phi_{k+1}>
  std::vector<Complex> no_jump_eigenvalues;  // H_eff^k |phi_k> = mu_k |phi_k>
  std::vector<CMatrix> jump_ops;     // c + beta^k
  std::vector<CMatrix> eff_hams;     // H_eff^k
  std::vector<double> jump_rates;    // |b_k|^2
  double max_residual = 0.0;         // worst cyclic-jump condition residual

  int size() const { return static_cast<int>(cycle.size()); }
};

// H_eff^k = H_eff - i beta^* c - i |beta|^2 / 2: the effective Hamiltonian of
// the single-operator model shifted by beta.
CMatrix shifted_effective_hamiltonian(const MasterEquation& me, Complex beta);

// Requires exactly one jump operator and K >= 2 unit states. Throws
// kInconsistentEnsemble (value = residual) when the cyclic-jump conditions
// fail, kInvalidCycle when a state is absorbing.
AdaptiveScheme backout_beta(const MasterEquation& me,
                            std::span<const CVector> cycle,
                            double tol = kDefaultTol);

AdaptiveScheme backout_beta(const MasterEquation& me, const PREnsemble& ens,
                            double tol = kDefaultTol);

// Unit vector with density_to_bloch(|phi><phi|) = r; the first nonzero
// amplitude is real and positive.
CVector bloch_to_statevector(const Vec3& r, double tol = kDefaultTol);

// Global phase convention used throughout: first amplitude with modulus above
// 1e-14 made real positive.
CVector fix_phase(const CVector& psi);

}  // namespace qtrack
