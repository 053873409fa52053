#pragma once

// Finite-dimensional Lindblad master equations:
//
//   d rho/dt = -i (H_eff rho - rho H_eff^dagger) + sum_l c_l rho c_l^dagger,
//   H_eff    = H - (i/2) sum_l c_l^dagger c_l.
//
// Qubit convention (D = 2): |0> is the ground state (index 0), |1> the
// excited state. Bloch components are r_i = Tr[rho sigma_i] with
//
//   sigma_x = |0><1| + |1><0|,
//   sigma_y = i|0><1| - i|1><0|,
//   sigma_z = |1><1| - |0><0|,
//
// a right-handed Pauli set in which the excited state sits at r = (0,0,1).

#include <vector>

#include "qtrack/types.hpp"

namespace qtrack {

inline constexpr double kDefaultTol = 1e-9;

class MasterEquation {
 public:
  MasterEquation(CMatrix hamiltonian, std::vector<CMatrix> jump_ops,
                 double hermitian_tol = kDefaultTol);

  int dim() const { return static_cast<int>(hamiltonian_.rows()); }
  const CMatrix& hamiltonian() const { return hamiltonian_; }
  const std::vector<CMatrix>& jump_ops() const { return jump_ops_; }

  // Largest characteristic rate: max(|H|_2, sum_l |c_l|_2^2). Used to scale
  // tolerances and default step sizes.
  double rate_scale() const;

 private:
  CMatrix hamiltonian_;
  std::vector<CMatrix> jump_ops_;
};

// Hermitian, unit trace, positive semidefinite within tolerance.
class DensityMatrix {
 public:
  explicit DensityMatrix(CMatrix m, double tol = kDefaultTol);

  static DensityMatrix maximally_mixed(int dim);
  static DensityMatrix pure(const CVector& psi);

  const CMatrix& matrix() const { return m_; }
  int dim() const { return static_cast<int>(m_.rows()); }

 private:
  CMatrix m_;
};

CMatrix effective_hamiltonian(const MasterEquation& me);

CMatrix apply_liouvillian(const MasterEquation& me, const CMatrix& rho);

// D^2 x D^2 matrix of the Liouvillian acting on column-stacked vec(rho).
CMatrix liouvillian_superoperator(const MasterEquation& me);

struct SteadyStateOptions {
  // Second-smallest singular value must exceed this fraction of the largest.
  double ergodicity_ratio = 1e-7;
  double tol = kDefaultTol;
};

DensityMatrix steady_state(const MasterEquation& me,
                           const SteadyStateOptions& opts = {});

// Entropy in bits; 0 log 0 = 0.
double von_neumann_entropy(const DensityMatrix& rho, double tol = kDefaultTol);

// Fixed-step RK4. The last step is shortened so the result is at exactly
// t_final.
CMatrix integrate_me(const MasterEquation& me, const CMatrix& rho0,
                     double t_final, double dt);

// dr/dt = A r + b for D = 2.
struct BlochModel {
  Mat3 A = Mat3::Zero();
  Vec3 b = Vec3::Zero();

  // All eigenvalues of A strictly in the left half plane.
  bool ergodic() const;
  // -A^{-1} b. Requires ergodic().
  Vec3 steady_state() const;
  // max(|A|_max, |b|_max), or 1 when both vanish.
  double rate_scale() const;
};

BlochModel to_bloch(const MasterEquation& me);

Vec3 density_to_bloch(const CMatrix& rho);
CMatrix bloch_to_density(const Vec3& r, double tol = kDefaultTol);

const CMatrix& pauli(int axis);

}  // namespace qtrack
