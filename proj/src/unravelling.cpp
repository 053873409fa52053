#include "qtrack/unravelling.hpp"

#include <cmath>
#include <string>

#include "qtrack/error.hpp"

namespace qtrack {

UnravellingTransform UnravellingTransform::shift(int num_ops,
                                                 const CVector& beta) {
  return {CMatrix::Identity(num_ops, num_ops), beta};
}

MasterEquation transform_me(const MasterEquation& me,
                            const UnravellingTransform& t, double tol) {
  const auto num_in = static_cast<Eigen::Index>(me.jump_ops().size());
  const Eigen::Index num_out = t.S.rows();
  if (t.S.cols() != num_in || t.beta.size() != num_out) {
    throw Error(Errc::kModel, "transform shape does not match the model");
  }
  const CMatrix gram = t.S.adjoint() * t.S;
  const double err =
      (gram - CMatrix::Identity(num_in, num_in)).cwiseAbs().maxCoeff();
  if (err > tol) throw Error(Errc::kPrecondition, "S is not semi-unitary", err);

  const int d = me.dim();
  const CMatrix id = CMatrix::Identity(d, d);
  std::vector<CMatrix> ops;
  CMatrix h = me.hamiltonian();
  for (Eigen::Index m = 0; m < num_out; ++m) {
    CMatrix c = t.beta(m) * id;
    for (Eigen::Index l = 0; l < num_in; ++l) c += t.S(m, l) * me.jump_ops()[l];
    h -= 0.5 * kI *
         (std::conj(t.beta(m)) * c - t.beta(m) * c.adjoint());
    ops.push_back(std::move(c));
  }
  // Exactly Hermitian by construction; symmetrize away rounding.
  h = 0.5 * (h + h.adjoint()).eval();
  return MasterEquation(std::move(h), std::move(ops), tol);
}

JumpDecomposition decompose_jump_action(const CMatrix& c, const CVector& phi,
                                        const CVector& next, double tol) {
  if (std::abs(phi.norm() - 1.0) > tol || std::abs(next.norm() - 1.0) > tol) {
    throw Error(Errc::kPrecondition, "cycle states must be unit vectors");
  }
  const double overlap = std::abs(phi.dot(next));
  if (overlap >= 1.0 - tol) {
    throw Error(Errc::kDegenerateCycle, "consecutive states are parallel",
                overlap);
  }
  CMatrix basis(phi.size(), 2);
  basis.col(0) = phi;
  basis.col(1) = next;
  const CVector target = c * phi;
  const CVector coeff = basis.colPivHouseholderQr().solve(target);
  JumpDecomposition out{coeff(0), coeff(1), (basis * coeff - target).norm()};
  if (out.residual > tol) {
    throw Error(Errc::kInvalidCycle,
                "jump maps the state outside span{phi_k, phi_k+1}",
                out.residual);
  }
  return out;
}

CMatrix shifted_effective_hamiltonian(const MasterEquation& me, Complex beta) {
  if (me.jump_ops().size() != 1) {
    throw Error(Errc::kUnsupported, "needs exactly one jump operator");
  }
  const CMatrix& c = me.jump_ops().front();
  const CMatrix id = CMatrix::Identity(me.dim(), me.dim());
  return effective_hamiltonian(me) - kI * std::conj(beta) * c -
         0.5 * kI * std::norm(beta) * id;
}

AdaptiveScheme backout_beta(const MasterEquation& me,
                            std::span<const CVector> cycle, double tol) {
  if (me.jump_ops().size() != 1) {
    throw Error(Errc::kUnsupported,
                "adaptive back-out needs exactly one jump operator");
  }
  const int k = static_cast<int>(cycle.size());
  if (k < 2) throw Error(Errc::kPrecondition, "a cycle needs K >= 2 states");
  const CMatrix& c = me.jump_ops().front();

  AdaptiveScheme s;
  for (const auto& phi : cycle) {
    if (phi.size() != me.dim()) {
      throw Error(Errc::kModel, "cycle state has the wrong dimension");
    }
    s.cycle.push_back(phi);
  }
  for (int j = 0; j < k; ++j) {
    const CVector& phi = s.cycle[j];
    const CVector& next = s.cycle[(j + 1) % k];
    const JumpDecomposition dec = decompose_jump_action(c, phi, next, tol);
    const Complex beta = -dec.a;

    const MasterEquation shifted =
        transform_me(me, UnravellingTransform::shift(1, CVector::Constant(1, beta)));
    const CMatrix heff = effective_hamiltonian(shifted);
    const CMatrix& jump = shifted.jump_ops().front();

    const CVector stay = heff * phi;
    const Complex mu = phi.dot(stay);
    const double stay_res = (stay - mu * phi).norm();
    const double jump_res = (jump * phi - dec.b * next).norm();
    const double res = std::max(stay_res, jump_res);
    if (!(res <= tol)) {
      throw Error(Errc::kInconsistentEnsemble,
                  "cyclic-jump conditions fail at memory state " +
                      std::to_string(j),
                  res);
    }
    if (std::norm(dec.b) <= tol) {
      throw Error(Errc::kInvalidCycle,
                  "memory state " + std::to_string(j) + " is absorbing",
                  std::norm(dec.b));
    }
    s.betas.push_back(beta);
    s.amplitudes.push_back(dec.b);
    s.no_jump_eigenvalues.push_back(mu);
    s.jump_ops.push_back(jump);
    s.eff_hams.push_back(heff);
    s.jump_rates.push_back(std::norm(dec.b));
    s.max_residual = std::max(s.max_residual, res);
  }
  return s;
}

AdaptiveScheme backout_beta(const MasterEquation& me, const PREnsemble& ens,
                            double tol) {
  std::vector<CVector> cycle;
  for (const auto& r : ens.states) cycle.push_back(bloch_to_statevector(r));
  return backout_beta(me, cycle, tol);
}

CVector fix_phase(const CVector& psi) {
  for (Eigen::Index i = 0; i < psi.size(); ++i) {
    const double m = std::abs(psi(i));
    if (m > 1e-14) return psi * (std::conj(psi(i)) / m);
  }
  return psi;
}

CVector bloch_to_statevector(const Vec3& r, double tol) {
  if (std::abs(r.norm() - 1.0) > tol) {
    throw Error(Errc::kPrecondition, "Bloch vector is not on the sphere",
                r.norm());
  }
  const Vec3 u = r.normalized();
  // rho_00 = (1 - z)/2, rho_11 = (1 + z)/2, rho_01 = (x + i y)/2.
  const Complex rho01(0.5 * u(0), 0.5 * u(1));
  CVector psi(2);
  if (u(2) <= 0.0) {
    const double a0 = std::sqrt(0.5 * (1.0 - u(2)));
    psi << a0, std::conj(rho01) / a0;
  } else {
    const double a1 = std::sqrt(0.5 * (1.0 + u(2)));
    psi << rho01 / a1, a1;
  }
  return fix_phase(psi);
}

}  // namespace qtrack
