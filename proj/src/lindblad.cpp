#include "qtrack/lindblad.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qtrack/error.hpp"

namespace qtrack {
namespace {

void require_square(const CMatrix& m, int dim, const char* what) {
  if (m.rows() != dim || m.cols() != dim) {
    throw Error(Errc::kModel, std::string(what) + " is " +
                                  std::to_string(m.rows()) + "x" +
                                  std::to_string(m.cols()) + ", expected " +
                                  std::to_string(dim) + "x" +
                                  std::to_string(dim));
  }
}

CMatrix hermitize(const CMatrix& m) { return 0.5 * (m + m.adjoint()); }

}  // namespace

MasterEquation::MasterEquation(CMatrix hamiltonian, std::vector<CMatrix> jump_ops,
                               double hermitian_tol)
    : hamiltonian_(std::move(hamiltonian)), jump_ops_(std::move(jump_ops)) {
  const int d = static_cast<int>(hamiltonian_.rows());
  if (d < 2) throw Error(Errc::kModel, "dimension must be at least 2");
  require_square(hamiltonian_, d, "hamiltonian");
  for (const auto& c : jump_ops_) require_square(c, d, "jump operator");
  const double herr = hermiticity_error(hamiltonian_);
  if (herr > hermitian_tol) {
    throw Error(Errc::kModel, "hamiltonian is not Hermitian", herr);
  }
}

double MasterEquation::rate_scale() const {
  Eigen::JacobiSVD<CMatrix> svd_h(hamiltonian_);
  double scale = svd_h.singularValues()(0);
  double jump = 0.0;
  for (const auto& c : jump_ops_) {
    Eigen::JacobiSVD<CMatrix> svd(c);
    jump += svd.singularValues()(0) * svd.singularValues()(0);
  }
  scale = std::max(scale, jump);
  return scale > 0.0 ? scale : 1.0;
}

DensityMatrix::DensityMatrix(CMatrix m, double tol) : m_(std::move(m)) {
  if (m_.rows() != m_.cols() || m_.rows() < 1) {
    throw Error(Errc::kInvalidState, "density matrix must be square");
  }
  const double herr = hermiticity_error(m_);
  if (herr > tol) throw Error(Errc::kInvalidState, "not Hermitian", herr);
  const double tr_err = std::abs(m_.trace() - 1.0);
  if (tr_err > tol) throw Error(Errc::kInvalidState, "trace is not 1", tr_err);
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitize(m_),
                                            Eigen::EigenvaluesOnly);
  const double lowest = es.eigenvalues()(0);
  if (lowest < -tol) {
    throw Error(Errc::kInvalidState, "negative eigenvalue", lowest);
  }
}

DensityMatrix DensityMatrix::maximally_mixed(int dim) {
  return DensityMatrix(CMatrix::Identity(dim, dim) / static_cast<double>(dim));
}

DensityMatrix DensityMatrix::pure(const CVector& psi) {
  const CVector u = psi / psi.norm();
  return DensityMatrix(u * u.adjoint());
}

CMatrix effective_hamiltonian(const MasterEquation& me) {
  CMatrix heff = me.hamiltonian();
  for (const auto& c : me.jump_ops()) heff -= 0.5 * kI * (c.adjoint() * c);
  return heff;
}

CMatrix apply_liouvillian(const MasterEquation& me, const CMatrix& rho) {
  require_square(rho, me.dim(), "rho");
  const CMatrix heff = effective_hamiltonian(me);
  CMatrix out = -kI * (heff * rho - rho * heff.adjoint());
  for (const auto& c : me.jump_ops()) out += c * rho * c.adjoint();
  return out;
}

CMatrix liouvillian_superoperator(const MasterEquation& me) {
  const int d = me.dim();
  const CMatrix heff = effective_hamiltonian(me);
  const CMatrix id = CMatrix::Identity(d, d);
  // vec(X rho Y) = (Y^T kron X) vec(rho) for column-stacked vec.
  auto kron = [d](const CMatrix& a, const CMatrix& b) {
    CMatrix k(d * d, d * d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) k.block(i * d, j * d, d, d) = a(i, j) * b;
    return k;
  };
  CMatrix sup = -kI * kron(id, heff) + kI * kron(heff.conjugate(), id);
  for (const auto& c : me.jump_ops()) sup += kron(c.conjugate(), c);
  return sup;
}

DensityMatrix steady_state(const MasterEquation& me,
                           const SteadyStateOptions& opts) {
  const int d = me.dim();
  const CMatrix sup = liouvillian_superoperator(me);
  Eigen::JacobiSVD<CMatrix> svd(sup, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const int n = static_cast<int>(sv.size());
  if (sv(n - 2) <= opts.ergodicity_ratio * sv(0)) {
    throw Error(Errc::kErgodicity, "Liouvillian has more than one null vector",
                sv(n - 2) / sv(0));
  }
  const CVector null = svd.matrixV().col(n - 1);
  CMatrix rho = Eigen::Map<const CMatrix>(null.data(), d, d);
  const Complex tr = rho.trace();
  if (std::abs(tr) < 1e-12) {
    throw Error(Errc::kNumerical, "null vector has vanishing trace");
  }
  rho = hermitize(rho / tr);
  try {
    return DensityMatrix(rho, opts.tol);
  } catch (const Error& e) {
    throw Error(Errc::kNumerical,
                std::string("null vector is not a valid state: ") + e.what(),
                e.value());
  }
}

double von_neumann_entropy(const DensityMatrix& rho, double tol) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitize(rho.matrix()),
                                            Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    const double p = es.eigenvalues()(i);
    if (p < -tol) throw Error(Errc::kInvalidState, "negative eigenvalue", p);
    if (p > 0.0) s -= p * std::log2(p);
  }
  return std::max(s, 0.0);
}

CMatrix integrate_me(const MasterEquation& me, const CMatrix& rho0,
                     double t_final, double dt) {
  if (!(dt > 0.0) || t_final < 0.0) {
    throw Error(Errc::kPrecondition, "need dt > 0 and t_final >= 0");
  }
  require_square(rho0, me.dim(), "rho0");
  const CMatrix sup = liouvillian_superoperator(me);
  const int d = me.dim();
  CVector v = Eigen::Map<const CVector>(rho0.data(), d * d);
  const auto steps = static_cast<long>(std::ceil(t_final / dt - 1e-12));
  double t = 0.0;
  for (long s = 0; s < steps; ++s) {
    const double h = std::min(dt, t_final - t);
    const CVector k1 = sup * v;
    const CVector k2 = sup * (v + 0.5 * h * k1);
    const CVector k3 = sup * (v + 0.5 * h * k2);
    const CVector k4 = sup * (v + h * k3);
    v += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    t += h;
  }
  return Eigen::Map<const CMatrix>(v.data(), d, d);
}

const CMatrix& pauli(int axis) {
  static const CMatrix paulis[3] = {
      (CMatrix(2, 2) << 0.0, 1.0, 1.0, 0.0).finished(),
      (CMatrix(2, 2) << 0.0, kI, -kI, 0.0).finished(),
      (CMatrix(2, 2) << -1.0, 0.0, 0.0, 1.0).finished(),
  };
  return paulis[axis];
}

Vec3 density_to_bloch(const CMatrix& rho) {
  if (rho.rows() != 2 || rho.cols() != 2) {
    throw Error(Errc::kUnsupportedDimension, "Bloch vectors need D = 2");
  }
  Vec3 r;
  for (int i = 0; i < 3; ++i) r(i) = (rho * pauli(i)).trace().real();
  return r;
}

CMatrix bloch_to_density(const Vec3& r, double tol) {
  if (r.norm() > 1.0 + tol) {
    throw Error(Errc::kInvalidState, "Bloch vector outside the unit ball",
                r.norm());
  }
  CMatrix rho = 0.5 * CMatrix::Identity(2, 2);
  for (int i = 0; i < 3; ++i) rho += 0.5 * r(i) * pauli(i);
  return rho;
}

BlochModel to_bloch(const MasterEquation& me) {
  if (me.dim() != 2) {
    throw Error(Errc::kUnsupportedDimension, "Bloch form needs D = 2");
  }
  BlochModel m;
  m.b = density_to_bloch(apply_liouvillian(me, 0.5 * CMatrix::Identity(2, 2)));
  for (int j = 0; j < 3; ++j) {
    m.A.col(j) = density_to_bloch(apply_liouvillian(me, 0.5 * pauli(j)));
  }
  return m;
}

bool BlochModel::ergodic() const {
  Eigen::EigenSolver<Mat3> es(A, false);
  const double floor = 1e-12 * rate_scale();
  for (int i = 0; i < 3; ++i) {
    if (!(es.eigenvalues()(i).real() < -floor)) return false;
  }
  return true;
}

Vec3 BlochModel::steady_state() const {
  if (!ergodic()) throw Error(Errc::kErgodicity, "A has a non-decaying mode");
  return -A.partialPivLu().solve(b);
}

double BlochModel::rate_scale() const {
  const double s = std::max(A.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
  return s > 0.0 ? s : 1.0;
}

}  // namespace qtrack
