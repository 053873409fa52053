#include <doctest.h>

#include <cmath>

#include "qtrack/error.hpp"
#include "qtrack/fluorescence.hpp"
#include "qtrack/unravelling.hpp"
#include "test_helpers.hpp"

using namespace qtrack;

namespace {

MasterEquation fluor(double eps) { return build_fluorescence_me(1.0, std::sqrt(eps)); }

CMatrix basis_matrix(int d, int idx) {
  CMatrix m = CMatrix::Zero(d, d);
  m(idx / d, idx % d) = 1.0;
  return m;
}

double liouvillian_gap(const MasterEquation& a, const MasterEquation& b) {
  double worst = 0.0;
  const int d = a.dim();
  for (int i = 0; i < d * d; ++i) {
    const CMatrix e = basis_matrix(d, i);
    worst = std::max(worst, (apply_liouvillian(a, e) - apply_liouvillian(b, e)).norm());
  }
  return worst;
}

Errc code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::kInternal;
}

PREnsemble v1_ensemble(double eps) {
  for (const auto& e : two_state_qubit_ensembles(to_bloch(fluor(eps)))) {
    if (two_state_family(e, 1.0, std::sqrt(eps)) == "v1") return e;
  }
  throw Error(Errc::kInternal, "v1 missing");
}

// Independent check of the scheme against the defining conditions:
// H_eff^k |phi_k> proportional to |phi_k>, (c + beta^k)|phi_k> proportional
// to |phi_{k+1}>, with H_eff^k taken from the transformed model.
void check_scheme(const MasterEquation& me, const AdaptiveScheme& s) {
  const int k = s.size();
  for (int j = 0; j < k; ++j) {
    const CVector& phi = s.cycle[j];
    const CVector& next = s.cycle[(j + 1) % k];
    CVector beta(1);
    beta(0) = s.betas[j];
    const MasterEquation shifted =
        transform_me(me, UnravellingTransform::shift(1, beta));
    const CMatrix heff = effective_hamiltonian(shifted);
    const CVector hphi = heff * phi;
    CHECK((hphi - phi.dot(hphi) * phi).norm() < 1e-9);
    const CVector jump = shifted.jump_ops()[0] * phi;
    CHECK((jump - next.dot(jump) * next).norm() < 1e-9);
    CHECK(std::abs(jump.squaredNorm() - s.jump_rates[j]) < 1e-12);
    CHECK((heff - shifted_effective_hamiltonian(me, s.betas[j])).norm() < 1e-12);
  }
}

}  // namespace

TEST_CASE("transform_me leaves the liouvillian unchanged") {
  const MasterEquation me = fluor(0.04);
  CVector zero = CVector::Zero(1);
  const MasterEquation same = transform_me(me, UnravellingTransform::shift(1, zero));
  CHECK((same.hamiltonian() - me.hamiltonian()).norm() < 1e-15);
  CHECK((same.jump_ops()[0] - me.jump_ops()[0]).norm() < 1e-15);

  CVector beta(1);
  beta(0) = 0.3;
  CHECK(liouvillian_gap(me, transform_me(me, UnravellingTransform::shift(1, beta))) < 1e-10);

  UnravellingTransform split{CMatrix::Constant(2, 1, 1.0 / std::sqrt(2.0)), CVector::Zero(2)};
  const MasterEquation two = transform_me(me, split);
  CHECK(two.jump_ops().size() == 2);
  CHECK(liouvillian_gap(me, two) < 1e-12);

  // Random isometries and displacements on random models.
  Philox4x32 rng(31);
  for (int t = 0; t < 10; ++t) {
    const int d = 2 + t % 2, l = 1 + t % 2, m = l + 1;
    const MasterEquation r = testing::random_me(rng, d, l);
    const CMatrix g = testing::random_matrix(rng, m).leftCols(l);
    const CMatrix s = Eigen::HouseholderQR<CMatrix>(g).householderQ() * CMatrix::Identity(m, l);
    CVector b(m);
    for (int i = 0; i < m; ++i) b(i) = Complex(rng.uniform() - 0.5, rng.uniform() - 0.5);
    CHECK(liouvillian_gap(r, transform_me(r, {s, b})) < 1e-10);
  }

  UnravellingTransform bad{CMatrix::Constant(2, 1, 1.0), CVector::Zero(2)};
  CHECK(code_of([&] { transform_me(me, bad); }) == Errc::kPrecondition);
}

TEST_CASE("jump decomposition") {
  const double gamma = 0.8;
  CMatrix c = CMatrix::Zero(2, 2);
  c(0, 1) = std::sqrt(gamma);
  CVector e0 = CVector::Zero(2), e1 = CVector::Zero(2);
  e0(0) = 1.0;
  e1(1) = 1.0;
  const JumpDecomposition d = decompose_jump_action(c, e1, e0);
  CHECK(std::abs(d.a) < 1e-15);
  CHECK(std::abs(d.b - std::sqrt(gamma)) < 1e-15);

  // Eigenvector of c: pure a component.
  CMatrix diag = CMatrix::Zero(2, 2);
  diag(0, 0) = 0.7;
  diag(1, 1) = -0.2;
  CVector other(2);
  other << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  const JumpDecomposition e = decompose_jump_action(diag, e0, other);
  CHECK(std::abs(e.a - 0.7) < 1e-14);
  CHECK(std::abs(e.b) < 1e-14);

  CHECK(code_of([&] { decompose_jump_action(c, e1, e1); }) == Errc::kDegenerateCycle);
  CMatrix c3 = CMatrix::Zero(3, 3);
  c3(2, 0) = 1.0;
  CVector f0 = CVector::Zero(3), f1 = CVector::Zero(3);
  f0(0) = 1.0;
  f1(1) = 1.0;
  CHECK(code_of([&] { decompose_jump_action(c3, f0, f1); }) == Errc::kInvalidCycle);

  // v1 ensemble at eps = 0.04 reconstructs c|phi_k>.
  const MasterEquation me = fluor(0.04);
  const PREnsemble ens = v1_ensemble(0.04);
  const CVector p0 = bloch_to_statevector(ens.states[0]);
  const CVector p1 = bloch_to_statevector(ens.states[1]);
  const JumpDecomposition j = decompose_jump_action(me.jump_ops()[0], p0, p1);
  CHECK((j.a * p0 + j.b * p1 - me.jump_ops()[0] * p0).norm() < 1e-10);
}

TEST_CASE("back-out for the v1 ensemble") {
  const MasterEquation me = fluor(0.04);
  const PREnsemble ens = v1_ensemble(0.04);
  const AdaptiveScheme s = backout_beta(me, ens);
  REQUIRE(s.size() == 2);
  for (const auto& b : s.betas) {
    CHECK(std::isfinite(std::abs(b)));
    CHECK(std::abs(b) > 1e-6);
  }
  CHECK(s.max_residual < 1e-9);
  check_scheme(me, s);
  const PRCheck pr = check_pr(to_bloch(me), ens.states);
  CHECK(std::abs(s.jump_rates[0] - pr.rates(0, 1)) < 1e-9 * pr.rates(0, 1));
  CHECK(std::abs(s.jump_rates[1] - pr.rates(1, 0)) < 1e-9 * pr.rates(1, 0));
}

TEST_CASE("back-out for every 3-state solution at eps = 0.05") {
  const MasterEquation me = fluor(0.05);
  const auto list = cyclic_k_state_search(to_bloch(me), 3).ensembles;
  REQUIRE(list.size() == 6);
  for (const auto& ens : list) {
    const AdaptiveScheme s = backout_beta(me, ens);
    CHECK(s.size() == 3);
    check_scheme(me, s);
    for (int k = 0; k < 3; ++k) {
      const double kappa = ens.rates(k, (k + 1) % 3);
      CHECK(std::abs(s.jump_rates[k] - kappa) < 1e-6 * kappa);
    }
  }
}

TEST_CASE("back-out preconditions") {
  CMatrix c = CMatrix::Zero(2, 2);
  c(0, 1) = 1.0;
  const MasterEquation decay(CMatrix::Zero(2, 2), {c});
  CVector e0 = CVector::Zero(2), e1 = CVector::Zero(2);
  e0(0) = 1.0;
  e1(1) = 1.0;
  // |0> is absorbing: the cycle 1 -> 0 -> 1 does not close.
  const std::vector<CVector> cycle = {e1, e0};
  const Errc absorbing = code_of([&] { backout_beta(decay, cycle); });
  CHECK((absorbing == Errc::kInvalidCycle || absorbing == Errc::kInconsistentEnsemble));
  const std::vector<CVector> single = {e1};
  CHECK(code_of([&] { backout_beta(decay, single); }) == Errc::kPrecondition);

  const MasterEquation two(CMatrix::Zero(2, 2), {c, c.adjoint()});
  CHECK(code_of([&] { backout_beta(two, cycle); }) == Errc::kUnsupported);

  // Random pair of states: not a PR ensemble.
  const MasterEquation me = fluor(0.04);
  CVector a(2), b(2);
  a << 0.8, 0.6;
  b << Complex(0.6, 0.0), Complex(0.0, -0.8);
  const std::vector<CVector> random_cycle = {a, b};
  const Errc e = code_of([&] { backout_beta(me, random_cycle); });
  CHECK((e == Errc::kInconsistentEnsemble || e == Errc::kInvalidCycle));
}

TEST_CASE("state vectors from bloch vectors") {
  const CVector up = bloch_to_statevector(Vec3(0, 0, 1));
  CHECK(std::abs(std::abs(up(1)) - 1.0) < 1e-15);
  const CVector plus = bloch_to_statevector(Vec3(1, 0, 0));
  CHECK(std::abs(plus(0) - 1.0 / std::sqrt(2.0)) < 1e-15);
  CHECK(std::abs(plus(1) - 1.0 / std::sqrt(2.0)) < 1e-15);
  Philox4x32 rng(32);
  for (int i = 0; i < 100; ++i) {
    const Vec3 r = testing::random_unit(rng);
    const CVector psi = bloch_to_statevector(r);
    CHECK((density_to_bloch(psi * psi.adjoint()) - r).norm() < 1e-12);
    CHECK(std::abs(fix_phase(psi).dot(psi) - 1.0) < 1e-12);
  }
}
