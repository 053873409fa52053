#include "qtrack/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <optional>
#include <thread>

#include "qtrack/error.hpp"
#include "qtrack/philox.hpp"

namespace qtrack {
namespace {

// Lawson-Hanson active-set NNLS: min |E x - f| subject to x >= 0. Columns
// are normalized first; cluster geometries give difference vectors that
// differ in length by orders of magnitude.
RVector nnls(const RMatrix& e_raw, const RVector& f) {
  const int n = static_cast<int>(e_raw.cols());
  RVector colnorm(n);
  RMatrix e = e_raw;
  for (int i = 0; i < n; ++i) {
    colnorm(i) = e.col(i).norm();
    if (colnorm(i) > 0.0) e.col(i) /= colnorm(i);
  }
  RVector x = RVector::Zero(n);
  std::vector<bool> passive(n, false);
  const double tol = 1e-14 * f.norm();
  auto solve_passive = [&](RVector& z) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
      if (passive[i]) idx.push_back(i);
    RMatrix ep(e.rows(), idx.size());
    for (std::size_t c = 0; c < idx.size(); ++c) ep.col(c) = e.col(idx[c]);
    const RVector zp = ep.colPivHouseholderQr().solve(f);
    z.setZero();
    for (std::size_t c = 0; c < idx.size(); ++c) z(idx[c]) = zp(c);
  };
  for (int outer = 0; outer < 3 * n + 10; ++outer) {
    const RVector w = e.transpose() * (f - e * x);
    int best = -1;
    double wmax = tol;
    for (int i = 0; i < n; ++i) {
      if (!passive[i] && colnorm(i) > 0.0 && w(i) > wmax) {
        wmax = w(i);
        best = i;
      }
    }
    if (best < 0) break;
    passive[best] = true;
    RVector z(n);
    for (int inner = 0; inner < 3 * n + 10; ++inner) {
      solve_passive(z);
      bool feasible = true;
      for (int i = 0; i < n; ++i)
        if (passive[i] && z(i) <= 0.0) feasible = false;
      if (feasible) break;
      double alpha = 1.0;
      for (int i = 0; i < n; ++i) {
        if (passive[i] && z(i) <= 0.0) {
          alpha = std::min(alpha, x(i) / (x(i) - z(i)));
        }
      }
      x += alpha * (z - x);
      for (int i = 0; i < n; ++i) {
        if (passive[i] && x(i) <= 0.0) {
          passive[i] = false;
          x(i) = 0.0;
        }
      }
    }
    x = z.cwiseMax(0.0);
  }
  for (int i = 0; i < n; ++i) {
    if (colnorm(i) > 0.0) x(i) /= colnorm(i);
  }
  return x;
}

// --- cyclic search -------------------------------------------------------
//
// Unknowns z = (r_1, ..., r_K, kappa_1, ..., kappa_K); kappa_j is the rate of
// the jump r_j -> r_{j+1 mod K}. Residuals: |r_j|^2 - 1 (K rows), then
// A r_j + b - kappa_j (r_{j+1} - r_j) (3K rows).

struct CyclicSystem {
  const Mat3& A;
  const Vec3& b;
  int k;

  Vec3 state(const RVector& z, int j) const { return z.segment<3>(3 * j); }

  RVector residual(const RVector& z) const {
    RVector f(4 * k);
    for (int j = 0; j < k; ++j) {
      const Vec3 r = state(z, j);
      const Vec3 next = state(z, (j + 1) % k);
      const double kappa = z(3 * k + j);
      f(j) = r.squaredNorm() - 1.0;
      f.segment<3>(k + 3 * j) = A * r + b - kappa * (next - r);
    }
    return f;
  }

  RMatrix jacobian(const RVector& z) const {
    RMatrix jac = RMatrix::Zero(4 * k, 4 * k);
    for (int j = 0; j < k; ++j) {
      const int n = (j + 1) % k;
      const Vec3 r = state(z, j);
      const double kappa = z(3 * k + j);
      jac.block<1, 3>(j, 3 * j) = 2.0 * r.transpose();
      const int row = k + 3 * j;
      jac.block<3, 3>(row, 3 * j) += A + kappa * Mat3::Identity();
      jac.block<3, 3>(row, 3 * n) -= kappa * Mat3::Identity();
      jac.block<3, 1>(row, 3 * k + j) = -(state(z, n) - r);
    }
    return jac;
  }
};

// Damped Newton with backtracking on |F|. Runs a few polishing steps past
// `tol` while the residual keeps dropping. Returns the final residual norm
// (infinity on breakdown).
double damped_newton(const CyclicSystem& sys, RVector& z, double tol,
                     int max_iter) {
  RVector f = sys.residual(z);
  double nf = f.norm();
  int polish = 0;
  for (int it = 0; it < max_iter; ++it) {
    if (!std::isfinite(nf)) return nf;
    if (nf < tol && ++polish > 3) break;
    Eigen::PartialPivLU<RMatrix> lu(sys.jacobian(z));
    const RVector dz = lu.solve(-f);
    if (!dz.allFinite()) return std::numeric_limits<double>::infinity();
    double t = 1.0;
    RVector trial;
    double nt = 0.0;
    for (;;) {
      trial = z + t * dz;
      nt = sys.residual(trial).norm();
      if (nt < (1.0 - 1e-4 * t) * nf) break;
      t *= 0.5;
      if (t < 1e-10) return nf < tol ? nf : std::numeric_limits<double>::infinity();
    }
    z = trial;
    f = sys.residual(z);
    nf = f.norm();
  }
  return nf;
}

// Rate-space reduction: for fixed kappa the cycle closes on a unique affine
// fixed point r_1 = (I - P)^{-1} q with r_{j+1} = r_j + (A r_j + b)/kappa_j.
// Solving |r_j|^2 = 1 in log-rate space is a K x K problem whose solutions
// seed the full system.
struct ReducedSystem {
  const Mat3& A;
  const Vec3& b;
  int k;

  std::optional<std::vector<Vec3>> states(const RVector& log_rates) const {
    Mat3 p = Mat3::Identity();
    Vec3 q = Vec3::Zero();
    for (int j = 0; j < k; ++j) {
      const double kappa = std::exp(log_rates(j));
      const Mat3 m = Mat3::Identity() + A / kappa;
      p = m * p;
      q = m * q + b / kappa;
    }
    Eigen::FullPivLU<Mat3> lu(Mat3::Identity() - p);
    if (!lu.isInvertible()) return std::nullopt;
    std::vector<Vec3> r(k);
    r[0] = lu.solve(q);
    for (int j = 0; j + 1 < k; ++j) {
      r[j + 1] = r[j] + (A * r[j] + b) / std::exp(log_rates(j));
    }
    for (const auto& v : r)
      if (!v.allFinite()) return std::nullopt;
    return r;
  }

  std::optional<RVector> residual(const RVector& log_rates) const {
    auto r = states(log_rates);
    if (!r) return std::nullopt;
    RVector g(k);
    for (int j = 0; j < k; ++j) g(j) = (*r)[j].squaredNorm() - 1.0;
    return g;
  }
};

std::optional<RVector> reduced_newton(const ReducedSystem& sys, RVector s,
                                      int max_iter) {
  auto g = sys.residual(s);
  if (!g) return std::nullopt;
  for (int it = 0; it < max_iter; ++it) {
    const double ng = g->norm();
    if (ng < 1e-11) return s;
    RMatrix jac(sys.k, sys.k);
    const double h = 1e-7;
    for (int i = 0; i < sys.k; ++i) {
      RVector sp = s;
      sp(i) += h;
      auto gp = sys.residual(sp);
      if (!gp) return std::nullopt;
      jac.col(i) = (*gp - *g) / h;
    }
    const RVector ds = jac.fullPivLu().solve(-*g);
    if (!ds.allFinite()) return std::nullopt;
    double t = 1.0;
    for (;;) {
      auto gt = sys.residual(s + t * ds);
      if (gt && gt->allFinite() && gt->norm() < (1.0 - 1e-4 * t) * ng) {
        s += t * ds;
        g = gt;
        break;
      }
      t *= 0.5;
      if (t < 1e-10) return ng < 1e-6 ? std::optional<RVector>(s) : std::nullopt;
    }
  }
  return g->norm() < 1e-6 ? std::optional<RVector>(s) : std::nullopt;
}

Vec3 random_unit(Philox4x32& rng) {
  // Marsaglia: uniform on the sphere from two uniforms.
  for (;;) {
    const double u = 2.0 * rng.uniform() - 1.0;
    const double v = 2.0 * rng.uniform() - 1.0;
    const double s = u * u + v * v;
    if (s >= 1.0) continue;
    const double w = 2.0 * std::sqrt(1.0 - s);
    return Vec3(u * w, v * w, 1.0 - 2.0 * s);
  }
}

enum class StartOutcome { kNotConverged, kRejected, kAccepted };

struct StartResult {
  StartOutcome outcome = StartOutcome::kNotConverged;
  std::vector<Vec3> states;
  std::vector<double> rates;
};

// Canonical cyclic labelling: start at the state with the smallest z, ties
// broken on y then x.
void canonical_rotation(StartResult& s) {
  const int k = static_cast<int>(s.states.size());
  auto less = [](const Vec3& a, const Vec3& b) {
    for (int axis : {2, 1, 0}) {
      if (std::abs(a(axis) - b(axis)) > 1e-9) return a(axis) < b(axis);
    }
    return false;
  };
  int first = 0;
  for (int j = 1; j < k; ++j)
    if (less(s.states[j], s.states[first])) first = j;
  std::rotate(s.states.begin(), s.states.begin() + first, s.states.end());
  std::rotate(s.rates.begin(), s.rates.begin() + first, s.rates.end());
}

}  // namespace

double PREnsemble::entropy() const { return shannon_entropy(probs); }

PRCheck check_pr(const BlochModel& bloch, std::span<const Vec3> states,
                 double tol) {
  const int k = static_cast<int>(states.size());
  if (k < 1) throw Error(Errc::kPrecondition, "empty ensemble");
  for (const auto& r : states) {
    if (std::abs(r.norm() - 1.0) > tol) {
      throw Error(Errc::kPrecondition, "ensemble state is not unit norm",
                  r.norm());
    }
  }
  PRCheck out;
  out.rates = RMatrix::Zero(k, k);
  for (int j = 0; j < k; ++j) {
    const Vec3 target = bloch.A * states[j] + bloch.b;
    if (k == 1) {
      out.residual = std::max(out.residual, target.norm());
      continue;
    }
    RMatrix e(3, k - 1);
    for (int i = 0, c = 0; i < k; ++i) {
      if (i != j) e.col(c++) = states[i] - states[j];
    }
    const RVector x = nnls(e, target);
    out.residual = std::max(out.residual, (e * x - target).norm());
    for (int i = 0, c = 0; i < k; ++i) {
      if (i != j) out.rates(j, i) = x(c++);
    }
  }
  out.feasible = out.residual < tol * bloch.rate_scale();
  return out;
}

std::vector<PREnsemble> two_state_qubit_ensembles(const BlochModel& bloch) {
  if (!bloch.ergodic()) throw Error(Errc::kErgodicity, "A is not stable");
  const Vec3 rss = bloch.steady_state();
  const double purity_gap = 1.0 - rss.squaredNorm();
  if (rss.norm() >= 1.0 - kDefaultTol) {
    throw Error(Errc::kDegenerateSteadyState, "steady state is pure",
                rss.norm());
  }
  Eigen::EigenSolver<Mat3> es(bloch.A);
  const double radius = es.eigenvalues().cwiseAbs().maxCoeff();
  std::vector<PREnsemble> out;
  for (int i = 0; i < 3; ++i) {
    const Complex lambda = es.eigenvalues()(i);
    if (std::abs(lambda.imag()) >= 1e-9 * radius) continue;
    Eigen::Vector3cd v = es.eigenvectors().col(i);
    int big = 0;
    v.cwiseAbs().maxCoeff(&big);
    v *= std::conj(v(big)) / std::abs(v(big));
    if (v.imag().norm() >= 1e-8 * v.norm()) continue;
    Vec3 vhat = v.real().normalized();
    double overlap = rss.dot(vhat);
    if (std::abs(overlap) < 1e-14) {
      for (int c = 0; c < 3; ++c) {
        if (std::abs(vhat(c)) > 1e-12) {
          if (vhat(c) < 0.0) vhat = -vhat;
          break;
        }
      }
    } else if (overlap > 0.0) {
      vhat = -vhat;
    }
    overlap = rss.dot(vhat);
    const double wp1 =
        0.5 * (1.0 - overlap / std::sqrt(purity_gap + overlap * overlap));
    const double spread = std::sqrt(purity_gap);
    PREnsemble ens;
    // The state carrying weight wp1 lies on the -vhat side; this is the
    // placement for which sum_k wp_k r_k = r_ss with unit norms.
    ens.states = {rss - vhat * spread * std::sqrt((1.0 - wp1) / wp1),
                  rss + vhat * spread * std::sqrt(wp1 / (1.0 - wp1))};
    ens.probs = {wp1, 1.0 - wp1};
    const double rate = std::abs(lambda.real());
    ens.rates = RMatrix::Zero(2, 2);
    ens.rates(0, 1) = (1.0 - wp1) * rate;
    ens.rates(1, 0) = wp1 * rate;
    ens.eigenvalue = lambda.real();
    ens.eigenvector = vhat;
    ens.residual = check_pr(bloch, ens.states).residual;
    out.push_back(std::move(ens));
  }
  if (out.empty()) {
    throw Error(Errc::kInternal, "real 3x3 matrix without a real eigenvector");
  }
  std::sort(out.begin(), out.end(), [](const PREnsemble& a, const PREnsemble& b) {
    return a.eigenvalue > b.eigenvalue;
  });
  return out;
}

double cyclic_state_distance(std::span<const Vec3> a, std::span<const Vec3> b) {
  const std::size_t k = a.size();
  if (b.size() != k) return std::numeric_limits<double>::infinity();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t shift = 0; shift < k; ++shift) {
    double d = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      d = std::max(d, (a[j] - b[(j + shift) % k]).cwiseAbs().maxCoeff());
    }
    best = std::min(best, d);
  }
  return best;
}

CyclicSearchResult cyclic_k_state_search(const BlochModel& bloch, int k,
                                         const CyclicSearchOptions& opts) {
  if (k < 3) throw Error(Errc::kPrecondition, "cyclic search needs K >= 3");
  if (!bloch.ergodic()) throw Error(Errc::kErgodicity, "A is not stable");
  const Vec3 rss = bloch.steady_state();
  if (rss.norm() >= 1.0 - kDefaultTol) {
    throw Error(Errc::kDegenerateSteadyState, "steady state is pure",
                rss.norm());
  }
  const double scale = bloch.rate_scale();
  const CyclicSystem full{bloch.A, bloch.b, k};
  const ReducedSystem reduced{bloch.A, bloch.b, k};

  auto run_start = [&](int index) {
    Philox4x32 rng(opts.seed, static_cast<std::uint64_t>(index));
    RVector z(4 * k);
    const int kind = index % 3;
    if (kind == 0 || kind == 2) {
      if (kind == 0) {
        // Random unit states.
        for (int j = 0; j < k; ++j) z.segment<3>(3 * j) = random_unit(rng);
      } else {
        // States clustered around the steady-state direction with a
        // log-uniform spread in [1e-6, 1].
        const Vec3 centre = rss.normalized();
        const double spread = std::exp(std::log(1e-6) + rng.uniform() * std::log(1e6));
        for (int j = 0; j < k; ++j) {
          z.segment<3>(3 * j) = (centre + spread * random_unit(rng)).normalized();
        }
      }
      // Log-uniform rates in [1e-2, 1e2] x scale.
      for (int j = 0; j < k; ++j) {
        z(3 * k + j) = scale * std::exp(std::log(1e-2) +
                                        rng.uniform() * std::log(1e4));
      }
    } else {
      // Log-uniform rates over a wider band, states from the rate-space
      // reduction.
      RVector s(k);
      for (int j = 0; j < k; ++j) {
        s(j) = std::log(scale) + std::log(1e-10) + rng.uniform() * std::log(1e13);
      }
      auto solved = reduced_newton(reduced, s, opts.max_iterations);
      StartResult fail;
      if (!solved) return fail;
      auto states = reduced.states(*solved);
      if (!states) return fail;
      for (int j = 0; j < k; ++j) {
        z.segment<3>(3 * j) = (*states)[j];
        z(3 * k + j) = std::exp((*solved)(j));
      }
    }
    StartResult res;
    const double nf = damped_newton(full, z, opts.newton_tol, opts.max_iterations);
    if (!(nf < opts.newton_tol)) return res;
    res.outcome = StartOutcome::kRejected;
    for (int j = 0; j < k; ++j) {
      res.states.push_back(full.state(z, j));
      res.rates.push_back(z(3 * k + j));
    }
    for (int j = 0; j < k; ++j) {
      if (!(res.rates[j] > opts.min_rate * scale)) return res;
      if (std::abs(res.states[j].norm() - 1.0) > opts.norm_tol) return res;
      for (int i = 0; i < j; ++i) {
        if ((res.states[i] - res.states[j]).cwiseAbs().maxCoeff() <=
            opts.dedup_tol) {
          return res;
        }
      }
    }
    res.outcome = StartOutcome::kAccepted;
    canonical_rotation(res);
    return res;
  };

  std::vector<StartResult> results(std::max(opts.n_starts, 0));
  unsigned threads = opts.threads ? opts.threads : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, results.size()));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < static_cast<int>(results.size()); i = next++) {
      results[i] = run_start(i);
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  CyclicSearchResult out;
  auto& diag = out.diagnostics;
  diag.starts = static_cast<int>(results.size());
  for (auto& r : results) {
    if (r.outcome == StartOutcome::kNotConverged) {
      ++diag.not_converged;
      continue;
    }
    ++diag.converged;
    if (r.outcome == StartOutcome::kRejected) {
      ++diag.rejected;
      continue;
    }
    bool dup = false;
    for (const auto& e : out.ensembles) {
      if (cyclic_state_distance(e.states, r.states) < opts.dedup_tol) {
        dup = true;
        break;
      }
    }
    if (dup) {
      ++diag.duplicates;
      continue;
    }
    PREnsemble ens;
    ens.states = r.states;
    ens.rates = RMatrix::Zero(k, k);
    for (int j = 0; j < k; ++j) ens.rates(j, (j + 1) % k) = r.rates[j];
    const PRCheck check = check_pr(bloch, ens.states, opts.norm_tol);
    if (!check.feasible) {
      ++diag.rejected;
      continue;
    }
    ens.residual = check.residual;
    ens.probs = stationary_probs_from_rates(ens.rates);
    out.ensembles.push_back(std::move(ens));
  }
  std::sort(out.ensembles.begin(), out.ensembles.end(),
            [](const PREnsemble& a, const PREnsemble& b) {
              const double ha = a.entropy(), hb = b.entropy();
              if (std::abs(ha - hb) > 1e-9) return ha < hb;
              for (int j = 0; j < a.size(); ++j) {
                for (int axis = 0; axis < 3; ++axis) {
                  const double d = a.states[j](axis) - b.states[j](axis);
                  if (std::abs(d) > 1e-9) return d < 0.0;
                }
              }
              return false;
            });
  return out;
}

std::vector<double> stationary_probs_from_rates(const RMatrix& rates) {
  const int k = static_cast<int>(rates.rows());
  if (k < 1 || rates.cols() != k) {
    throw Error(Errc::kPrecondition, "rate matrix must be square");
  }
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < k; ++i) {
      if (rates(j, i) < 0.0 || (i == j && rates(j, i) != 0.0)) {
        throw Error(Errc::kPrecondition,
                    "rates must be nonnegative with zero diagonal");
      }
    }
  }
  // Strong connectivity: every node reachable from 0 along edges and along
  // reversed edges.
  for (bool reversed : {false, true}) {
    std::vector<bool> seen(k, false);
    std::vector<int> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const int j = stack.back();
      stack.pop_back();
      for (int i = 0; i < k; ++i) {
        const double w = reversed ? rates(i, j) : rates(j, i);
        if (w > 0.0 && !seen[i]) {
          seen[i] = true;
          stack.push_back(i);
        }
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw Error(Errc::kIrreducibility, "rate graph is not strongly connected");
    }
  }
  if (k == 1) return {1.0};
  // pi Q = 0 with the last balance equation replaced by sum(pi) = 1.
  RMatrix m(k, k);
  for (int j = 0; j < k; ++j) {
    for (int i = 0; i < k; ++i) {
      m(i, j) = (i == j) ? -rates.row(j).sum() : rates(j, i);
    }
  }
  m.row(k - 1).setOnes();
  RVector rhs = RVector::Zero(k);
  rhs(k - 1) = 1.0;
  const RVector pi = m.fullPivLu().solve(rhs);
  return {pi.data(), pi.data() + k};
}

double shannon_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p < -kDefaultTol) {
      throw Error(Errc::kPrecondition, "negative probability", p);
    }
    if (p > 0.0) h -= p * std::log2(p);
  }
  return std::max(h, 0.0);
}

DofCount dof_count(int dim, int k) {
  if (dim < 2 || k < 1) throw Error(Errc::kPrecondition, "need D >= 2, K >= 1");
  DofCount c;
  c.constraints = static_cast<long>(k) * dim * dim;
  c.unknowns = static_cast<long>(k) * (2L * dim + k - 2);
  c.underdetermined = c.unknowns > c.constraints;
  return c;
}

}  // namespace qtrack
