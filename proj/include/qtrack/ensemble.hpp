#pragma once

// Physically realizable (PR) qubit ensembles.
//
// An ensemble {wp_k, r_k} of unit Bloch vectors is PR iff there are rates
// kappa_jk >= 0 (j -> k) with
//
//   A r_j + b = sum_k kappa_jk (r_k - r_j)   for every j,
//
// and then wp is the stationary distribution of the jump chain.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qtrack/lindblad.hpp"

namespace qtrack {

struct PREnsemble {
  std::vector<Vec3> states;
  std::vector<double> probs;
  RMatrix rates;            // K x K, kappa(j, k) is the rate j -> k
  double residual = 0.0;    // from check_pr
  double eigenvalue = 0.0;  // two-state construction only: lambda of A
  Vec3 eigenvector = Vec3::Zero();

  int size() const { return static_cast<int>(states.size()); }
  double entropy() const;
};

struct PRCheck {
  bool feasible = false;
  RMatrix rates;
  double residual = 0.0;  // max over j of the NNLS residual norm
};

// Feasibility threshold is `tol * bloch.rate_scale()`.
PRCheck check_pr(const BlochModel& bloch, std::span<const Vec3> states,
                 double tol = 1e-8);

// One ensemble per real eigenvector of A. Eigenvectors are oriented with
// <r_ss, v> <= 0 so that wp_1 >= 1/2.
std::vector<PREnsemble> two_state_qubit_ensembles(const BlochModel& bloch);

struct CyclicSearchOptions {
  int n_starts = 2000;
  std::uint64_t seed = 1;
  double newton_tol = 1e-10;
  double min_rate = 1e-8;
  double norm_tol = 1e-8;
  double dedup_tol = 1e-6;
  int max_iterations = 200;
  unsigned threads = 0;  // 0: hardware concurrency
};

struct SearchDiagnostics {
  int starts = 0;
  int converged = 0;      // Newton residual below newton_tol
  int not_converged = 0;  // discarded silently
  int rejected = 0;       // converged but failed positivity/norm/distinctness
  int duplicates = 0;
};

struct CyclicSearchResult {
  std::vector<PREnsemble> ensembles;  // sorted by entropy, then states
  SearchDiagnostics diagnostics;
};

CyclicSearchResult cyclic_k_state_search(const BlochModel& bloch, int k,
                                         const CyclicSearchOptions& opts = {});

// Stationary distribution of the CTMC with off-diagonal generator entries
// rates(j, k).
std::vector<double> stationary_probs_from_rates(const RMatrix& rates);

double shannon_entropy(std::span<const double> probs);

struct DofCount {
  long constraints = 0;
  long unknowns = 0;
  bool underdetermined = false;
};

DofCount dof_count(int dim, int k);

// Smallest distance between two equally sized state lists over cyclic
// relabellings of the second (max-norm over coordinates).
double cyclic_state_distance(std::span<const Vec3> a, std::span<const Vec3> b);

}  // namespace qtrack
