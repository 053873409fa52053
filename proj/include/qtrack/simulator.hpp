#pragma once

// Quantum-jump simulation driven by a K-state classical memory.
//
// Every trajectory draws from its own Philox stream (seed, trajectory index),
// so results do not depend on thread count or scheduling.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "qtrack/lindblad.hpp"
#include "qtrack/unravelling.hpp"

namespace qtrack {

struct Segment {
  int state = 0;      // memory state (adaptive) or 0 (plain)
  double dwell = 0.0;
  bool ends_in_jump = true;

  bool operator==(const Segment&) const = default;
};

struct TrajectoryRecord {
  std::vector<Segment> segments;
  long jump_count = 0;
  double total_time = 0.0;
  // Largest Bloch-sphere distance 2 sqrt(1 - |<phi_k|psi>|^2) between the
  // conditioned state and its nominal memory state.
  double max_state_deviation = 0.0;
  // Distinct grid cells visited at the configured resolution.
  std::size_t distinct_states = 0;

  bool operator==(const TrajectoryRecord&) const = default;
};

enum class JumpSampling {
  // First-order Bernoulli jump per step, no-jump evolution by the exact
  // step propagator; tracks the conditioned state and tests confinement.
  kStepwise,
  // Exponential waiting times at rate |b_k|^2; assumes confinement.
  kExactWaiting,
};

struct SimOptions {
  double t_final = 1000.0;
  double dt = 1e-3;  // upper bound; reduced so max_rate * dt <= 1e-3
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  JumpSampling sampling = JumpSampling::kStepwise;
  double confinement_tol = 1e-6;
  double resolution = 0.01;  // grid cell size for distinct_states
};

// Throws kConfinementViolation (value = time) when the conditioned state
// drifts further than confinement_tol from |phi_k>.
TrajectoryRecord simulate_adaptive(const MasterEquation& me,
                                   const AdaptiveScheme& scheme,
                                   const SimOptions& opts);

// beta = 0, S = identity unravelling from psi0. distinct_states holds the
// count of visited grid cells.
TrajectoryRecord simulate_plain(const MasterEquation& me, const CVector& psi0,
                                const SimOptions& opts);

struct OccupationStats {
  std::vector<double> empirical_probs;
  std::vector<double> stderr_;
  long n_jumps = 0;
};

struct BootstrapOptions {
  int n_blocks = 50;
  int n_resamples = 400;
  std::uint64_t seed = 7;
};

OccupationStats occupation_stats(const TrajectoryRecord& record, int k,
                                 const BootstrapOptions& opts = {});

// Block-bootstrap standard error of an arbitrary functional of the
// occupation fractions.
double bootstrap_stderr(
    const TrajectoryRecord& record, int k,
    const std::function<double(const std::vector<double>&)>& functional,
    const BootstrapOptions& opts = {});

std::vector<double> occupation_fractions(const TrajectoryRecord& record, int k);

// Mean of |psi(t)><psi(t)| over n_traj trajectories. Adaptive trajectories
// start in |phi_0>.
std::vector<CMatrix> ensemble_average(const MasterEquation& me,
                                      const AdaptiveScheme& scheme, int n_traj,
                                      const std::vector<double>& t_grid,
                                      const SimOptions& opts);

std::vector<CMatrix> ensemble_average_plain(const MasterEquation& me,
                                            const CVector& psi0, int n_traj,
                                            const std::vector<double>& t_grid,
                                            const SimOptions& opts);

double trace_distance(const CMatrix& a, const CMatrix& b);

// Kolmogorov-Smirnov test of samples against Exp(rate). Returns the
// asymptotic p-value.
double ks_exponential_pvalue(std::vector<double> samples, double rate);

// CSV with columns time,memory_state,event (event in {jump,end}); one row per
// segment, time = segment end.
void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& record);

}  // namespace qtrack
