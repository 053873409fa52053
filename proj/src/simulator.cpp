#include "qtrack/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <thread>
#include <unordered_set>

#include <unsupported/Eigen/MatrixFunctions>

#include "qtrack/error.hpp"
#include "qtrack/philox.hpp"

namespace qtrack {
namespace {

double spectral_norm_sq(const CMatrix& m) {
  Eigen::JacobiSVD<CMatrix> svd(m);
  const double s = svd.singularValues()(0);
  return s * s;
}

// Grid hashing of a pure state. Qubits use the Bloch vector; larger systems
// use the phase-fixed amplitudes.
class CellSet {
 public:
  explicit CellSet(double resolution) : resolution_(resolution) {}

  void insert(const CVector& psi) {
    std::vector<double> coords;
    if (psi.size() == 2) {
      const Vec3 r = density_to_bloch(psi * psi.adjoint());
      coords.assign(r.data(), r.data() + 3);
    } else {
      const CVector u = fix_phase(psi);
      for (Eigen::Index i = 0; i < u.size(); ++i) {
        coords.push_back(u(i).real());
        coords.push_back(u(i).imag());
      }
    }
    std::size_t h = 0;
    for (double x : coords) {
      const auto cell = static_cast<long long>(std::floor(x / resolution_));
      h ^= std::hash<long long>{}(cell) + 0x9e3779b97f4a7c15ULL + (h << 6) +
           (h >> 2);
    }
    cells_.insert(h);
  }

  std::size_t size() const { return cells_.size(); }

 private:
  double resolution_;
  std::unordered_set<std::size_t> cells_;
};

// Per-memory-state dynamics for the stepwise integrator.
struct Channel {
  std::vector<CMatrix> jumps;
  CMatrix propagator;  // exp(-i H_eff dt)
};

using StepObserver = std::function<void(double t, const CVector& psi, int k)>;

struct StepwiseSetup {
  std::vector<Channel> channels;
  bool advance_memory = false;      // adaptive: k -> k+1 on every jump
  const std::vector<CVector>* nominal = nullptr;
  double dt = 0.0;
  long steps = 0;
};

StepwiseSetup make_setup(const std::vector<std::vector<CMatrix>>& jumps,
                         const std::vector<CMatrix>& heffs,
                         const SimOptions& opts) {
  if (!(opts.dt > 0.0) || opts.t_final < 0.0) {
    throw Error(Errc::kPrecondition, "need dt > 0 and t_final >= 0");
  }
  double max_rate = 0.0;
  for (const auto& ops : jumps) {
    double r = 0.0;
    for (const auto& c : ops) r += spectral_norm_sq(c);
    max_rate = std::max(max_rate, r);
  }
  double dt = opts.dt;
  if (max_rate > 0.0) dt = std::min(dt, 1e-3 / max_rate);
  StepwiseSetup s;
  s.steps = std::max(1L, static_cast<long>(std::ceil(opts.t_final / dt - 1e-9)));
  s.dt = opts.t_final > 0.0 ? opts.t_final / static_cast<double>(s.steps) : 0.0;
  if (opts.t_final == 0.0) s.steps = 0;
  for (std::size_t k = 0; k < heffs.size(); ++k) {
    const CMatrix gen = -kI * heffs[k] * s.dt;
    s.channels.push_back({jumps[k], gen.exp()});
  }
  return s;
}

TrajectoryRecord run_stepwise(const StepwiseSetup& setup, CVector psi, int k,
                              const SimOptions& opts,
                              const StepObserver& observe) {
  Philox4x32 rng(opts.seed, opts.stream);
  const int num_states = static_cast<int>(setup.channels.size());
  TrajectoryRecord rec;
  CellSet cells(opts.resolution);
  psi.normalize();
  cells.insert(setup.nominal ? (*setup.nominal)[k] : psi);
  if (observe) observe(0.0, psi, k);
  double t = 0.0;
  double seg_start = 0.0;
  CVector scratch(psi.size());
  for (long step = 0; step < setup.steps; ++step) {
    const Channel& ch = setup.channels[k];
    const double u = rng.uniform();
    double acc = 0.0;
    int fired = -1;
    for (std::size_t l = 0; l < ch.jumps.size(); ++l) {
      scratch.noalias() = ch.jumps[l] * psi;
      acc += scratch.squaredNorm() * setup.dt;
      if (u < acc) {
        fired = static_cast<int>(l);
        break;
      }
    }
    t = static_cast<double>(step + 1) * setup.dt;
    if (fired >= 0) {
      psi = scratch / scratch.norm();
      rec.segments.push_back({k, t - seg_start, true});
      seg_start = t;
      ++rec.jump_count;
      if (setup.advance_memory) k = (k + 1) % num_states;
    } else {
      scratch.noalias() = ch.propagator * psi;
      psi = scratch / scratch.norm();
    }
    if (setup.nominal) {
      const CVector& phi = (*setup.nominal)[k];
      const double dev = 2.0 * (psi - phi.dot(psi) * phi).norm();
      rec.max_state_deviation = std::max(rec.max_state_deviation, dev);
      if (dev > opts.confinement_tol) {
        throw Error(Errc::kConfinementViolation,
                    "conditioned state left its memory state", t);
      }
    }
    // Confinement holds here, so the adaptive state is counted as |phi_k>.
    cells.insert(setup.nominal ? (*setup.nominal)[k] : psi);
    if (observe) observe(t, psi, k);
  }
  if (t > seg_start) rec.segments.push_back({k, t - seg_start, false});
  rec.total_time = t;
  rec.distinct_states = cells.size();
  return rec;
}

TrajectoryRecord run_exact_waiting(const AdaptiveScheme& scheme,
                                   const SimOptions& opts,
                                   const StepObserver& observe) {
  Philox4x32 rng(opts.seed, opts.stream);
  const int num_states = scheme.size();
  TrajectoryRecord rec;
  CellSet cells(opts.resolution);
  int k = 0;
  double t = 0.0;
  cells.insert(scheme.cycle[0]);
  if (observe) observe(0.0, scheme.cycle[0], 0);
  while (t < opts.t_final) {
    const double wait = -std::log(rng.uniform()) / scheme.jump_rates[k];
    if (t + wait >= opts.t_final) {
      rec.segments.push_back({k, opts.t_final - t, false});
      t = opts.t_final;
      break;
    }
    t += wait;
    rec.segments.push_back({k, wait, true});
    ++rec.jump_count;
    k = (k + 1) % num_states;
    cells.insert(scheme.cycle[k]);
    if (observe) observe(t, scheme.cycle[k], k);
  }
  rec.total_time = t;
  rec.distinct_states = cells.size();
  return rec;
}

TrajectoryRecord run_adaptive(const MasterEquation& me,
                              const AdaptiveScheme& scheme,
                              const SimOptions& opts,
                              const StepObserver& observe) {
  if (scheme.size() < 2 || scheme.cycle.front().size() != me.dim()) {
    throw Error(Errc::kPrecondition, "scheme does not match the model");
  }
  if (opts.sampling == JumpSampling::kExactWaiting) {
    return run_exact_waiting(scheme, opts, observe);
  }
  std::vector<std::vector<CMatrix>> jumps;
  for (const auto& c : scheme.jump_ops) jumps.push_back({c});
  StepwiseSetup setup = make_setup(jumps, scheme.eff_hams, opts);
  setup.advance_memory = true;
  setup.nominal = &scheme.cycle;
  return run_stepwise(setup, scheme.cycle.front(), 0, opts, observe);
}

TrajectoryRecord run_plain(const MasterEquation& me, const CVector& psi0,
                           const SimOptions& opts, const StepObserver& observe) {
  if (psi0.size() != me.dim()) {
    throw Error(Errc::kModel, "initial state has the wrong dimension");
  }
  const StepwiseSetup setup =
      make_setup({me.jump_ops()}, {effective_hamiltonian(me)}, opts);
  return run_stepwise(setup, psi0, 0, opts, observe);
}

// Runs `n` independent jobs on up to hardware_concurrency threads.
void parallel_for(int n, const std::function<void(int)>& job) {
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, std::max(n, 1));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) job(i);
  };
  if (threads == 1) {
    worker();
    return;
  }
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
}

std::vector<CMatrix> average_on_grid(
    int n_traj, const std::vector<double>& t_grid, int dim,
    const std::function<TrajectoryRecord(int, const StepObserver&)>& run) {
  if (n_traj < 1) throw Error(Errc::kPrecondition, "need n_traj >= 1");
  if (!std::is_sorted(t_grid.begin(), t_grid.end())) {
    throw Error(Errc::kPrecondition, "time grid must be sorted");
  }
  const std::size_t n_grid = t_grid.size();
  std::vector<std::vector<CMatrix>> per_traj(n_traj);
  parallel_for(n_traj, [&](int i) {
    std::vector<CMatrix> samples(n_grid, CMatrix::Zero(dim, dim));
    std::size_t g = 0;
    CVector last;
    auto observe = [&](double t, const CVector& psi, int) {
      // Record every grid time passed since the previous observation with the
      // state that held over that interval.
      while (g < n_grid && t_grid[g] < t - 1e-12) {
        samples[g] = last * last.adjoint();
        ++g;
      }
      last = psi;
      while (g < n_grid && t_grid[g] <= t + 1e-12) {
        samples[g] = psi * psi.adjoint();
        ++g;
      }
    };
    run(i, observe);
    for (; g < n_grid; ++g) samples[g] = last * last.adjoint();
    per_traj[i] = std::move(samples);
  });
  std::vector<CMatrix> mean(n_grid, CMatrix::Zero(dim, dim));
  for (const auto& samples : per_traj) {
    for (std::size_t g = 0; g < n_grid; ++g) mean[g] += samples[g];
  }
  for (auto& m : mean) m /= static_cast<double>(n_traj);
  return mean;
}

}  // namespace

TrajectoryRecord simulate_adaptive(const MasterEquation& me,
                                   const AdaptiveScheme& scheme,
                                   const SimOptions& opts) {
  return run_adaptive(me, scheme, opts, {});
}

TrajectoryRecord simulate_plain(const MasterEquation& me, const CVector& psi0,
                                const SimOptions& opts) {
  return run_plain(me, psi0, opts, {});
}

std::vector<double> occupation_fractions(const TrajectoryRecord& record, int k) {
  std::vector<double> f(k, 0.0);
  double total = 0.0;
  for (const auto& s : record.segments) {
    f.at(s.state) += s.dwell;
    total += s.dwell;
  }
  if (!(total > 0.0)) throw Error(Errc::kPrecondition, "empty trajectory");
  for (double& x : f) x /= total;
  return f;
}

double bootstrap_stderr(
    const TrajectoryRecord& record, int k,
    const std::function<double(const std::vector<double>&)>& functional,
    const BootstrapOptions& opts) {
  const std::size_t n_seg = record.segments.size();
  if (n_seg == 0) throw Error(Errc::kPrecondition, "empty trajectory");
  const std::size_t n_blocks =
      std::min<std::size_t>(std::max(opts.n_blocks, 1), n_seg);
  std::vector<std::vector<double>> blocks(n_blocks, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < n_seg; ++i) {
    const auto& s = record.segments[i];
    blocks[i * n_blocks / n_seg].at(s.state) += s.dwell;
  }
  Philox4x32 rng(opts.seed, 0);
  double sum = 0.0, sum_sq = 0.0;
  for (int r = 0; r < opts.n_resamples; ++r) {
    std::vector<double> totals(k, 0.0);
    for (std::size_t b = 0; b < n_blocks; ++b) {
      const auto pick = static_cast<std::size_t>(rng.uniform() * n_blocks);
      for (int j = 0; j < k; ++j) totals[j] += blocks[std::min(pick, n_blocks - 1)][j];
    }
    double total = 0.0;
    for (double x : totals) total += x;
    for (double& x : totals) x /= total;
    const double v = functional(totals);
    sum += v;
    sum_sq += v * v;
  }
  const double n = opts.n_resamples;
  return std::sqrt(std::max(0.0, sum_sq / n - (sum / n) * (sum / n)) * n /
                   std::max(n - 1.0, 1.0));
}

OccupationStats occupation_stats(const TrajectoryRecord& record, int k,
                                 const BootstrapOptions& opts) {
  if (!(record.total_time > 0.0)) {
    throw Error(Errc::kPrecondition, "need total_time > 0");
  }
  OccupationStats st;
  st.empirical_probs = occupation_fractions(record, k);
  st.n_jumps = record.jump_count;
  for (int j = 0; j < k; ++j) {
    st.stderr_.push_back(bootstrap_stderr(
        record, k, [j](const std::vector<double>& f) { return f[j]; }, opts));
  }
  return st;
}

std::vector<CMatrix> ensemble_average(const MasterEquation& me,
                                      const AdaptiveScheme& scheme, int n_traj,
                                      const std::vector<double>& t_grid,
                                      const SimOptions& opts) {
  SimOptions o = opts;
  if (!t_grid.empty()) o.t_final = t_grid.back();
  return average_on_grid(n_traj, t_grid, me.dim(),
                         [&](int i, const StepObserver& obs) {
                           SimOptions oi = o;
                           oi.stream = static_cast<std::uint64_t>(i);
                           return run_adaptive(me, scheme, oi, obs);
                         });
}

std::vector<CMatrix> ensemble_average_plain(const MasterEquation& me,
                                            const CVector& psi0, int n_traj,
                                            const std::vector<double>& t_grid,
                                            const SimOptions& opts) {
  SimOptions o = opts;
  if (!t_grid.empty()) o.t_final = t_grid.back();
  return average_on_grid(n_traj, t_grid, me.dim(),
                         [&](int i, const StepObserver& obs) {
                           SimOptions oi = o;
                           oi.stream = static_cast<std::uint64_t>(i);
                           return run_plain(me, psi0, oi, obs);
                         });
}

double trace_distance(const CMatrix& a, const CMatrix& b) {
  const CMatrix d = 0.5 * ((a - b) + (a - b).adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(d, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

double ks_exponential_pvalue(std::vector<double> samples, double rate) {
  const std::size_t n = samples.size();
  if (n == 0 || !(rate > 0.0)) {
    throw Error(Errc::kPrecondition, "need samples and a positive rate");
  }
  std::sort(samples.begin(), samples.end());
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double cdf = 1.0 - std::exp(-rate * samples[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - cdf,
                  cdf - static_cast<double>(i) / n});
  }
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double p = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    p += (j % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& record) {
  os << "time,memory_state,event\n";
  os << std::setprecision(17);
  double t = 0.0;
  for (const auto& s : record.segments) {
    t += s.dwell;
    os << t << ',' << s.state << ',' << (s.ends_in_jump ? "jump" : "end")
       << '\n';
  }
}

}  // namespace qtrack
