#include "qtrack/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "qtrack/error.hpp"
#include "qtrack/fluorescence.hpp"
#include "qtrack/philox.hpp"
#include "qtrack/simulator.hpp"
#include "qtrack/unravelling.hpp"

namespace qtrack {
namespace {

constexpr double kGamma = 1.0;

// Pinned tolerances (multiplied by tolerance_scale).
constexpr double kQubitResidualTol = 1e-8;
constexpr double kMixtureTol = 1e-8;
constexpr double kHalfTol = 1e-10;
constexpr double kGapRatioTarget = 8.0;
constexpr double kGapRatioFactor = 2.0;
constexpr double kLimitTol = 0.02;
constexpr double kEntropyLimitHigh = 1.206;
constexpr double kEntropyBoundSlack = 1e-9;
constexpr double kBackoutResidualTol = 1e-9;
constexpr double kRateMatchTol = 1e-6;
constexpr double kConfinementTol = 1e-6;
constexpr double kStderrMultiple = 3.0;
constexpr double kTraceDistanceTol = 0.05;

struct EntropySample {
  std::string where;
  double h;
  double s;
};

struct Context {
  AcceptanceConfig cfg;
  std::vector<EntropySample> entropies;

  double tol(double t) const { return t * cfg.tolerance_scale; }

  void record(const std::string& where, const PREnsemble& ens, double s) {
    entropies.push_back({where, ens.entropy(), s});
  }
};

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

MasterEquation fluor(double eps) {
  return build_fluorescence_me(kGamma, omega_from_epsilon(kGamma, eps));
}

double s_vn(const MasterEquation& me) { return von_neumann_entropy(steady_state(me)); }

std::vector<PREnsemble> three_state(const MasterEquation& me, const Context& ctx,
                                    std::uint64_t seed) {
  CyclicSearchOptions opts;
  opts.n_starts = ctx.cfg.n_starts;
  opts.seed = seed;
  return cyclic_k_state_search(to_bloch(me), 3, opts).ensembles;
}

const PREnsemble* find_family(const std::vector<PREnsemble>& ens, double eps,
                              const std::string& id) {
  for (const auto& e : ens) {
    if (two_state_family(e, kGamma, omega_from_epsilon(kGamma, eps)) == id) return &e;
  }
  return nullptr;
}

// Random qubit ME: Gaussian Hermitian H and 1-3 Gaussian jump operators.
MasterEquation random_qubit_me(Philox4x32& rng) {
  std::normal_distribution<double> normal;
  auto gauss = [&] {
    CMatrix m(2, 2);
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) m(i, j) = Complex(normal(rng), normal(rng));
    }
    return m;
  };
  const CMatrix g = gauss();
  CMatrix h = 0.5 * (g + g.adjoint());
  std::vector<CMatrix> ops;
  const int n_ops = 1 + static_cast<int>(rng() % 3);
  for (int l = 0; l < n_ops; ++l) ops.push_back(gauss());
  return MasterEquation(std::move(h), std::move(ops));
}

CriterionResult c1_qubit_two_state(Context& ctx) {
  CriterionResult r{1, "qubit two-state ensemble always exists", false, {}, {}, 0.0};
  Philox4x32 rng(ctx.cfg.seed, 101);
  int tested = 0, failures = 0, drawn = 0;
  double worst_residual = 0.0, worst_mixture = 0.0;
  while (tested < 200) {
    ++drawn;
    const MasterEquation me = random_qubit_me(rng);
    const BlochModel bloch = to_bloch(me);
    if (!bloch.ergodic() || bloch.steady_state().norm() > 1.0 - 1e-6) continue;
    ++tested;
    const CMatrix rho = steady_state(me).matrix();
    const double s = von_neumann_entropy(DensityMatrix(rho));
    const auto ensembles = two_state_qubit_ensembles(bloch);
    if (ensembles.empty()) ++failures;
    for (const auto& ens : ensembles) {
      ctx.record("random qubit", ens, s);
      const PRCheck pr = check_pr(bloch, ens.states);
      CMatrix mix = CMatrix::Zero(2, 2);
      for (int k = 0; k < ens.size(); ++k) {
        mix += ens.probs[k] * bloch_to_density(ens.states[k]);
      }
      const double dm = (mix - rho).cwiseAbs().maxCoeff();
      worst_residual = std::max(worst_residual, pr.residual);
      worst_mixture = std::max(worst_mixture, dm);
      if (!pr.feasible || pr.residual >= ctx.tol(kQubitResidualTol) ||
          dm >= ctx.tol(kMixtureTol)) {
        ++failures;
      }
    }
  }
  r.pass = failures == 0;
  r.measured = {{"models", tested},
                {"drawn", drawn},
                {"failures", failures},
                {"max_pr_residual", worst_residual},
                {"max_mixture_error", worst_mixture}};
  r.detail = std::to_string(tested) + " models, " + std::to_string(failures) +
             " failures, max residual " + fmt("%.2e", worst_residual) +
             ", max mixture error " + fmt("%.2e", worst_mixture);
  return r;
}

CriterionResult c2_h_one_family(Context& ctx) {
  CriterionResult r{2, "v1 family has wp = (1/2, 1/2) and h = 1", false, {}, {}, 0.0};
  double worst_p = 0.0, worst_h = 0.0;
  int points = 0, missing = 0;
  for (double eps : default_epsilon_grid()) {
    const MasterEquation me = fluor(eps);
    const auto ens = two_state_qubit_ensembles(to_bloch(me));
    const PREnsemble* v1 = find_family(ens, eps, "v1");
    ++points;
    if (!v1) {
      ++missing;
      continue;
    }
    ctx.record("v1 eps=" + fmt("%.4g", eps), *v1, s_vn(me));
    for (double p : v1->probs) worst_p = std::max(worst_p, std::abs(p - 0.5));
    worst_h = std::max(worst_h, std::abs(v1->entropy() - 1.0));
  }
  r.pass = missing == 0 && worst_p < ctx.tol(kHalfTol) && worst_h < ctx.tol(kHalfTol);
  r.measured = {{"grid_points", points},
                {"missing", missing},
                {"max_prob_error", worst_p},
                {"max_entropy_error", worst_h}};
  r.detail = std::to_string(points) + " grid points, max |wp-1/2| " +
             fmt("%.2e", worst_p) + ", max |h-1| " + fmt("%.2e", worst_h);
  return r;
}

CriterionResult c3_thresholds(Context& ctx) {
  CriterionResult r{3, "existence thresholds and 3-state counts", false, {}, {}, 0.0};
  auto has_pm = [&](double eps) {
    const auto ens = two_state_qubit_ensembles(to_bloch(fluor(eps)));
    return find_family(ens, eps, "v+") != nullptr && find_family(ens, eps, "v-") != nullptr;
  };
  const bool below = has_pm(0.0624);
  const bool above = has_pm(0.0626);
  const std::vector<std::pair<double, int>> expected = {
      {0.07, 2}, {0.05, 6}, {0.02, 8}, {0.09, 0}};
  bool counts_ok = true;
  Json counts = Json::object();
  std::string summary;
  for (const auto& [eps, want] : expected) {
    const MasterEquation me = fluor(eps);
    const double s = s_vn(me);
    Json per_seed = Json::array();
    for (std::uint64_t d = 0; d < 3; ++d) {
      const auto ens = three_state(me, ctx, ctx.cfg.seed + d);
      for (const auto& e : ens) ctx.record("3-state eps=" + fmt("%.4g", eps), e, s);
      per_seed.push_back(static_cast<int>(ens.size()));
      if (static_cast<int>(ens.size()) != want) counts_ok = false;
    }
    counts[fmt("%.4g", eps)] = per_seed;
    summary += " eps=" + fmt("%.4g", eps) + ":" + per_seed.dump();
  }
  r.pass = below && !above && counts_ok;
  r.measured = {{"v_pm_at_0.0624", below}, {"v_pm_at_0.0626", above}, {"three_state_counts", counts}};
  r.detail = std::string("v+- at 0.0624: ") + (below ? "yes" : "no") +
             ", at 0.0626: " + (above ? "yes" : "no") + "; counts" + summary;
  return r;
}

CriterionResult c4_entropy_gap(Context& ctx) {
  CriterionResult r{4, "small-drive entropy gap scales as eps^3", false, {}, {}, 0.0};
  const std::vector<double> grid = {0.01, 0.005, 0.0025};
  std::vector<double> gaps;
  bool ok = true;
  for (double eps : grid) {
    const MasterEquation me = fluor(eps);
    const double s = s_vn(me);
    const auto ens = two_state_qubit_ensembles(to_bloch(me));
    const PREnsemble* vm = find_family(ens, eps, "v-");
    if (!vm) {
      ok = false;
      gaps.push_back(std::nan(""));
      continue;
    }
    ctx.record("v- eps=" + fmt("%.4g", eps), *vm, s);
    gaps.push_back(vm->entropy() - s);
  }
  const double factor = 1.0 + (kGapRatioFactor - 1.0) * ctx.cfg.tolerance_scale;
  Json ratios = Json::array(), scaled = Json::array();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    scaled.push_back(gaps[i] / std::pow(grid[i], 3));
  }
  for (std::size_t i = 0; i + 1 < gaps.size(); ++i) {
    const double ratio = gaps[i] / gaps[i + 1];
    ratios.push_back(ratio);
    if (!(ratio >= kGapRatioTarget / factor && ratio <= kGapRatioTarget * factor)) ok = false;
  }
  r.pass = ok;
  r.measured = {{"epsilon", grid}, {"gap", gaps}, {"gap_over_eps3", scaled}, {"ratios", ratios}};
  r.detail = "gap/eps^3 = " + scaled.dump() + ", successive ratios " + ratios.dump();
  return r;
}

CriterionResult c5_limits(Context& ctx) {
  CriterionResult r{5, "3-state entropies approach 1.206 and 0", false, {}, {}, 0.0};
  const double eps = 1e-4;
  const MasterEquation me = fluor(eps);
  const double s = s_vn(me);
  const auto ens = three_state(me, ctx, ctx.cfg.seed);
  int high = 0, low = 0;
  Json hs = Json::array();
  for (const auto& e : ens) {
    ctx.record("3-state eps=1e-4", e, s);
    const double h = e.entropy();
    hs.push_back(h);
    if (std::abs(h - kEntropyLimitHigh) < ctx.tol(kLimitTol)) ++high;
    if (std::abs(h) < ctx.tol(kLimitTol)) ++low;
  }
  r.pass = high == 4 && low == 4;
  r.measured = {{"epsilon", eps}, {"entropies", hs}, {"near_1.206", high}, {"near_0", low}};
  r.detail = std::to_string(ens.size()) + " solutions, " + std::to_string(high) +
             " near 1.206, " + std::to_string(low) + " near 0; h = " + hs.dump();
  return r;
}

CriterionResult c6_entropy_bound(Context& ctx) {
  CriterionResult r{6, "h >= S(rho_ss) for every ensemble", false, {}, {}, 0.0};
  // Standalone runs gather their own sample.
  if (ctx.entropies.empty()) {
    for (double eps : default_epsilon_grid()) {
      const MasterEquation me = fluor(eps);
      const double s = s_vn(me);
      for (const auto& e : two_state_qubit_ensembles(to_bloch(me))) {
        ctx.record("2-state eps=" + fmt("%.4g", eps), e, s);
      }
    }
    for (double eps : {1e-4, 0.02, 0.04, 0.05, 0.07}) {
      const MasterEquation me = fluor(eps);
      const double s = s_vn(me);
      for (const auto& e : three_state(me, ctx, ctx.cfg.seed)) {
        ctx.record("3-state eps=" + fmt("%.4g", eps), e, s);
      }
    }
  }
  double worst = std::numeric_limits<double>::infinity();
  std::string where;
  int violations = 0;
  for (const auto& e : ctx.entropies) {
    const double margin = e.h - e.s;
    if (margin < worst) {
      worst = margin;
      where = e.where;
    }
    if (margin < -ctx.tol(kEntropyBoundSlack)) ++violations;
  }
  r.pass = violations == 0 && !ctx.entropies.empty();
  r.measured = {{"ensembles", ctx.entropies.size()},
                {"violations", violations},
                {"min_h_minus_s", worst},
                {"min_at", where}};
  r.detail = std::to_string(ctx.entropies.size()) + " ensembles, min h - S = " +
             fmt("%.3e", worst) + " (" + where + ")";
  return r;
}

CriterionResult c7_backout(Context& ctx) {
  CriterionResult r{7, "back-out reproduces the cyclic jumps and rates", false, {}, {}, 0.0};
  double worst_res = 0.0, worst_rate = 0.0;
  int count = 0, failures = 0;
  for (double eps : {0.04, 0.05}) {
    const MasterEquation me = fluor(eps);
    const BlochModel bloch = to_bloch(me);
    const double s = s_vn(me);
    std::vector<PREnsemble> all = two_state_qubit_ensembles(bloch);
    for (auto& e : three_state(me, ctx, ctx.cfg.seed)) all.push_back(std::move(e));
    for (const auto& ens : all) {
      ctx.record("backout eps=" + fmt("%.4g", eps), ens, s);
      ++count;
      try {
        const AdaptiveScheme scheme = backout_beta(me, ens);
        const PRCheck pr = check_pr(bloch, ens.states);
        double rate_err = 0.0;
        for (int k = 0; k < ens.size(); ++k) {
          const double kappa = pr.rates(k, (k + 1) % ens.size());
          rate_err = std::max(rate_err, std::abs(scheme.jump_rates[k] - kappa) /
                                            std::max(kappa, 1e-300));
        }
        worst_res = std::max(worst_res, scheme.max_residual);
        worst_rate = std::max(worst_rate, rate_err);
        if (scheme.max_residual >= ctx.tol(kBackoutResidualTol) ||
            rate_err >= ctx.tol(kRateMatchTol)) {
          ++failures;
        }
      } catch (const Error&) {
        ++failures;
      }
    }
  }
  r.pass = failures == 0 && count > 0;
  r.measured = {{"ensembles", count},
                {"failures", failures},
                {"max_residual", worst_res},
                {"max_rate_rel_error", worst_rate}};
  r.detail = std::to_string(count) + " ensembles, " + std::to_string(failures) +
             " failures, max residual " + fmt("%.2e", worst_res) +
             ", max rate error " + fmt("%.2e", worst_rate);
  return r;
}

// Highest-entropy 3-state ensemble at eps.
PREnsemble best_three_state(double eps, const Context& ctx) {
  auto ens = three_state(fluor(eps), ctx, ctx.cfg.seed);
  if (ens.empty()) throw Error(Errc::kInternal, "no 3-state ensemble found");
  return ens.back();
}

AdaptiveScheme v1_scheme(double eps) {
  const MasterEquation me = fluor(eps);
  const auto ens = two_state_qubit_ensembles(to_bloch(me));
  const PREnsemble* v1 = find_family(ens, eps, "v1");
  if (!v1) throw Error(Errc::kInternal, "v1 ensemble missing");
  return backout_beta(me, *v1);
}

CriterionResult c8_confinement(Context& ctx) {
  CriterionResult r{8, "confinement and memory occupations", false, {}, {}, 0.0};
  bool ok = true;
  Json out = Json::object();
  std::string summary;
  auto check = [&](const std::string& label, const MasterEquation& me,
                   const AdaptiveScheme& scheme, const std::vector<double>& target) {
    SimOptions opts;
    opts.t_final = 1000.0 / kGamma;
    opts.seed = ctx.cfg.seed;
    opts.stream = 8;
    opts.confinement_tol = ctx.tol(kConfinementTol);
    Json m;
    try {
      const TrajectoryRecord rec = simulate_adaptive(me, scheme, opts);
      const OccupationStats st = occupation_stats(rec, scheme.size());
      double worst_z = 0.0;
      for (int k = 0; k < scheme.size(); ++k) {
        worst_z = std::max(worst_z, std::abs(st.empirical_probs[k] - target[k]) /
                                        std::max(st.stderr_[k], 1e-300));
      }
      const bool good = rec.max_state_deviation < ctx.tol(kConfinementTol) &&
                        worst_z <= kStderrMultiple;
      ok = ok && good;
      m = {{"max_state_deviation", rec.max_state_deviation},
           {"jumps", rec.jump_count},
           {"empirical", st.empirical_probs},
           {"stderr", st.stderr_},
           {"target", target},
           {"max_z", worst_z}};
      summary += " " + label + ": dev " + fmt("%.2e", rec.max_state_deviation) +
                 ", jumps " + std::to_string(rec.jump_count) + ", max z " +
                 fmt("%.2f", worst_z) + ";";
    } catch (const Error& e) {
      ok = false;
      m = {{"error", e.what()}, {"time", e.value()}};
      summary += " " + label + ": " + e.what() + ";";
    }
    out[label] = m;
  };
  check("v1 eps=0.04", fluor(0.04), v1_scheme(0.04), {0.5, 0.5});
  const PREnsemble three = best_three_state(0.05, ctx);
  check("3-state eps=0.05", fluor(0.05), backout_beta(fluor(0.05), three), three.probs);
  r.pass = ok;
  r.measured = out;
  r.detail = summary;
  return r;
}

CriterionResult c9_average(Context& ctx) {
  CriterionResult r{9, "trajectory average reproduces the master equation", false, {}, {}, 0.0};
  constexpr int kTrajectories = 5000;
  std::vector<double> grid;
  for (int i = 0; i <= 40; ++i) grid.push_back(0.5 * i / kGamma);
  auto exact_on_grid = [&](const MasterEquation& me, const CVector& psi0) {
    std::vector<CMatrix> out;
    for (double t : grid) out.push_back(integrate_me(me, psi0 * psi0.adjoint(), t, 1e-3));
    return out;
  };
  auto max_distance = [](const std::vector<CMatrix>& a, const std::vector<CMatrix>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, trace_distance(a[i], b[i]));
    return d;
  };
  SimOptions opts;
  opts.seed = ctx.cfg.seed;
  opts.t_final = grid.back();
  opts.sampling = JumpSampling::kExactWaiting;

  const MasterEquation me2 = fluor(0.04);
  const AdaptiveScheme v1 = v1_scheme(0.04);
  const auto exact2 = exact_on_grid(me2, v1.cycle[0]);
  const double d_v1 = max_distance(ensemble_average(me2, v1, kTrajectories, grid, opts), exact2);

  const MasterEquation me3 = fluor(0.05);
  const AdaptiveScheme three = backout_beta(me3, best_three_state(0.05, ctx));
  const double d_three = max_distance(
      ensemble_average(me3, three, kTrajectories, grid, opts), exact_on_grid(me3, three.cycle[0]));

  opts.sampling = JumpSampling::kStepwise;
  opts.seed = ctx.cfg.seed + 1;
  const double d_plain =
      max_distance(ensemble_average_plain(me2, v1.cycle[0], kTrajectories, grid, opts), exact2);

  const double tol = ctx.tol(kTraceDistanceTol);
  r.pass = d_v1 < tol && d_three < tol && d_plain < tol;
  r.measured = {{"trajectories", kTrajectories},
                {"max_trace_distance_v1", d_v1},
                {"max_trace_distance_3_state", d_three},
                {"max_trace_distance_plain", d_plain}};
  r.detail = "max trace distance: v1 scheme " + fmt("%.4f", d_v1) + ", 3-state scheme " +
             fmt("%.4f", d_three) + ", plain " + fmt("%.4f", d_plain);
  return r;
}

CriterionResult c10_distinct(Context& ctx) {
  CriterionResult r{10, "plain unravelling visits many states, adaptive visits K", false, {}, {}, 0.0};
  const double eps = 0.04;
  const MasterEquation me = fluor(eps);
  const AdaptiveScheme scheme = v1_scheme(eps);
  SimOptions opts;
  opts.t_final = 1000.0 / kGamma;
  opts.seed = ctx.cfg.seed;
  opts.stream = 10;
  opts.resolution = 0.01;
  CVector ground = CVector::Zero(2);
  ground(0) = 1.0;
  const TrajectoryRecord plain = simulate_plain(me, ground, opts);
  const TrajectoryRecord adaptive = simulate_adaptive(me, scheme, opts);
  r.pass = plain.distinct_states > 100 &&
           adaptive.distinct_states == static_cast<std::size_t>(scheme.size());
  r.measured = {{"plain_distinct", plain.distinct_states},
                {"adaptive_distinct", adaptive.distinct_states},
                {"K", scheme.size()}};
  r.detail = "plain " + std::to_string(plain.distinct_states) + " cells, adaptive " +
             std::to_string(adaptive.distinct_states) + " (K = " +
             std::to_string(scheme.size()) + ")";
  return r;
}

CriterionResult c11_dof(Context&) {
  CriterionResult r{11, "degree-of-freedom boundary K = (D-1)^2 + 1", false, {}, {}, 0.0};
  bool ok = true;
  Json flips = Json::array();
  for (int d = 2; d <= 6; ++d) {
    const int boundary = (d - 1) * (d - 1) + 1;
    int first_under = -1;
    for (int k = 1; k <= boundary + 3; ++k) {
      const bool under = dof_count(d, k).underdetermined;
      if (under && first_under < 0) first_under = k;
      if (under != (k > boundary)) ok = false;
    }
    flips.push_back({{"D", d}, {"boundary", boundary}, {"first_underdetermined", first_under}});
  }
  r.pass = ok;
  r.measured = flips;
  r.detail = ok ? "flag flips at K = (D-1)^2 + 2 for D = 2..6" : "boundary mismatch";
  return r;
}

CriterionResult dispatch(int id, Context& ctx) {
  switch (id) {
    case 1: return c1_qubit_two_state(ctx);
    case 2: return c2_h_one_family(ctx);
    case 3: return c3_thresholds(ctx);
    case 4: return c4_entropy_gap(ctx);
    case 5: return c5_limits(ctx);
    case 6: return c6_entropy_bound(ctx);
    case 7: return c7_backout(ctx);
    case 8: return c8_confinement(ctx);
    case 9: return c9_average(ctx);
    case 10: return c10_distinct(ctx);
    case 11: return c11_dof(ctx);
    default: throw Error(Errc::kPrecondition, "unknown criterion " + std::to_string(id));
  }
}

CriterionResult timed(int id, Context& ctx) {
  const auto start = std::chrono::steady_clock::now();
  CriterionResult r;
  try {
    r = dispatch(id, ctx);
  } catch (const Error& e) {
    if (e.code() == Errc::kPrecondition && (id < 1 || id > kNumCriteria)) throw;
    r.id = id;
    r.name = "criterion " + std::to_string(id);
    r.pass = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

CriterionResult run_criterion(int id, const AcceptanceConfig& config) {
  Context ctx{config, {}};
  return timed(id, ctx);
}

std::vector<CriterionResult> run_acceptance(const AcceptanceConfig& config) {
  std::vector<int> ids = config.only;
  if (ids.empty()) {
    for (int i = 1; i <= kNumCriteria; ++i) ids.push_back(i);
  }
  // The entropy bound runs last so it sees every ensemble the others built.
  std::stable_partition(ids.begin(), ids.end(), [](int i) { return i != 6; });
  Context ctx{config, {}};
  std::vector<CriterionResult> out;
  for (int id : ids) out.push_back(timed(id, ctx));
  std::sort(out.begin(), out.end(),
            [](const CriterionResult& a, const CriterionResult& b) { return a.id < b.id; });
  return out;
}

Json acceptance_report(const AcceptanceConfig& config,
                       const std::vector<CriterionResult>& results) {
  Json list = Json::array();
  bool all = true;
  for (const auto& r : results) {
    all = all && r.pass;
    list.push_back({{"id", r.id},
                    {"name", r.name},
                    {"pass", r.pass},
                    {"detail", r.detail},
                    {"measured", r.measured},
                    {"seconds", r.seconds}});
  }
  return {{"seed", config.seed},
          {"n_starts", config.n_starts},
          {"tolerance_scale", config.tolerance_scale},
          {"all_pass", all},
          {"criteria", list}};
}

}  // namespace qtrack
