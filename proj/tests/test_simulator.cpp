#include <doctest.h>

#include <cmath>
#include <sstream>

#include "qtrack/error.hpp"
#include "qtrack/fluorescence.hpp"
#include "qtrack/simulator.hpp"
#include "test_helpers.hpp"

using namespace qtrack;

namespace {

MasterEquation fluor(double eps) { return build_fluorescence_me(1.0, std::sqrt(eps)); }

MasterEquation decay(double gamma) {
  CMatrix c = CMatrix::Zero(2, 2);
  c(0, 1) = std::sqrt(gamma);
  return MasterEquation(CMatrix::Zero(2, 2), {c});
}

CVector basis(int i) {
  CVector v = CVector::Zero(2);
  v(i) = 1.0;
  return v;
}

AdaptiveScheme v1_scheme(double eps) {
  const MasterEquation me = fluor(eps);
  for (const auto& e : two_state_qubit_ensembles(to_bloch(me))) {
    if (two_state_family(e, 1.0, std::sqrt(eps)) == "v1") return backout_beta(me, e);
  }
  throw Error(Errc::kInternal, "v1 missing");
}

std::vector<double> dwell_times(const TrajectoryRecord& rec, int state) {
  std::vector<double> out;
  for (const auto& s : rec.segments) {
    if (s.ends_in_jump && s.state == state) out.push_back(s.dwell);
  }
  return out;
}

}  // namespace

TEST_CASE("pure decay: one jump at mean time 1/gamma") {
  const double gamma = 1.0;
  const MasterEquation me = decay(gamma);
  SimOptions o;
  o.t_final = 15.0;
  o.seed = 5;
  const int n = 10000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    o.stream = static_cast<std::uint64_t>(i);
    const TrajectoryRecord rec = simulate_plain(me, basis(1), o);
    REQUIRE(rec.jump_count == 1);
    sum += rec.segments.front().dwell;
    if (i == 0) CHECK(rec.distinct_states <= 2);
  }
  // Exponential: sd = mean = 1/gamma.
  CHECK(std::abs(sum / n - 1.0 / gamma) < 3.0 / std::sqrt(n));
}

TEST_CASE("trajectories are reproducible per (seed, stream)") {
  const MasterEquation me = fluor(0.04);
  const AdaptiveScheme s = v1_scheme(0.04);
  SimOptions o;
  o.t_final = 200.0;
  o.seed = 3;
  o.stream = 1;
  const TrajectoryRecord a = simulate_adaptive(me, s, o);
  CHECK(a == simulate_adaptive(me, s, o));
  o.stream = 2;
  CHECK_FALSE(a == simulate_adaptive(me, s, o));
  o.sampling = JumpSampling::kExactWaiting;
  CHECK(simulate_adaptive(me, s, o) == simulate_adaptive(me, s, o));
}

TEST_CASE("adaptive v1 scheme stays confined and alternates memory states") {
  const MasterEquation me = fluor(0.04);
  const AdaptiveScheme s = v1_scheme(0.04);
  SimOptions o;
  o.t_final = 300.0;
  const TrajectoryRecord rec = simulate_adaptive(me, s, o);
  CHECK(rec.max_state_deviation < 1e-6);
  CHECK(rec.distinct_states == 2);
  CHECK(rec.jump_count > 10);
  for (std::size_t i = 1; i < rec.segments.size(); ++i) {
    CHECK(rec.segments[i].state == (rec.segments[i - 1].state + 1) % 2);
  }
  double total = 0.0;
  for (const auto& seg : rec.segments) total += seg.dwell;
  CHECK(std::abs(total - rec.total_time) < 1e-9);
}

TEST_CASE("a corrupted scheme triggers a confinement violation") {
  const MasterEquation me = fluor(0.04);
  AdaptiveScheme s = v1_scheme(0.04);
  s.betas[0] += 0.05;
  s.jump_ops[0] = me.jump_ops()[0] + s.betas[0] * CMatrix::Identity(2, 2);
  s.eff_hams[0] = shifted_effective_hamiltonian(me, s.betas[0]);
  SimOptions o;
  o.t_final = 100.0;
  try {
    simulate_adaptive(me, s, o);
    FAIL("expected a confinement violation");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kConfinementViolation);
    CHECK(e.value() > 0.0);
    CHECK(e.value() <= 100.0);
  }
}

TEST_CASE("dwell times are exponential at the scheme's jump rates") {
  const MasterEquation me = fluor(0.05);
  const auto list = cyclic_k_state_search(to_bloch(me), 3).ensembles;
  REQUIRE(!list.empty());
  const AdaptiveScheme s = backout_beta(me, list.back());
  SimOptions o;
  o.t_final = 3000.0;
  o.seed = 4;
  for (auto mode : {JumpSampling::kExactWaiting, JumpSampling::kStepwise}) {
    o.sampling = mode;
    const TrajectoryRecord rec = simulate_adaptive(me, s, o);
    for (int k = 0; k < s.size(); ++k) {
      const auto d = dwell_times(rec, k);
      REQUIRE(d.size() > 50);
      CHECK(ks_exponential_pvalue(d, s.jump_rates[k]) > 1e-3);
    }
  }
}

TEST_CASE("occupation statistics") {
  TrajectoryRecord one;
  one.segments = {{0, 5.0, false}};
  one.total_time = 5.0;
  auto st = occupation_stats(one, 2);
  CHECK(st.empirical_probs[0] == 1.0);
  CHECK(st.empirical_probs[1] == 0.0);

  TrajectoryRecord alt;
  for (int i = 0; i < 200; ++i) alt.segments.push_back({i % 2, 1.0, true});
  alt.total_time = 200.0;
  alt.jump_count = 200;
  st = occupation_stats(alt, 2);
  CHECK(st.empirical_probs[0] == doctest::Approx(0.5));
  CHECK(st.n_jumps == 200);

  const auto f = occupation_fractions(alt, 2);
  CHECK(f[0] + f[1] == doctest::Approx(1.0));
  const double se = bootstrap_stderr(alt, 2, [](const std::vector<double>& p) { return p[0]; });
  CHECK(se >= 0.0);
  CHECK(se < 0.01);
}

TEST_CASE("long v1 run occupies both memory states equally") {
  const MasterEquation me = fluor(0.04);
  const AdaptiveScheme s = v1_scheme(0.04);
  SimOptions o;
  o.t_final = 1e4;
  o.sampling = JumpSampling::kExactWaiting;
  o.seed = 12;
  const auto st = occupation_stats(simulate_adaptive(me, s, o), 2);
  CHECK(std::abs(st.empirical_probs[0] - 0.5) < 3.0 * st.stderr_[0]);
}

TEST_CASE("ensemble averages") {
  const MasterEquation me = fluor(0.04);
  const AdaptiveScheme s = v1_scheme(0.04);
  SimOptions o;
  o.sampling = JumpSampling::kExactWaiting;
  const std::vector<double> t0 = {0.0};
  const auto single = ensemble_average(me, s, 1, t0, o);
  CHECK((single[0] - s.cycle[0] * s.cycle[0].adjoint()).norm() == 0.0);

  const std::vector<double> late = {0.0, 60.0};
  const auto avg = ensemble_average(me, s, 4000, late, o);
  CHECK(trace_distance(avg[1], steady_state(me).matrix()) < 0.02);

  // Same seed, same average; independent of thread scheduling.
  CHECK((ensemble_average(me, s, 200, late, o)[1] - ensemble_average(me, s, 200, late, o)[1])
            .norm() == 0.0);
}

TEST_CASE("plain unravelling: step-size robustness and state counting") {
  const MasterEquation me = fluor(0.04);
  SimOptions o;
  o.t_final = 200.0;
  auto mean_jumps = [&](double dt) {
    o.dt = dt;
    double total = 0.0;
    for (int i = 0; i < 40; ++i) {
      o.stream = static_cast<std::uint64_t>(i);
      total += static_cast<double>(simulate_plain(me, basis(0), o).jump_count);
    }
    return total / 40.0;
  };
  const double a = mean_jumps(1e-3), b = mean_jumps(5e-4);
  // Emission rate gamma * rho_11 ~ 0.037: ~7.4 jumps per run, sd of the
  // mean ~0.45.
  CHECK(std::abs(a - b) < 4.0 * std::sqrt(2.0 * 7.4 / 40.0));
  o.dt = 1e-3;
  o.t_final = 1000.0;
  o.resolution = 0.001;
  CHECK(simulate_plain(me, basis(0), o).distinct_states > 100);
}

TEST_CASE("trace distance and KS helpers") {
  CMatrix a = CMatrix::Zero(2, 2), b = CMatrix::Zero(2, 2);
  a(0, 0) = 1.0;
  b(1, 1) = 1.0;
  CHECK(trace_distance(a, b) == doctest::Approx(1.0));
  Philox4x32 rng(41);
  for (int i = 0; i < 10; ++i) {
    const Vec3 r1 = testing::random_unit(rng), r2 = testing::random_unit(rng);
    // Pure states: sqrt(1 - |<a|b>|^2) = |r1 - r2| / 2.
    CHECK(trace_distance(bloch_to_density(r1), bloch_to_density(r2)) ==
          doctest::Approx((r1 - r2).norm() / 2.0));
  }
  std::vector<double> samples;
  for (int i = 0; i < 2000; ++i) samples.push_back(-std::log(rng.uniform()) / 2.0);
  CHECK(ks_exponential_pvalue(samples, 2.0) > 0.01);
  CHECK(ks_exponential_pvalue(samples, 3.0) < 1e-6);
  CHECK_THROWS_AS(ks_exponential_pvalue({}, 1.0), Error);
}

TEST_CASE("trajectory csv") {
  TrajectoryRecord rec;
  rec.segments = {{0, 0.5, true}, {1, 0.25, false}};
  std::ostringstream os;
  write_trajectory_csv(os, rec);
  CHECK(os.str() == "time,memory_state,event\n0.5,0,jump\n0.75,1,end\n");
}
