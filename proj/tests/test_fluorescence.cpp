#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "qtrack/error.hpp"
#include "qtrack/fluorescence.hpp"

using namespace qtrack;

TEST_CASE("fluorescence model and closed forms") {
  const double gamma = 1.3;
  for (double omega : {0.05, 0.2, 0.3}) {
    const BlochModel b = to_bloch(build_fluorescence_me(gamma, omega));
    Mat3 a;
    a << -gamma / 2, 0, 0, 0, -gamma / 2, -omega, 0, omega, -gamma;
    CHECK((b.A - a).norm() < 1e-14);
    const FluorescenceAnalytic an = fluorescence_analytic(gamma, omega);
    CHECK((b.steady_state() - an.steady_state).norm() < 1e-13);
    CHECK((b.A * an.v1 + gamma / 2 * an.v1).norm() < 1e-14);
    REQUIRE(an.v_plus.has_value());
    for (const Vec3& v : {*an.v_plus, *an.v_minus}) {
      const Vec3 av = b.A * v;
      const double lambda = av.dot(v) / v.squaredNorm();
      CHECK((av - lambda * v).norm() < 1e-12 * v.norm());
    }
  }
  const FluorescenceAnalytic strong = fluorescence_analytic(1.0, 0.26);
  CHECK_FALSE(strong.v_plus.has_value());
  CHECK_THROWS_AS(build_fluorescence_me(0.0, 0.1), Error);
  CHECK(omega_from_epsilon(2.0, 0.04) == doctest::Approx(0.4));
}

TEST_CASE("default epsilon grid") {
  const auto g = default_epsilon_grid();
  CHECK(g.size() == 68);
  CHECK(std::is_sorted(g.begin(), g.end()));
  CHECK(g.front() == doctest::Approx(1e-4));
  CHECK(g.back() == doctest::Approx(0.12));
  const std::set<double> s(g.begin(), g.end());
  CHECK(s.count(0.0335 - 0.002) == 1);
  CHECK(s.count(0.0795 + 0.002) == 1);
}

TEST_CASE("sweep rows, windows and reproducibility") {
  SweepConfig cfg;
  cfg.epsilon_grid = {0.0, 0.02, 0.03, 0.05, 0.0624, 0.0626, 0.07, 0.09};
  cfg.n_starts = 1000;
  const SweepResult res = sweep_entropy(cfg);
  REQUIRE(res.notes.size() == 1);

  std::set<std::string> ids3;
  for (const auto& r : res.rows) {
    if (r.epsilon == 0.0) {
      CHECK(r.s_vn_bits == 0.0);
      CHECK(r.family_id == "pure_steady_state");
      continue;
    }
    CHECK(r.exists == std::isfinite(r.h_bits));
    if (r.exists) {
      CHECK(r.residual < 1e-8);
      CHECK(r.h_bits >= r.s_vn_bits - 1e-9);
    }
    if (r.family_id == "2:v1") {
      CHECK(r.exists);
      CHECK(r.h_bits == doctest::Approx(1.0).epsilon(1e-12));
    }
    if (r.family_id == "2:v+" || r.family_id == "2:v-") {
      CHECK(r.exists == (r.epsilon < 0.0625));
    }
    if (r.k == 3) ids3.insert(r.family_id);
  }
  // Coarse steps across folds may start new ids; never fewer than the peak count.
  CHECK(ids3.size() >= 8);
  auto count3 = [&](double eps) {
    int n = 0;
    for (const auto& r : res.rows) n += r.k == 3 && r.epsilon == eps && r.exists;
    return n;
  };
  CHECK(count3(0.02) == 8);
  CHECK(count3(0.05) == 6);
  CHECK(count3(0.07) == 2);
  CHECK(count3(0.09) == 0);

  std::ostringstream a, b;
  write_sweep_csv(a, res);
  write_sweep_csv(b, sweep_entropy(cfg));
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("epsilon,family_id,K,h_bits,S_vn_bits,exists\n", 0) == 0);

  SweepConfig bad = cfg;
  bad.epsilon_grid = {0.05, 0.02};
  CHECK_THROWS_AS(sweep_entropy(bad), Error);
}

TEST_CASE("family tracking moves little between close grid points") {
  SweepConfig cfg;
  for (int i = 0; i <= 20; ++i) cfg.epsilon_grid.push_back(0.005 + 0.0005 * i);
  cfg.two_state = false;
  cfg.n_starts = 1000;
  const SweepResult res = sweep_entropy(cfg);
  // Step 5e-4 well below the 0.0335 fold: states move by O(step).
  CHECK(res.max_match_distance < 0.05);
  std::set<std::string> ids;
  for (const auto& r : res.rows) ids.insert(r.family_id);
  CHECK(ids.size() == 8);
}

TEST_CASE("bloch geometry at eps = 0.04") {
  SweepConfig cfg;
  const Json g = emit_bloch_geometry(cfg, 0.04);
  CHECK(g["r_ss"][1].get<double>() == doctest::Approx(0.4 / 1.08));
  int two = 0, three = 0;
  for (const auto& e : g["ensembles"]) {
    const int k = e["K"].get<int>();
    two += k == 2;
    three += k == 3;
    const bool sym = e["mirror_symmetric"].get<bool>();
    const int partner = e["mirror_partner"].get<int>();
    // Each ensemble is its own mirror image or has a mirror partner.
    CHECK((sym || partner >= 0));
    if (e["in_x0_plane"].get<bool>()) CHECK(sym);
  }
  CHECK(two == 3);
  CHECK(three == 6);

  // High-entropy 3-state ensembles cluster near r_ss; low-entropy ones spread.
  double near_high = 0.0, far_low = 1e9;
  for (const auto& e : g["ensembles"]) {
    if (e["K"].get<int>() != 3) continue;
    const double h = e["entropy_bits"].get<double>();
    const double spread = e["max_distance_to_rss"].get<double>();
    if (h > 1.0) near_high = std::max(near_high, spread);
    if (h < 0.2) far_low = std::min(far_low, spread);
  }
  CHECK(near_high < far_low);

  CHECK_THROWS_AS(emit_bloch_geometry(cfg, 0.0), Error);
}
