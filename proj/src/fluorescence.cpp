#include "qtrack/fluorescence.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <thread>

#include "qtrack/error.hpp"

namespace qtrack {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Vec3 mirror_x(const Vec3& r) { return Vec3(-r(0), r(1), r(2)); }

std::vector<Vec3> mirrored(const std::vector<Vec3>& states) {
  std::vector<Vec3> out;
  for (const auto& r : states) out.push_back(mirror_x(r));
  return out;
}

struct PointResult {
  double epsilon = 0.0;
  double s_vn = 0.0;
  bool pure = false;
  std::vector<std::pair<std::string, PREnsemble>> two_state;
  std::vector<PREnsemble> three_state;
};

PointResult evaluate_point(const SweepConfig& cfg, double eps, unsigned threads) {
  PointResult p;
  p.epsilon = eps;
  const double omega = omega_from_epsilon(cfg.gamma, eps);
  const MasterEquation me = build_fluorescence_me(cfg.gamma, omega);
  p.s_vn = von_neumann_entropy(steady_state(me));
  const BlochModel bloch = to_bloch(me);
  if (bloch.steady_state().norm() >= 1.0 - kDefaultTol) {
    p.pure = true;
    p.s_vn = 0.0;
    return p;
  }
  if (cfg.two_state) {
    for (auto& ens : two_state_qubit_ensembles(bloch)) {
      p.two_state.emplace_back(two_state_family(ens, cfg.gamma, omega),
                               std::move(ens));
    }
  }
  if (cfg.three_state) {
    CyclicSearchOptions opts;
    opts.n_starts = cfg.n_starts;
    opts.seed = cfg.seed;
    opts.threads = threads;
    p.three_state = cyclic_k_state_search(bloch, 3, opts).ensembles;
  }
  return p;
}

}  // namespace

MasterEquation build_fluorescence_me(double gamma, double omega) {
  if (!(gamma > 0.0)) throw Error(Errc::kPrecondition, "gamma must be positive");
  CMatrix h(2, 2);
  h << 0.0, 0.5 * omega, 0.5 * omega, 0.0;
  CMatrix c = CMatrix::Zero(2, 2);
  c(0, 1) = std::sqrt(gamma);
  return MasterEquation(std::move(h), {std::move(c)});
}

FluorescenceAnalytic fluorescence_analytic(double gamma, double omega) {
  FluorescenceAnalytic a;
  a.steady_state = Vec3(0.0, 2.0 * gamma * omega, -gamma * gamma) /
                   (gamma * gamma + 2.0 * omega * omega);
  a.v1 = Vec3(1.0, 0.0, 0.0);
  const double disc = gamma * gamma - 16.0 * omega * omega;
  if (disc >= 0.0) {
    const double s = std::sqrt(disc);
    a.v_plus = Vec3(0.0, gamma + s, 4.0 * omega);
    a.v_minus = Vec3(0.0, gamma - s, 4.0 * omega);
  }
  return a;
}

std::string two_state_family(const PREnsemble& ens, double gamma, double omega) {
  const FluorescenceAnalytic a = fluorescence_analytic(gamma, omega);
  auto matches = [&](const std::optional<Vec3>& v) {
    return v && v->norm() > 0.0 &&
           std::abs(ens.eigenvector.dot(v->normalized())) > 1.0 - 1e-6;
  };
  if (matches(a.v1)) return "v1";
  if (matches(a.v_plus)) return "v+";
  if (matches(a.v_minus)) return "v-";
  return {};
}

std::vector<double> default_epsilon_grid() {
  std::vector<double> grid;
  const double lo = std::log(1e-4), hi = std::log(0.12);
  for (int i = 0; i < 60; ++i) grid.push_back(std::exp(lo + (hi - lo) * i / 59.0));
  for (double t : {0.0335, 0.0610, 0.0625, 0.0795}) {
    grid.push_back(t - 0.002);
    grid.push_back(t + 0.002);
  }
  std::sort(grid.begin(), grid.end());
  return grid;
}

SweepResult sweep_entropy(const SweepConfig& cfg) {
  if (!std::is_sorted(cfg.epsilon_grid.begin(), cfg.epsilon_grid.end()) ||
      (!cfg.epsilon_grid.empty() && cfg.epsilon_grid.front() < 0.0)) {
    throw Error(Errc::kPrecondition, "epsilon grid must be ascending and >= 0");
  }
  const int n = static_cast<int>(cfg.epsilon_grid.size());
  std::vector<PointResult> points(n);
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  {
    std::atomic<int> next{0};
    auto worker = [&] {
      for (int i = next++; i < n; i = next++) {
        points[i] = evaluate_point(cfg, cfg.epsilon_grid[i], 1);
      }
    };
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < std::min<unsigned>(hw, std::max(n, 1)); ++t) {
      pool.emplace_back(worker);
    }
  }

  SweepResult out;
  // Nearest-neighbour continuation of 3-state families along the grid.
  struct Family {
    std::string id;
    std::vector<Vec3> states;
    bool active = false;
  };
  std::vector<Family> families;
  std::vector<std::vector<int>> assignment(n);  // point -> family per ensemble
  constexpr double kMatchBound = 0.5;
  for (int i = 0; i < n; ++i) {
    const auto& ens = points[i].three_state;
    assignment[i].assign(ens.size(), -1);
    std::vector<std::tuple<double, int, int>> pairs;
    for (int e = 0; e < static_cast<int>(ens.size()); ++e) {
      for (int f = 0; f < static_cast<int>(families.size()); ++f) {
        if (!families[f].active) continue;
        pairs.emplace_back(cyclic_state_distance(ens[e].states, families[f].states),
                           e, f);
      }
    }
    std::sort(pairs.begin(), pairs.end());
    std::vector<bool> family_taken(families.size(), false);
    for (const auto& [d, e, f] : pairs) {
      if (d > kMatchBound || assignment[i][e] >= 0 || family_taken[f]) continue;
      assignment[i][e] = f;
      family_taken[f] = true;
      out.max_match_distance = std::max(out.max_match_distance, d);
    }
    for (std::size_t f = 0; f < families.size(); ++f) {
      if (!family_taken[f]) families[f].active = false;
    }
    for (int e = 0; e < static_cast<int>(ens.size()); ++e) {
      if (assignment[i][e] < 0) {
        assignment[i][e] = static_cast<int>(families.size());
        families.push_back({"3:c" + std::to_string(families.size()), {}, true});
      }
      families[assignment[i][e]].states = ens[e].states;
      families[assignment[i][e]].active = true;
    }
  }

  const std::vector<std::string> two_ids = {"v1", "v+", "v-"};
  for (int i = 0; i < n; ++i) {
    const PointResult& p = points[i];
    if (p.pure) {
      out.notes.push_back("epsilon=" + std::to_string(p.epsilon) +
                          ": steady state is pure, no ensembles constructed");
      out.rows.push_back({p.epsilon, "pure_steady_state", 1, 0.0, 0.0, true, 0.0});
      continue;
    }
    if (cfg.two_state) {
      for (const auto& id : two_ids) {
        SweepRow row{p.epsilon, "2:" + id, 2, kNaN, p.s_vn, false, 0.0};
        for (const auto& [fam, ens] : p.two_state) {
          if (fam == id) {
            row.h_bits = ens.entropy();
            row.exists = true;
            row.residual = ens.residual;
          }
        }
        out.rows.push_back(row);
      }
    }
    if (cfg.three_state) {
      for (std::size_t f = 0; f < families.size(); ++f) {
        SweepRow row{p.epsilon, families[f].id, 3, kNaN, p.s_vn, false, 0.0};
        for (std::size_t e = 0; e < p.three_state.size(); ++e) {
          if (assignment[i][e] == static_cast<int>(f)) {
            row.h_bits = p.three_state[e].entropy();
            row.exists = true;
            row.residual = p.three_state[e].residual;
          }
        }
        out.rows.push_back(row);
      }
    }
  }
  return out;
}

void write_sweep_csv(std::ostream& os, const SweepResult& sweep) {
  os << "epsilon,family_id,K,h_bits,S_vn_bits,exists\n";
  os << std::setprecision(17);
  for (const auto& r : sweep.rows) {
    os << r.epsilon << ',' << r.family_id << ',' << r.k << ',';
    if (std::isfinite(r.h_bits)) os << r.h_bits;
    else os << "nan";
    os << ',' << r.s_vn_bits << ',' << (r.exists ? 1 : 0) << '\n';
  }
}

Json emit_bloch_geometry(const SweepConfig& cfg, double epsilon) {
  const PointResult p = evaluate_point(cfg, epsilon, 0);
  if (p.pure) {
    throw Error(Errc::kDegenerateSteadyState,
                "no ensembles: steady state is pure at this drive");
  }
  const double omega = omega_from_epsilon(cfg.gamma, epsilon);
  const Vec3 rss = to_bloch(build_fluorescence_me(cfg.gamma, omega)).steady_state();

  struct Item {
    std::string family;
    const PREnsemble* ens;
  };
  std::vector<Item> items;
  for (const auto& [fam, ens] : p.two_state) items.push_back({"2:" + fam, &ens});
  for (std::size_t e = 0; e < p.three_state.size(); ++e) {
    items.push_back({"3:" + std::to_string(e), &p.three_state[e]});
  }

  Json list = Json::array();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const PREnsemble& ens = *items[i].ens;
    Json j = ensemble_to_json(ens);
    j["family"] = items[i].family;
    double max_x = 0.0, spread = 0.0;
    for (const auto& r : ens.states) {
      max_x = std::max(max_x, std::abs(r(0)));
      spread = std::max(spread, (r - rss).norm());
    }
    j["in_x0_plane"] = max_x < 1e-9;
    j["max_distance_to_rss"] = spread;
    const auto image = mirrored(ens.states);
    j["mirror_symmetric"] = cyclic_state_distance(ens.states, image) < 1e-6;
    int partner = -1;
    for (std::size_t o = 0; o < items.size(); ++o) {
      if (o != i && items[o].ens->size() == ens.size() &&
          cyclic_state_distance(items[o].ens->states, image) < 1e-6) {
        partner = static_cast<int>(o);
      }
    }
    j["mirror_partner"] = partner;
    list.push_back(std::move(j));
  }
  return {{"epsilon", epsilon},
          {"gamma", cfg.gamma},
          {"omega", omega},
          {"r_ss", {rss(0), rss(1), rss(2)}},
          {"S_vn_bits", p.s_vn},
          {"ensembles", list}};
}

}  // namespace qtrack
