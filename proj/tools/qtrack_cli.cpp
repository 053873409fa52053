// qtrack: resonance-fluorescence ensembles, adaptive schemes and trajectories.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "qtrack/acceptance.hpp"
#include "qtrack/error.hpp"
#include "qtrack/fluorescence.hpp"
#include "qtrack/io.hpp"
#include "qtrack/simulator.hpp"
#include "qtrack/unravelling.hpp"

namespace {

using namespace qtrack;

struct ModelFlags {
  double gamma = 1.0;
  std::optional<double> omega;
  std::optional<double> epsilon;
  std::string model_path;

  void add(CLI::App* app) {
    app->add_option("--gamma", gamma, "decay rate")->check(CLI::PositiveNumber);
    auto* o = app->add_option("--omega", omega, "Rabi frequency");
    app->add_option("--epsilon", epsilon, "drive Omega^2/gamma^2")
        ->check(CLI::NonNegativeNumber)
        ->excludes(o);
    app->add_option("--model", model_path, "model JSON (overrides gamma/omega)")
        ->check(CLI::ExistingFile);
  }

  double resolved_omega(double default_eps) const {
    if (omega) return *omega;
    return omega_from_epsilon(gamma, epsilon.value_or(default_eps));
  }

  MasterEquation build(double default_eps = 0.04) const {
    if (!model_path.empty()) {
      std::ifstream in(model_path);
      Json j;
      try {
        in >> j;
      } catch (const Json::exception& e) {
        throw Error(Errc::kModel, std::string("cannot parse model: ") + e.what());
      }
      return model_from_json(j);
    }
    return build_fluorescence_me(gamma, resolved_omega(default_eps));
  }
};

// Writes to `path`, or stdout when empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(Errc::kPrecondition, "cannot open " + path);
  out << text;
}

std::vector<PREnsemble> find_ensembles(const MasterEquation& me, int k,
                                       std::uint64_t seed, int n_starts) {
  if (me.dim() != 2) {
    throw Error(Errc::kUnsupportedDimension, "ensemble search is implemented for qubits");
  }
  const BlochModel bloch = to_bloch(me);
  if (k == 2) return two_state_qubit_ensembles(bloch);
  CyclicSearchOptions opts;
  opts.seed = seed;
  opts.n_starts = n_starts;
  return cyclic_k_state_search(bloch, k, opts).ensembles;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive quantum-jump unravellings with finite classical memory"};
  app.require_subcommand(1);

  ModelFlags model;
  int k = 2;
  int index = -1;
  std::uint64_t seed = 1;
  int n_starts = 2000;
  double t_final = 1000.0;
  double dt = 1e-3;
  // One output path per verb: defaults are written when options are declared.
  std::string out_model, out_ens, out_scheme, out_sim, out_sweep, out_geo, out_verify;

  auto* c_model = app.add_subcommand("model", "write the master equation as JSON");
  model.add(c_model);
  c_model->add_option("--out", out_model, "output path (default stdout)");

  auto* c_ens = app.add_subcommand("ensembles", "find physically realizable ensembles");
  model.add(c_ens);
  c_ens->add_option("--k", k, "ensemble size")->check(CLI::Range(2, 8));
  c_ens->add_option("--seed", seed);
  c_ens->add_option("--n-starts", n_starts)->check(CLI::PositiveNumber);
  c_ens->add_option("--out", out_ens, "output path (default stdout)");

  auto* c_scheme = app.add_subcommand("scheme", "back out the adaptive local oscillators");
  model.add(c_scheme);
  c_scheme->add_option("--k", k)->check(CLI::Range(2, 8));
  c_scheme->add_option("--index", index, "ensemble index (default: highest entropy)");
  c_scheme->add_option("--seed", seed);
  c_scheme->add_option("--n-starts", n_starts)->check(CLI::PositiveNumber);
  c_scheme->add_option("--out", out_scheme)->default_val("scheme.json");

  bool plain = false;
  bool exact = false;
  auto* c_sim = app.add_subcommand("simulate", "simulate one adaptive trajectory");
  model.add(c_sim);
  c_sim->add_option("--k", k)->check(CLI::Range(2, 8));
  c_sim->add_option("--index", index);
  c_sim->add_option("--seed", seed);
  c_sim->add_option("--n-starts", n_starts)->check(CLI::PositiveNumber);
  c_sim->add_option("--t-final", t_final)->check(CLI::NonNegativeNumber);
  c_sim->add_option("--dt", dt)->check(CLI::PositiveNumber);
  c_sim->add_flag("--plain", plain, "unshifted unravelling from the ground state");
  c_sim->add_flag("--exact-waiting", exact, "sample exponential dwell times");
  c_sim->add_option("--out", out_sim)->default_val("trajectory.csv");

  std::vector<double> grid;
  bool two_only = false;
  auto* c_sweep = app.add_subcommand("sweep", "entropy of every ensemble family versus drive");
  c_sweep->add_option("--gamma", model.gamma)->check(CLI::PositiveNumber);
  c_sweep->add_option("--grid", grid, "epsilon values (default grid if omitted)");
  c_sweep->add_flag("--two-state-only", two_only);
  c_sweep->add_option("--seed", seed);
  c_sweep->add_option("--n-starts", n_starts)->check(CLI::PositiveNumber);
  c_sweep->add_option("--out", out_sweep)->default_val("entropy_sweep.csv");

  auto* c_geo = app.add_subcommand("geometry", "Bloch vectors of every ensemble at one drive");
  c_geo->add_option("--gamma", model.gamma)->check(CLI::PositiveNumber);
  c_geo->add_option("--epsilon", model.epsilon)->check(CLI::NonNegativeNumber);
  c_geo->add_option("--seed", seed);
  c_geo->add_option("--n-starts", n_starts)->check(CLI::PositiveNumber);
  c_geo->add_option("--out", out_geo)->default_val("geometry.json");

  AcceptanceConfig acc;
  auto* c_verify = app.add_subcommand("verify", "run the acceptance suite");
  c_verify->add_option("--seed", acc.seed);
  c_verify->add_option("--n-starts", acc.n_starts)->check(CLI::PositiveNumber);
  c_verify->add_option("--tolerance-scale", acc.tolerance_scale)->check(CLI::PositiveNumber);
  c_verify->add_option("--criterion", acc.only, "run only these criteria")
      ->check(CLI::Range(1, kNumCriteria));
  c_verify->add_option("--out", out_verify)->default_val("verify_report.json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_model) {
      emit(out_model, dump_json(model_to_json(model.build())));
    } else if (*c_ens) {
      const MasterEquation me = model.build();
      const BlochModel bloch = to_bloch(me);
      Json list = Json::array();
      for (const auto& e : find_ensembles(me, k, seed, n_starts)) {
        Json j = ensemble_to_json(e);
        j["pr_feasible"] = check_pr(bloch, e.states).feasible;
        list.push_back(std::move(j));
      }
      emit(out_ens, dump_json({{"r_ss", {bloch.steady_state()(0), bloch.steady_state()(1),
                                     bloch.steady_state()(2)}},
                           {"S_vn_bits", von_neumann_entropy(steady_state(me))},
                           {"ensembles", list}}));
    } else if (*c_scheme || (*c_sim && !plain)) {
      const MasterEquation me = model.build();
      const auto ens = find_ensembles(me, k, seed, n_starts);
      if (ens.empty()) {
        throw Error(Errc::kPrecondition, "no " + std::to_string(k) + "-state ensemble found");
      }
      int pick = index;
      if (pick < 0) {
        pick = 0;
        for (int i = 1; i < static_cast<int>(ens.size()); ++i) {
          if (ens[i].entropy() > ens[pick].entropy()) pick = i;
        }
      }
      if (pick >= static_cast<int>(ens.size())) {
        throw Error(Errc::kPrecondition, "ensemble index out of range");
      }
      const AdaptiveScheme scheme = backout_beta(me, ens[pick]);
      if (*c_scheme) {
        Json j = scheme_to_json(scheme);
        j["ensemble"] = ensemble_to_json(ens[pick]);
        j["max_residual"] = scheme.max_residual;
        emit(out_scheme, dump_json(j));
      } else {
        SimOptions opts;
        opts.t_final = t_final;
        opts.dt = dt;
        opts.seed = seed;
        opts.sampling = exact ? JumpSampling::kExactWaiting : JumpSampling::kStepwise;
        const TrajectoryRecord rec = simulate_adaptive(me, scheme, opts);
        std::ostringstream csv;
        write_trajectory_csv(csv, rec);
        emit(out_sim, csv.str());
        Json summary = stats_to_json(occupation_stats(rec, scheme.size()));
        summary["target_probs"] = ens[pick].probs;
        summary["max_state_deviation"] = rec.max_state_deviation;
        std::cerr << dump_json(summary);
      }
    } else if (*c_sim) {
      const MasterEquation me = model.build();
      SimOptions opts;
      opts.t_final = t_final;
      opts.dt = dt;
      opts.seed = seed;
      CVector psi0 = CVector::Zero(me.dim());
      psi0(0) = 1.0;
      const TrajectoryRecord rec = simulate_plain(me, psi0, opts);
      std::ostringstream csv;
      write_trajectory_csv(csv, rec);
      emit(out_sim, csv.str());
      std::cerr << dump_json({{"jumps", rec.jump_count},
                              {"distinct_states", rec.distinct_states}});
    } else if (*c_sweep) {
      SweepConfig cfg;
      cfg.gamma = model.gamma;
      cfg.epsilon_grid = grid.empty() ? default_epsilon_grid() : grid;
      cfg.three_state = !two_only;
      cfg.seed = seed;
      cfg.n_starts = n_starts;
      const SweepResult res = sweep_entropy(cfg);
      std::ostringstream csv;
      write_sweep_csv(csv, res);
      emit(out_sweep, csv.str());
      for (const auto& note : res.notes) std::cerr << "note: " << note << '\n';
    } else if (*c_geo) {
      SweepConfig cfg;
      cfg.gamma = model.gamma;
      cfg.seed = seed;
      cfg.n_starts = n_starts;
      emit(out_geo, dump_json(emit_bloch_geometry(cfg, model.epsilon.value_or(0.04))));
    } else if (*c_verify) {
      const auto results = run_acceptance(acc);
      bool all = true;
      for (const auto& r : results) {
        all = all && r.pass;
        std::printf("[%s] %2d %s: %s (%.1f s)\n", r.pass ? "PASS" : "FAIL", r.id,
                    r.name.c_str(), r.detail.c_str(), r.seconds);
      }
      emit(out_verify, dump_json(acceptance_report(acc, results)));
      return all ? 0 : 1;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
