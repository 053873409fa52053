#pragma once

// JSON/CSV exchange formats.
//
// Model:    { "dim": D, "hamiltonian": [[[re,im],...],...],
//             "jump_ops": [ [[[re,im],...],...], ... ] }   (row-major)
// Ensemble: { "K", "states_bloch", "probs", "rates", "entropy_bits",
//             "residual" }
// Scheme:   { "betas": [[re,im],...], "jump_rates": [...],
//             "cycle_states": [[[re,im],...],...] }

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "qtrack/ensemble.hpp"
#include "qtrack/lindblad.hpp"
#include "qtrack/simulator.hpp"
#include "qtrack/unravelling.hpp"

namespace qtrack {

using Json = nlohmann::json;

Json model_to_json(const MasterEquation& me);
MasterEquation model_from_json(const Json& j);

Json ensemble_to_json(const PREnsemble& ens);
Json scheme_to_json(const AdaptiveScheme& scheme);
Json stats_to_json(const OccupationStats& stats);

// Serializes with 17 significant digits.
std::string dump_json(const Json& j);

}  // namespace qtrack
