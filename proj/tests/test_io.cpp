#include <doctest.h>

#include <cmath>
#include <limits>

#include "qtrack/error.hpp"
#include "qtrack/fluorescence.hpp"
#include "qtrack/io.hpp"
#include "test_helpers.hpp"

using namespace qtrack;

TEST_CASE("model json round trip") {
  Philox4x32 rng(51);
  const MasterEquation me = testing::random_me(rng, 3, 2);
  const Json j = Json::parse(dump_json(model_to_json(me)));
  const MasterEquation back = model_from_json(j);
  CHECK(back.dim() == 3);
  CHECK(back.hamiltonian() == me.hamiltonian());
  REQUIRE(back.jump_ops().size() == 2);
  CHECK(back.jump_ops()[1] == me.jump_ops()[1]);
}

TEST_CASE("malformed model json") {
  CHECK_THROWS_AS(model_from_json(Json::parse(R"({"dim": 2})")), Error);
  const Json ragged = Json::parse(
      R"({"dim": 2, "hamiltonian": [[[0,0],[0,0]],[[0,0]]], "jump_ops": []})");
  CHECK_THROWS_AS(model_from_json(ragged), Error);
  const Json nonherm = Json::parse(
      R"({"dim": 2, "hamiltonian": [[[0,0],[1,0]],[[0,0],[0,0]]], "jump_ops": []})");
  try {
    model_from_json(nonherm);
    FAIL("expected a model error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kModel);
  }
}

TEST_CASE("json floats carry 17 significant digits") {
  const Json j = {{"x", 0.1}, {"nan", std::numeric_limits<double>::quiet_NaN()}};
  const std::string s = dump_json(j);
  CHECK(s.find("0.10000000000000001") != std::string::npos);
  CHECK(s.find("null") != std::string::npos);
  CHECK(Json::parse(s)["x"].get<double>() == 0.1);
}

TEST_CASE("ensemble and scheme json") {
  const MasterEquation me = build_fluorescence_me(1.0, 0.2);
  const auto ens = two_state_qubit_ensembles(to_bloch(me));
  const Json e = ensemble_to_json(ens[0]);
  CHECK(e["K"] == 2);
  CHECK(e["states_bloch"].size() == 2);
  CHECK(e["rates"][0][1].get<double>() == ens[0].rates(0, 1));
  const Json s = scheme_to_json(backout_beta(me, ens[0]));
  CHECK(s["betas"].size() == 2);
  CHECK(s["cycle_states"][0].size() == 2);
  CHECK(s["jump_rates"].size() == 2);
}
