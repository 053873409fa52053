#include "qtrack/io.hpp"

#include <cmath>
#include <algorithm>
#include <cstdio>

#include "qtrack/error.hpp"

namespace qtrack {
namespace {

Json complex_to_json(Complex z) { return Json::array({z.real(), z.imag()}); }

Json matrix_to_json(const CMatrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(complex_to_json(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_to_json(const CVector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(complex_to_json(v(i)));
  return out;
}

CMatrix matrix_from_json(const Json& j, int dim, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim) {
    throw Error(Errc::kModel, std::string(what) + ": expected " +
                                  std::to_string(dim) + " rows");
  }
  CMatrix m(dim, dim);
  for (int r = 0; r < dim; ++r) {
    const Json& row = j[r];
    if (!row.is_array() || static_cast<int>(row.size()) != dim) {
      throw Error(Errc::kModel, std::string(what) + ": ragged row");
    }
    for (int c = 0; c < dim; ++c) {
      const Json& z = row[c];
      if (!z.is_array() || z.size() != 2) {
        throw Error(Errc::kModel, std::string(what) + ": entries are [re, im]");
      }
      m(r, c) = Complex(z[0].get<double>(), z[1].get<double>());
    }
  }
  return m;
}

}  // namespace

Json model_to_json(const MasterEquation& me) {
  Json ops = Json::array();
  for (const auto& c : me.jump_ops()) ops.push_back(matrix_to_json(c));
  return {{"dim", me.dim()},
          {"hamiltonian", matrix_to_json(me.hamiltonian())},
          {"jump_ops", ops}};
}

MasterEquation model_from_json(const Json& j) {
  try {
    const int dim = j.at("dim").get<int>();
    CMatrix h = matrix_from_json(j.at("hamiltonian"), dim, "hamiltonian");
    std::vector<CMatrix> ops;
    for (const auto& op : j.at("jump_ops")) {
      ops.push_back(matrix_from_json(op, dim, "jump operator"));
    }
    return MasterEquation(std::move(h), std::move(ops));
  } catch (const Json::exception& e) {
    throw Error(Errc::kModel, std::string("malformed model JSON: ") + e.what());
  }
}

Json ensemble_to_json(const PREnsemble& ens) {
  Json states = Json::array();
  for (const auto& r : ens.states) states.push_back({r(0), r(1), r(2)});
  Json rates = Json::array();
  for (Eigen::Index i = 0; i < ens.rates.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < ens.rates.cols(); ++k) row.push_back(ens.rates(i, k));
    rates.push_back(std::move(row));
  }
  return {{"K", ens.size()},          {"states_bloch", states},
          {"probs", ens.probs},       {"rates", rates},
          {"entropy_bits", ens.entropy()}, {"residual", ens.residual}};
}

Json scheme_to_json(const AdaptiveScheme& scheme) {
  Json betas = Json::array();
  for (const auto& b : scheme.betas) betas.push_back(complex_to_json(b));
  Json states = Json::array();
  for (const auto& phi : scheme.cycle) states.push_back(vector_to_json(phi));
  return {{"betas", betas},
          {"jump_rates", scheme.jump_rates},
          {"cycle_states", states}};
}

Json stats_to_json(const OccupationStats& stats) {
  return {{"empirical_probs", stats.empirical_probs},
          {"stderr", stats.stderr_},
          {"n_jumps", stats.n_jumps}};
}

namespace {

void dump_to(const Json& j, std::string& out, int indent) {
  const std::string pad(indent + 2, ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad + Json(it.key()).dump() + ": ";
        dump_to(it.value(), out, indent + 2);
      }
      out += "\n" + std::string(indent, ' ') + "}";
      return;
    }
    case Json::value_t::array: {
      const bool flat = std::none_of(j.begin(), j.end(), [](const Json& v) {
        return v.is_structured();
      });
      if (j.empty()) {
        out += "[]";
      } else if (flat) {
        out += "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ", ";
          dump_to(j[i], out, indent + 2);
        }
        out += "]";
      } else {
        out += "[\n";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ",\n";
          out += pad;
          dump_to(j[i], out, indent + 2);
        }
        out += "\n" + std::string(indent, ' ') + "]";
      }
      return;
    }
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) {
        out += "null";
        return;
      }
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += buf;
      return;
    }
    default:
      out += j.dump();
  }
}

}  // namespace

std::string dump_json(const Json& j) {
  std::string out;
  dump_to(j, out, 0);
  out += "\n";
  return out;
}

}  // namespace qtrack
