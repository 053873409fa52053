#pragma once

#include <random>
#include <vector>

#include "qtrack/lindblad.hpp"
#include "qtrack/philox.hpp"

namespace testing {

inline qtrack::CMatrix random_matrix(qtrack::Philox4x32& rng, int d) {
  std::normal_distribution<double> n;
  qtrack::CMatrix m(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = qtrack::Complex(n(rng), n(rng));
  }
  return m;
}

inline qtrack::MasterEquation random_me(qtrack::Philox4x32& rng, int d, int n_ops) {
  const qtrack::CMatrix g = random_matrix(rng, d);
  std::vector<qtrack::CMatrix> ops;
  for (int l = 0; l < n_ops; ++l) ops.push_back(random_matrix(rng, d));
  return qtrack::MasterEquation(0.5 * (g + g.adjoint()), std::move(ops));
}

inline qtrack::CMatrix random_density(qtrack::Philox4x32& rng, int d) {
  const qtrack::CMatrix g = random_matrix(rng, d);
  qtrack::CMatrix rho = g * g.adjoint();
  return rho / rho.trace().real();
}

inline qtrack::Vec3 random_unit(qtrack::Philox4x32& rng) {
  std::normal_distribution<double> n;
  return qtrack::Vec3(n(rng), n(rng), n(rng)).normalized();
}

}  // namespace testing
