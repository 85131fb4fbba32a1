// Copyright 2025 The tracelab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TRACELAB_TESTS_TEST_UTIL_HPP_
#define TRACELAB_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "tracelab/mdp.hpp"
#include "tracelab/rng.hpp"

namespace tracelab::test {

// Test-side oracles are kept deliberately plain: dense matrices as nested
// vectors, built straight from the definitions, independent of the library's
// linear-algebra path.
using DenseMatrix = std::vector<std::vector<double>>;

inline DenseMatrix policy_pair_matrix_oracle(const FiniteMdp& mdp,
                                             const PolicyTable& policy) {
  const int n = mdp.n_pairs();
  DenseMatrix m(n, std::vector<double>(n, 0.0));
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      for (int s2 = 0; s2 < mdp.n_states; ++s2) {
        for (int a2 = 0; a2 < mdp.n_actions; ++a2) {
          m[s * mdp.n_actions + a][s2 * mdp.n_actions + a2] =
              mdp.p(s, a, s2) * policy(s2, a2);
        }
      }
    }
  }
  return m;
}

inline std::vector<double> matvec(const DenseMatrix& m,
                                  const std::vector<double>& v) {
  std::vector<double> out(m.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < v.size(); ++j) out[i] += m[i][j] * v[j];
  }
  return out;
}

// Truncated discounted power series sum_{t<=steps} gamma^t M^t r.
inline std::vector<double> power_series_oracle(const DenseMatrix& m,
                                               const std::vector<double>& r,
                                               double gamma, int steps) {
  std::vector<double> acc(r.size(), 0.0);
  std::vector<double> term = r;
  double gamma_pow = 1.0;
  for (int t = 0; t <= steps; ++t) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += gamma_pow * term[i];
    term = matvec(m, term);
    gamma_pow *= gamma;
  }
  return acc;
}

inline QTable random_q(RngStream& rng, int ns, int na, double lo = -1.0,
                       double hi = 1.0) {
  QTable q(ns, na);
  for (double& v : q.values) v = rng.next_in(lo, hi);
  return q;
}

inline double max_abs_diff(const std::vector<double>& a,
                           const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

// chain2 evaluation policies used across suites.
inline PolicyTable chain2_target() {
  PolicyTable pi(2, 2);
  pi(0, 0) = 0.1;
  pi(0, 1) = 0.9;
  pi(1, 0) = 0.1;
  pi(1, 1) = 0.9;
  return pi;
}

inline PolicyTable chain2_episodic_target() {
  PolicyTable pi(3, 2);
  for (int s = 0; s < 3; ++s) {
    pi(s, 0) = 0.1;
    pi(s, 1) = 0.9;
  }
  return pi;
}

}  // namespace tracelab::test

#endif  // TRACELAB_TESTS_TEST_UTIL_HPP_
