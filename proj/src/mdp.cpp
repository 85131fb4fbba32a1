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

#include "tracelab/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "tracelab/rng.hpp"

namespace tracelab {

namespace {

void check_shapes(const FiniteMdp& mdp, const PolicyTable& policy) {
  if (policy.n_states != mdp.n_states || policy.n_actions != mdp.n_actions) {
    throw std::invalid_argument("policy shape does not match MDP");
  }
}

void check_shapes(const FiniteMdp& mdp, const QTable& q) {
  if (q.n_states != mdp.n_states || q.n_actions != mdp.n_actions) {
    throw std::invalid_argument("Q-table shape does not match MDP");
  }
}

}  // namespace

double sup_norm(const QTable& q) {
  double m = 0.0;
  for (double v : q.values) m = std::max(m, std::abs(v));
  return m;
}

double sup_norm_diff(const QTable& a, const QTable& b) {
  if (a.values.size() != b.values.size()) {
    throw std::invalid_argument("sup_norm_diff: size mismatch");
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    m = std::max(m, std::abs(a.values[i] - b.values[i]));
  }
  return m;
}

PolicyTable PolicyTable::uniform(int ns, int na) {
  PolicyTable pi(ns, na, 1.0 / na);
  return pi;
}

PolicyTable PolicyTable::random_full_support(int ns, int na,
                                             std::uint64_t seed,
                                             double uniform_floor) {
  RngStream rng(seed);
  PolicyTable pi(ns, na);
  for (int s = 0; s < ns; ++s) {
    const std::vector<double> row = rng.dirichlet(na);
    for (int a = 0; a < na; ++a) {
      pi(s, a) = (1.0 - uniform_floor) * row[a] + uniform_floor / na;
    }
  }
  return pi;
}

void PolicyTable::validate() const {
  if (n_states <= 0 || n_actions <= 0) {
    throw std::invalid_argument("policy: empty state or action set");
  }
  for (int s = 0; s < n_states; ++s) {
    double sum = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      const double p = (*this)(s, a);
      if (p < 0.0) {
        throw std::invalid_argument("policy: negative probability at state " +
                                    std::to_string(s));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kStochasticTol) {
      throw std::invalid_argument("policy: row " + std::to_string(s) +
                                  " sums to " + std::to_string(sum));
    }
  }
}

void FiniteMdp::validate() const {
  if (n_states <= 0 || n_actions <= 0) {
    throw std::invalid_argument("mdp: empty state or action set");
  }
  if (!(discount >= 0.0 && discount < 1.0)) {
    throw std::invalid_argument("mdp: discount must lie in [0, 1)");
  }
  if (transition.size() !=
          static_cast<std::size_t>(n_states) * n_actions * n_states ||
      reward.size() != static_cast<std::size_t>(n_states) * n_actions) {
    throw std::invalid_argument("mdp: table sizes do not match dimensions");
  }
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      double sum = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) {
        const double pr = p(s, a, s2);
        if (pr < 0.0) {
          throw std::invalid_argument(
              "mdp: negative transition probability at (" +
              std::to_string(s) + "," + std::to_string(a) + ")");
        }
        sum += pr;
      }
      if (std::abs(sum - 1.0) > kStochasticTol) {
        throw std::invalid_argument("mdp: transition row (" +
                                    std::to_string(s) + "," +
                                    std::to_string(a) + ") sums to " +
                                    std::to_string(sum));
      }
    }
  }
  for (int s : terminal_states) {
    if (s < 0 || s >= n_states) {
      throw std::invalid_argument("mdp: terminal state index out of range");
    }
    for (int a = 0; a < n_actions; ++a) {
      if (p(s, a, s) != 1.0 || r(s, a) != 0.0) {
        throw std::invalid_argument(
            "mdp: terminal state " + std::to_string(s) +
            " must be absorbing with zero reward");
      }
    }
  }
}

QTable apply_policy_operator(const FiniteMdp& mdp, const PolicyTable& policy,
                             const QTable& q) {
  check_shapes(mdp, policy);
  check_shapes(mdp, q);
  QTable out(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      double acc = 0.0;
      for (int s2 = 0; s2 < mdp.n_states; ++s2) {
        const double pr = mdp.p(s, a, s2);
        if (pr == 0.0) continue;
        double inner = 0.0;
        for (int a2 = 0; a2 < mdp.n_actions; ++a2) {
          inner += policy(s2, a2) * q(s2, a2);
        }
        acc += pr * inner;
      }
      out(s, a) = acc;
    }
  }
  return out;
}

QTable bellman_backup(const FiniteMdp& mdp, const PolicyTable& policy,
                      const QTable& q) {
  QTable out = apply_policy_operator(mdp, policy, q);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      out(s, a) = mdp.r(s, a) + mdp.discount * out(s, a);
    }
  }
  return out;
}

std::pair<QTable, PolicyTable> bellman_optimality(const FiniteMdp& mdp,
                                                  const QTable& q) {
  check_shapes(mdp, q);
  // State values under the greedy action, ties to the lowest index.
  std::vector<double> vmax(mdp.n_states);
  PolicyTable greedy(mdp.n_states, mdp.n_actions, 0.0);
  for (int s = 0; s < mdp.n_states; ++s) {
    int best = 0;
    for (int a = 1; a < mdp.n_actions; ++a) {
      if (q(s, a) > q(s, best)) best = a;
    }
    vmax[s] = q(s, best);
    greedy(s, best) = 1.0;
  }
  QTable out(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      double acc = 0.0;
      for (int s2 = 0; s2 < mdp.n_states; ++s2) {
        acc += mdp.p(s, a, s2) * vmax[s2];
      }
      out(s, a) = mdp.r(s, a) + mdp.discount * acc;
    }
  }
  return {std::move(out), std::move(greedy)};
}

Eigen::MatrixXd pair_transition_matrix(const FiniteMdp& mdp,
                                       const PolicyTable& policy) {
  check_shapes(mdp, policy);
  const int n = mdp.n_pairs();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      const int row = s * mdp.n_actions + a;
      for (int s2 = 0; s2 < mdp.n_states; ++s2) {
        const double pr = mdp.p(s, a, s2);
        if (pr == 0.0) continue;
        for (int a2 = 0; a2 < mdp.n_actions; ++a2) {
          m(row, s2 * mdp.n_actions + a2) += pr * policy(s2, a2);
        }
      }
    }
  }
  return m;
}

QTable exact_q_pi(const FiniteMdp& mdp, const PolicyTable& policy) {
  check_shapes(mdp, policy);
  if (!(mdp.discount < 1.0)) {
    throw std::invalid_argument("exact_q_pi: discount must be < 1");
  }
  const int n = mdp.n_pairs();
  const Eigen::MatrixXd p_pi = pair_transition_matrix(mdp, policy);
  const Eigen::MatrixXd lhs =
      Eigen::MatrixXd::Identity(n, n) - mdp.discount * p_pi;
  const Eigen::VectorXd r =
      Eigen::Map<const Eigen::VectorXd>(mdp.reward.data(), n);
  const Eigen::VectorXd x = lhs.partialPivLu().solve(r);

  QTable q(mdp.n_states, mdp.n_actions);
  Eigen::Map<Eigen::VectorXd>(q.values.data(), n) = x;
  const double residual = sup_norm_diff(bellman_backup(mdp, policy, q), q);
  if (residual > 1e-10) {
    throw std::runtime_error("exact_q_pi: solver residual " +
                             std::to_string(residual) + " exceeds 1e-10");
  }
  return q;
}

QTable exact_q_star(const FiniteMdp& mdp, double tol) {
  if (tol <= 0.0) throw std::invalid_argument("exact_q_star: tol must be > 0");
  if (!(mdp.discount < 1.0)) {
    throw std::invalid_argument("exact_q_star: discount must be < 1");
  }
  const double gamma = mdp.discount;
  // Stopping rule ||TQ - Q|| <= tol (1-gamma) / (2 gamma) guarantees
  // ||Q - Q*|| <= tol. A zero discount makes the first backup exact.
  const double threshold =
      gamma > 0.0 ? tol * (1.0 - gamma) / (2.0 * gamma)
                  : std::numeric_limits<double>::infinity();
  QTable q(mdp.n_states, mdp.n_actions, 0.0);
  for (long iter = 0; iter < 100'000'000L; ++iter) {
    QTable next = bellman_optimality(mdp, q).first;
    const double residual = sup_norm_diff(next, q);
    q = std::move(next);
    if (residual <= threshold) return q;
  }
  throw std::runtime_error("exact_q_star: value iteration did not converge");
}

double td_error(const FiniteMdp& mdp, const Transition& tr,
                const PolicyTable& policy, const QTable& q) {
  double bootstrap = 0.0;
  if (!mdp.is_terminal(tr.next_state)) {
    for (int a2 = 0; a2 < mdp.n_actions; ++a2) {
      bootstrap += policy(tr.next_state, a2) * q(tr.next_state, a2);
    }
  }
  return tr.reward + mdp.discount * bootstrap - q(tr.state, tr.action);
}

FiniteMdp generate_random_mdp(int n_states, int n_actions, int branching,
                              double reward_scale, std::uint64_t seed,
                              double discount) {
  if (n_states < 1 || n_actions < 1) {
    throw std::invalid_argument("generate_random_mdp: need >= 1 state/action");
  }
  if (branching < 1 || branching > n_states) {
    throw std::invalid_argument(
        "generate_random_mdp: branching must lie in [1, n_states]");
  }
  if (reward_scale < 0.0) {
    throw std::invalid_argument("generate_random_mdp: reward_scale < 0");
  }
  if (!(discount >= 0.0 && discount < 1.0)) {
    throw std::invalid_argument("generate_random_mdp: discount outside [0,1)");
  }
  RngStream rng(seed);
  FiniteMdp mdp(n_states, n_actions, discount);
  std::vector<int> states(n_states);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      // Partial Fisher-Yates draw of `branching` distinct successors.
      std::iota(states.begin(), states.end(), 0);
      for (int i = 0; i < branching; ++i) {
        const int j = i + rng.next_int(n_states - i);
        std::swap(states[i], states[j]);
      }
      const std::vector<double> probs = rng.dirichlet(branching);
      for (int i = 0; i < branching; ++i) {
        mdp.p(s, a, states[i]) = probs[i];
      }
      mdp.r(s, a) = rng.next_in(-reward_scale, reward_scale);
    }
  }
  mdp.validate();
  return mdp;
}

FiniteMdp make_chain2() {
  FiniteMdp mdp(2, 2, 0.5);
  const int kLeft = 0, kRight = 1;
  mdp.p(0, kLeft, 0) = 1.0;
  mdp.p(0, kRight, 1) = 1.0;
  mdp.p(1, kLeft, 0) = 1.0;
  mdp.p(1, kRight, 1) = 1.0;
  mdp.r(1, kRight) = 1.0;
  mdp.validate();
  return mdp;
}

FiniteMdp make_chain2_episodic() {
  const FiniteMdp base = make_chain2();
  FiniteMdp mdp(3, 2, base.discount);
  const int kTerminal = 2;
  const double kExitProb = 0.1;
  for (int s = 0; s < 2; ++s) {
    for (int a = 0; a < 2; ++a) {
      for (int s2 = 0; s2 < 2; ++s2) {
        mdp.p(s, a, s2) = (1.0 - kExitProb) * base.p(s, a, s2);
      }
      mdp.p(s, a, kTerminal) = kExitProb;
      mdp.r(s, a) = base.r(s, a);
    }
  }
  for (int a = 0; a < 2; ++a) mdp.p(kTerminal, a, kTerminal) = 1.0;
  mdp.terminal_states.insert(kTerminal);
  mdp.validate();
  return mdp;
}

}  // namespace tracelab
