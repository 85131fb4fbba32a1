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

#ifndef TRACELAB_MDP_HPP_
#define TRACELAB_MDP_HPP_

#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace tracelab {

// Probability rows must sum to one within this tolerance.
inline constexpr double kStochasticTol = 1e-12;

/// Q-values stored as a flat (state, action) row-major table.
struct QTable {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> values;

  QTable() = default;
  QTable(int ns, int na, double fill = 0.0)
      : n_states(ns), n_actions(na),
        values(static_cast<std::size_t>(ns) * na, fill) {}

  int size() const { return n_states * n_actions; }
  double& operator()(int s, int a) { return values[index(s, a)]; }
  double operator()(int s, int a) const { return values[index(s, a)]; }
  std::size_t index(int s, int a) const {
    return static_cast<std::size_t>(s) * n_actions + a;
  }
};

double sup_norm(const QTable& q);
double sup_norm_diff(const QTable& a, const QTable& b);

/// Per-state action distribution. Serves as both target and behavior policy.
struct PolicyTable {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> probs;

  PolicyTable() = default;
  PolicyTable(int ns, int na, double fill = 0.0)
      : n_states(ns), n_actions(na),
        probs(static_cast<std::size_t>(ns) * na, fill) {}

  double& operator()(int s, int a) {
    return probs[static_cast<std::size_t>(s) * n_actions + a];
  }
  double operator()(int s, int a) const {
    return probs[static_cast<std::size_t>(s) * n_actions + a];
  }

  static PolicyTable uniform(int ns, int na);
  // Rows drawn from a Dirichlet(1) mixed with a uniform floor so every
  // action keeps positive probability.
  static PolicyTable random_full_support(int ns, int na, std::uint64_t seed,
                                         double uniform_floor = 0.1);

  // Throws std::invalid_argument if any row is not a distribution.
  void validate() const;
};

/// Finite MDP: states, actions, transition tensor P(s'|s,a), reward table
/// R(s,a), discount in [0,1). Terminal states are absorbing with zero reward
/// so the same model serves both the operator math (continuing view) and the
/// episodic learner.
struct FiniteMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> transition;  // (s, a, s') row-major
  std::vector<double> reward;      // (s, a) row-major
  double discount = 0.0;
  std::set<int> terminal_states;

  FiniteMdp() = default;
  FiniteMdp(int ns, int na, double gamma)
      : n_states(ns), n_actions(na),
        transition(static_cast<std::size_t>(ns) * na * ns, 0.0),
        reward(static_cast<std::size_t>(ns) * na, 0.0), discount(gamma) {}

  int n_pairs() const { return n_states * n_actions; }
  bool is_terminal(int s) const { return terminal_states.count(s) > 0; }

  double& p(int s, int a, int s2) {
    return transition[(static_cast<std::size_t>(s) * n_actions + a) *
                          n_states + s2];
  }
  double p(int s, int a, int s2) const {
    return transition[(static_cast<std::size_t>(s) * n_actions + a) *
                          n_states + s2];
  }
  double& r(int s, int a) {
    return reward[static_cast<std::size_t>(s) * n_actions + a];
  }
  double r(int s, int a) const {
    return reward[static_cast<std::size_t>(s) * n_actions + a];
  }

  // Throws std::invalid_argument when a structural invariant is violated:
  // non-stochastic transition rows, negative probabilities, non-absorbing
  // or rewarded terminal states, or discount outside [0, 1).
  void validate() const;
};

/// One sampled step, the argument of the TD error.
struct Transition {
  int state = 0;
  int action = 0;
  double reward = 0.0;
  int next_state = 0;
};

// (P_pi q)(s,a) = sum_{s'} sum_{a'} P(s'|s,a) pi(a'|s') q(s',a').
QTable apply_policy_operator(const FiniteMdp& mdp, const PolicyTable& policy,
                             const QTable& q);

// R + gamma * P_pi q.
QTable bellman_backup(const FiniteMdp& mdp, const PolicyTable& policy,
                      const QTable& q);

// Optimality backup R + gamma * max_pi P_pi q, together with the greedy
// deterministic policy attaining the max (ties to the lowest action index).
std::pair<QTable, PolicyTable> bellman_optimality(const FiniteMdp& mdp,
                                                  const QTable& q);

// Direct dense solve of (I - gamma P_pi) Q = R. The result is checked to be
// a Bellman fixed point within 1e-10 in sup norm.
QTable exact_q_pi(const FiniteMdp& mdp, const PolicyTable& policy);

// Value iteration to within `tol` of the optimal Q-function in sup norm.
QTable exact_q_star(const FiniteMdp& mdp, double tol);

// TD error r + gamma * sum_a' pi(a'|s') q(s',a') - q(s,a), with a zero
// bootstrap when next_state is terminal.
double td_error(const FiniteMdp& mdp, const Transition& tr,
                const PolicyTable& policy, const QTable& q);

// Garnet-style random MDP: every (s,a) has `branching` distinct successors
// with Dirichlet(1) probabilities, rewards i.i.d. uniform in
// [-reward_scale, reward_scale]. Deterministic given the seed.
FiniteMdp generate_random_mdp(int n_states, int n_actions, int branching,
                              double reward_scale, std::uint64_t seed,
                              double discount = 0.5);

// The (state, action)-pair transition matrix of the policy: row (s,a) has
// entry P(s'|s,a) * pi(a'|s') at column (s',a').
Eigen::MatrixXd pair_transition_matrix(const FiniteMdp& mdp,
                                       const PolicyTable& policy);

// Built-in fixtures.
//
// chain2: two states, two actions {left=0, right=1}; deterministic moves
// (right from s0 leads to s1, right from s1 stays, left mirrors); reward 1
// on (s1, right); discount 0.5.
FiniteMdp make_chain2();
// chain2 with a third absorbing terminal state entered from every
// non-terminal (s,a) with probability 0.1 (remaining mass rescaled).
FiniteMdp make_chain2_episodic();

}  // namespace tracelab

#endif  // TRACELAB_MDP_HPP_
