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

#ifndef TRACELAB_CONTROL_HPP_
#define TRACELAB_CONTROL_HPP_

#include <cstdint>
#include <vector>

#include "tracelab/mdp.hpp"
#include "tracelab/traces.hpp"

namespace tracelab {

/// Exploration schedule for the target-policy sequence; must decay to zero
/// for greedy-in-the-limit behavior.
struct EpsilonSchedule {
  enum class Kind { kInverse, kExponential, kConstantThenDecay };
  Kind kind = Kind::kInverse;
  double rho = 0.5;       // exponential base
  double constant = 0.5;  // plateau value for constant-then-decay
  int decay_start = 20;   // first iteration of the decay phase

  static EpsilonSchedule inverse();
  static EpsilonSchedule exponential(double rho);
  static EpsilonSchedule constant_then_decay(double constant, int decay_start);
  double at(int k) const;
};

enum class BehaviorMode {
  kUniform,              // uniform behavior every iteration
  kEpsilonGreedyMirror,  // behavior equals the current target policy
  kFixedRandom,          // one seeded full-support policy, fixed across k
};

enum class QInitMode { kZeros, kPessimistic, kOptimistic, kRandom };

struct ControlConfig {
  TraceStrategy strategy;
  EpsilonSchedule epsilon_schedule;
  BehaviorMode behavior_mode = BehaviorMode::kUniform;
  QInitMode q0_mode = QInitMode::kZeros;
  std::uint64_t seed = 0;    // drives fixed-random behavior and random q0
  int iterations = 100;
  double tol = 1e-9;         // early-stop threshold on ||Q_k - Q*||
  double operator_tol = 1e-8;   // enumeration tolerance (non-factorable)
  double bound_slack = 1e-7;    // numerical slack added to the bound
  long long budget = 50'000'000;
};

struct ControlRecord {
  int k = 0;
  double err = 0.0;        // ||Q_k - Q*||_inf before the step
  double epsilon = 0.0;    // achieved greedy gap of the target policy
  double bound_rhs = 0.0;  // gamma*err + epsilon/(1-gamma)*||Q_k|| + slack
  bool bound_ok = false;   // ||Q_{k+1} - Q*||_inf <= bound_rhs
};

struct ControlTrace {
  std::vector<ControlRecord> records;
  QTable q_final;
  double final_err = 0.0;
};

// Smallest epsilon in [0,1] with T_pi Q >= T Q - epsilon * ||Q|| * e;
// returns 0 when ||Q|| = 0 (the inequality is then degenerate).
double epsilon_of(const FiniteMdp& mdp, const QTable& q,
                  const PolicyTable& policy);

// Epsilon-greedy mixture around the greedy policy of q (ties to the lowest
// action index): the greedy action receives 1 - eps + eps/|A|, the rest
// eps/|A| each.
PolicyTable make_target_policy(const FiniteMdp& mdp, const QTable& q, int k,
                               const EpsilonSchedule& schedule);

// One iteration: builds the target policy for step k, applies the expected
// multistep backup under the configured behavior policy (closed form when
// the strategy factors, otherwise certified enumeration), and reports the
// per-iteration error bound.
std::pair<QTable, ControlRecord> control_step(const FiniteMdp& mdp,
                                              const QTable& q_k, int k,
                                              const ControlConfig& config,
                                              const PolicyTable& behavior,
                                              const QTable& q_star);

// Full iteration loop with early stop at config.tol.
ControlTrace run_control(const FiniteMdp& mdp, const ControlConfig& config);

// The configured initial Q-table (zeros / +-||R||/(1-gamma) / seeded random).
QTable initial_q(const FiniteMdp& mdp, QInitMode mode, std::uint64_t seed);

}  // namespace tracelab

#endif  // TRACELAB_CONTROL_HPP_
