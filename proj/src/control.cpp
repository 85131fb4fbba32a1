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

#include "tracelab/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tracelab/multistep.hpp"
#include "tracelab/rng.hpp"

namespace tracelab {

EpsilonSchedule EpsilonSchedule::inverse() {
  EpsilonSchedule s;
  s.kind = Kind::kInverse;
  return s;
}

EpsilonSchedule EpsilonSchedule::exponential(double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw std::invalid_argument("epsilon schedule: rho must lie in [0, 1)");
  }
  EpsilonSchedule s;
  s.kind = Kind::kExponential;
  s.rho = rho;
  return s;
}

EpsilonSchedule EpsilonSchedule::constant_then_decay(double constant,
                                                     int decay_start) {
  if (!(constant >= 0.0 && constant <= 1.0) || decay_start < 0) {
    throw std::invalid_argument("epsilon schedule: bad plateau parameters");
  }
  EpsilonSchedule s;
  s.kind = Kind::kConstantThenDecay;
  s.constant = constant;
  s.decay_start = decay_start;
  return s;
}

double EpsilonSchedule::at(int k) const {
  switch (kind) {
    case Kind::kInverse:
      return 1.0 / (k + 1);
    case Kind::kExponential:
      return std::pow(rho, k);
    case Kind::kConstantThenDecay:
      return k < decay_start ? constant : constant / (k - decay_start + 1);
  }
  return 0.0;
}

double epsilon_of(const FiniteMdp& mdp, const QTable& q,
                  const PolicyTable& policy) {
  const double norm_q = sup_norm(q);
  if (norm_q == 0.0) return 0.0;
  const QTable optimal = bellman_optimality(mdp, q).first;
  const QTable backed = bellman_backup(mdp, policy, q);
  double gap = 0.0;
  for (std::size_t i = 0; i < optimal.values.size(); ++i) {
    gap = std::max(gap, optimal.values[i] - backed.values[i]);
  }
  return std::clamp(gap / norm_q, 0.0, 1.0);
}

PolicyTable make_target_policy(const FiniteMdp& mdp, const QTable& q, int k,
                               const EpsilonSchedule& schedule) {
  const double eps = schedule.at(k);
  PolicyTable pi(mdp.n_states, mdp.n_actions, eps / mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    int best = 0;
    for (int a = 1; a < mdp.n_actions; ++a) {
      if (q(s, a) > q(s, best)) best = a;
    }
    pi(s, best) += 1.0 - eps;
  }
  return pi;
}

QTable initial_q(const FiniteMdp& mdp, QInitMode mode, std::uint64_t seed) {
  double scale = 0.0;
  for (double r : mdp.reward) scale = std::max(scale, std::abs(r));
  scale /= 1.0 - mdp.discount;
  QTable q(mdp.n_states, mdp.n_actions, 0.0);
  switch (mode) {
    case QInitMode::kZeros:
      break;
    case QInitMode::kPessimistic:
      for (double& v : q.values) v = -scale;
      break;
    case QInitMode::kOptimistic:
      for (double& v : q.values) v = scale;
      break;
    case QInitMode::kRandom: {
      RngStream rng(seed, "control:q0");
      for (double& v : q.values) v = rng.next_in(-scale, scale);
      break;
    }
  }
  return q;
}

namespace {

PolicyTable behavior_for(const FiniteMdp& mdp, const ControlConfig& config,
                         const PolicyTable& target) {
  switch (config.behavior_mode) {
    case BehaviorMode::kUniform:
      return PolicyTable::uniform(mdp.n_states, mdp.n_actions);
    case BehaviorMode::kEpsilonGreedyMirror:
      return target;
    case BehaviorMode::kFixedRandom:
      return PolicyTable::random_full_support(
          mdp.n_states, mdp.n_actions,
          derive_stream_seed(config.seed, "control:behavior"));
  }
  throw std::logic_error("behavior_for: unhandled mode");
}

}  // namespace

std::pair<QTable, ControlRecord> control_step(const FiniteMdp& mdp,
                                              const QTable& q_k, int k,
                                              const ControlConfig& config,
                                              const PolicyTable& behavior,
                                              const QTable& q_star) {
  const PolicyTable target =
      make_target_policy(mdp, q_k, k, config.epsilon_schedule);
  MultistepOperator op(mdp, target, behavior, config.strategy);
  const QTable q_next =
      config.strategy.factorable()
          ? op.closed_form(q_k)
          : op.enumerate(q_k, config.operator_tol, config.budget).mq;

  ControlRecord record;
  record.k = k;
  record.err = sup_norm_diff(q_k, q_star);
  record.epsilon = epsilon_of(mdp, q_k, target);
  record.bound_rhs = mdp.discount * record.err +
                     record.epsilon / (1.0 - mdp.discount) * sup_norm(q_k) +
                     config.bound_slack;
  record.bound_ok = sup_norm_diff(q_next, q_star) <= record.bound_rhs;
  return {q_next, record};
}

ControlTrace run_control(const FiniteMdp& mdp, const ControlConfig& config) {
  if (config.iterations < 1) {
    throw std::invalid_argument("run_control: iterations must be >= 1");
  }
  const QTable q_star = exact_q_star(mdp, 1e-9);
  QTable q = initial_q(mdp, config.q0_mode, config.seed);

  ControlTrace trace;
  trace.records.reserve(config.iterations);
  for (int k = 0; k < config.iterations; ++k) {
    if (sup_norm_diff(q, q_star) <= config.tol) break;
    PolicyTable target =
        make_target_policy(mdp, q, k, config.epsilon_schedule);
    const PolicyTable behavior = behavior_for(mdp, config, target);
    auto [q_next, record] = control_step(mdp, q, k, config, behavior, q_star);
    trace.records.push_back(record);
    q = std::move(q_next);
  }
  trace.final_err = sup_norm_diff(q, q_star);
  trace.q_final = std::move(q);
  return trace;
}

}  // namespace tracelab
