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

#ifndef TRACELAB_MULTISTEP_HPP_
#define TRACELAB_MULTISTEP_HPP_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "tracelab/mdp.hpp"
#include "tracelab/traces.hpp"

namespace tracelab {

inline constexpr long long kDefaultExpansionBudget = 50'000'000;

/// Result of evaluating the multistep backup by trajectory enumeration.
struct OperatorResult {
  QTable mq;
  double tail_bound = 0.0;  // certified sup-norm truncation error
  int horizon = 0;
  long long trajectories_expanded = 0;
};

/// Raised when exact enumeration would exceed the branch-visit budget;
/// carries the horizon the tolerance demanded and the visits spent.
struct ExpansionBudgetError : std::runtime_error {
  ExpansionBudgetError(int horizon, long long visits, long long budget);
  int required_horizon;
  long long branch_count;
};

struct MonteCarloResult {
  QTable estimate;
  QTable std_error;
};

struct ContractionReport {
  double gamma = 0.0;
  double norm_before = 0.0;        // ||Q - Q^pi||_inf
  double norm_after = 0.0;         // ||MQ - Q^pi||_inf
  double effective_map_norm = 0.0; // ||L||_inf
  // ||I - C (I - gamma P_pi)||_inf, defined for factorable strategies where
  // C has the closed form (I - gamma P_cmu)^{-1}.
  std::optional<double> lemma2_norm;
  bool admissible_spot_check = false;
};

/// Expected multistep backup for one (MDP, target, behavior, strategy)
/// quadruple:
///
///   (MQ)(s,a) = Q(s,a) + sum_t gamma^t E_mu[ beta_t * delta_t | s,a ]
///
/// where beta_t weights the TD error at step t by the strategy's coefficient
/// of the visit history so far. Expectations are taken over behavior-policy
/// trajectories; the per-step reward expectation is collapsed analytically,
/// so only (state, action) branching is ever expanded.
class MultistepOperator {
 public:
  MultistepOperator(FiniteMdp mdp, PolicyTable target, PolicyTable behavior,
                    TraceStrategy strategy);

  // Exact evaluation by depth-first expansion of all behavior-reachable
  // trajectories up to a horizon chosen so the certified tail is <= tol.
  // Zero-probability and provably-zero-contribution branches are pruned
  // exactly. Throws ExpansionBudgetError when the tree exceeds `budget`
  // branch visits.
  OperatorResult enumerate(const QTable& q, double tol,
                           long long budget = kDefaultExpansionBudget) const;

  // Analytic evaluation q + (I - gamma P_cmu)^{-1} (T_pi q - q) for
  // factorable strategies. Exact up to a checked 1e-10 solver residual.
  QTable closed_form(const QTable& q) const;

  // Sample-mean estimate over `n_samples` behavior rollouts of length
  // `horizon` per start pair, with per-entry standard errors. Deterministic
  // given the seed.
  MonteCarloResult monte_carlo(const QTable& q, int n_samples, int horizon,
                               std::uint64_t seed) const;

  // The matrix L with MQ - Q^pi = L (Q - Q^pi), probed column-by-column with
  // unit vectors (the backup is affine in Q). Each probe enumerates at
  // tol / n; the result is verified against a random Q within 10 * tol.
  Eigen::MatrixXd effective_linear_map(
      double tol, long long budget = kDefaultExpansionBudget) const;

  // Contraction diagnostics around Q^pi for one Q.
  ContractionReport contraction_report(
      double norm_tol, const QTable& q,
      long long budget = kDefaultExpansionBudget) const;

  // Sup-norm residual between MQ - Q^pi and its truncated difference series
  //   sum_{t=1..t_max} gamma^t (P_cmu^{t-1} P_pi - P_cmu^t) (Q - Q^pi),
  // for factorable strategies.
  double difference_series_residual(const QTable& q, int t_max) const;

  // Pair-to-pair transition matrix weighted by behavior probability and the
  // per-decision trace: entry ((s,a),(s',a')) = P(s'|s,a) mu(a'|s') c(s',a').
  Eigen::MatrixXd trace_weighted_matrix() const;

  const FiniteMdp& mdp() const { return mdp_; }
  const PolicyTable& target() const { return target_; }
  const PolicyTable& behavior() const { return behavior_; }
  const TraceStrategy& strategy() const { return strategy_; }

 private:
  struct Tail {
    double telescoped = 0.0;  // valid when admissible with full support
    double absolute = 0.0;    // from the history-independent bound
    bool telescoped_valid = false;
    bool absolute_valid = false;
  };
  Tail tail_from(int horizon, double norm_delta) const;
  double tail_value(int horizon, double norm_delta) const;
  int choose_horizon(double norm_delta, double tol) const;

  FiniteMdp mdp_;
  PolicyTable target_;
  PolicyTable behavior_;
  TraceStrategy strategy_;
  bool full_support_ = false;

  // Flattened expansion structure: per pair the positive-probability
  // successor states, per state the positive-probability behavior actions.
  std::vector<std::vector<std::pair<int, double>>> successors_;
  std::vector<std::vector<std::pair<int, double>>> behavior_actions_;
};

}  // namespace tracelab

#endif  // TRACELAB_MULTISTEP_HPP_
