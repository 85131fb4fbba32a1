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

#include "tracelab/multistep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tracelab/rng.hpp"

namespace tracelab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd to_vector(const QTable& q) {
  return Eigen::Map<const Eigen::VectorXd>(q.values.data(), q.size());
}

QTable to_qtable(const Eigen::VectorXd& v, int ns, int na) {
  QTable q(ns, na);
  Eigen::Map<Eigen::VectorXd>(q.values.data(), q.size()) = v;
  return q;
}

// How each strategy kind advances its scalar summary along a branch.
enum class StepMode { kFactor, kTruncated, kNonMarkov };

// Depth-first exact expansion of one start pair. Keeps the running summary
// scalar inline so no TraceSummary objects are allocated per node.
class Enumerator {
 public:
  Enumerator(const FiniteMdp& mdp, const TraceStrategy& strategy,
             const std::vector<std::vector<std::pair<int, double>>>& succ,
             const std::vector<std::vector<std::pair<int, double>>>& acts,
             const std::vector<double>& delta, int horizon, long long budget)
      : succ_(succ), acts_(acts), delta_(delta), n_actions_(mdp.n_actions),
        gamma_(mdp.discount), horizon_(horizon), budget_(budget),
        lambda_(strategy.lambda), clip_(strategy.clip) {
    switch (strategy.kind) {
      case TraceKind::kTruncatedIs:
        mode_ = StepMode::kTruncated;
        break;
      case TraceKind::kNonMarkovRetrace:
        mode_ = StepMode::kNonMarkov;
        break;
      default:
        mode_ = StepMode::kFactor;
        break;
    }
    const int n = mdp.n_pairs();
    factor_.assign(n, 0.0);
    ratio_.assign(n, 0.0);
    dead_if_zero_ = !(mode_ == StepMode::kTruncated && clip_ == 0.0);
    compute_zero_closed(mdp);
  }

  void set_pair_weights(const PolicyTable& target,
                        const PolicyTable& behavior,
                        const TraceStrategy& strategy) {
    const int ns = target.n_states, na = target.n_actions;
    for (int s = 0; s < ns; ++s) {
      for (int a = 0; a < na; ++a) {
        const int pair = s * na + a;
        const double mu = behavior(s, a);
        // Pairs with zero behavior probability are never expanded; their
        // weights stay unused.
        ratio_[pair] = mu > 0.0 ? target(s, a) / mu : 0.0;
        if (mode_ == StepMode::kFactor) {
          factor_[pair] =
              mu > 0.0 ? markov_trace(strategy, s, a, target, behavior) : 0.0;
        }
      }
    }
  }

  double run_start(int pair) {
    acc_ = 0.0;
    expand(pair, /*t=*/0, /*weight=*/1.0, /*value=*/1.0, /*beta=*/1.0);
    return acc_;
  }

  long long visits() const { return visits_; }
  bool live_frontier() const { return live_frontier_; }

 private:
  void compute_zero_closed(const FiniteMdp& mdp) {
    // Greatest set of states from which every reachable TD expectation is
    // exactly zero; subtrees entering it contribute nothing at any depth.
    const int ns = mdp.n_states, na = mdp.n_actions;
    zero_closed_.assign(ns, 1);
    for (int s = 0; s < ns; ++s) {
      for (int a = 0; a < na; ++a) {
        if (delta_[s * na + a] != 0.0) zero_closed_[s] = 0;
      }
    }
    bool changed = true;
    while (changed) {
      changed = false;
      for (int s = 0; s < ns; ++s) {
        if (!zero_closed_[s]) continue;
        for (int a = 0; a < na && zero_closed_[s]; ++a) {
          for (const auto& [s2, pr] : succ_[s * na + a]) {
            if (!zero_closed_[s2]) {
              zero_closed_[s] = 0;
              changed = true;
              break;
            }
          }
        }
      }
    }
  }

  void expand(int pair, int t, double weight, double value, double beta) {
    if (++visits_ > budget_) {
      throw ExpansionBudgetError(horizon_, visits_, budget_);
    }
    acc_ += weight * beta * delta_[pair];
    const bool value_dead = value == 0.0 || !dead_if_zero_;
    if (t == horizon_) {
      if (!value_dead) live_frontier_ = true;
      return;
    }
    if (value_dead) return;
    for (const auto& [s2, pr] : succ_[pair]) {
      if (zero_closed_[s2]) continue;
      const double base = weight * gamma_ * pr;
      for (const auto& [a2, mu] : acts_[s2]) {
        const int child = s2 * n_actions_ + a2;
        double v2, b2;
        switch (mode_) {
          case StepMode::kFactor:
            v2 = value * factor_[child];
            b2 = v2;
            break;
          case StepMode::kTruncated:
            v2 = value * ratio_[child];
            b2 = std::min(clip_, v2);
            break;
          case StepMode::kNonMarkov:
            v2 = lambda_ * std::min(1.0, value * ratio_[child]);
            b2 = v2;
            break;
        }
        expand(child, t + 1, base * mu, v2, b2);
      }
    }
  }

  const std::vector<std::vector<std::pair<int, double>>>& succ_;
  const std::vector<std::vector<std::pair<int, double>>>& acts_;
  const std::vector<double>& delta_;
  std::vector<double> factor_;
  std::vector<double> ratio_;
  std::vector<char> zero_closed_;
  int n_actions_;
  double gamma_;
  int horizon_;
  long long budget_;
  double lambda_;
  double clip_;
  StepMode mode_ = StepMode::kFactor;
  bool dead_if_zero_ = true;
  double acc_ = 0.0;
  long long visits_ = 0;
  bool live_frontier_ = false;
};

}  // namespace

ExpansionBudgetError::ExpansionBudgetError(int horizon, long long visits,
                                           long long budget)
    : std::runtime_error(
          "enumeration budget exceeded: horizon " + std::to_string(horizon) +
          " needs more than " + std::to_string(budget) +
          " branch visits (spent " + std::to_string(visits) + ")"),
      required_horizon(horizon), branch_count(visits) {}

MultistepOperator::MultistepOperator(FiniteMdp mdp, PolicyTable target,
                                     PolicyTable behavior,
                                     TraceStrategy strategy)
    : mdp_(std::move(mdp)), target_(std::move(target)),
      behavior_(std::move(behavior)), strategy_(std::move(strategy)) {
  mdp_.validate();
  target_.validate();
  behavior_.validate();
  strategy_.validate(mdp_.n_pairs());
  if (target_.n_states != mdp_.n_states ||
      target_.n_actions != mdp_.n_actions ||
      behavior_.n_states != mdp_.n_states ||
      behavior_.n_actions != mdp_.n_actions) {
    throw std::invalid_argument("operator: policy shapes do not match MDP");
  }

  full_support_ = true;
  for (int s = 0; s < mdp_.n_states; ++s) {
    for (int a = 0; a < mdp_.n_actions; ++a) {
      if (target_(s, a) > 0.0 && behavior_(s, a) <= 0.0) full_support_ = false;
    }
  }

  successors_.resize(mdp_.n_pairs());
  for (int s = 0; s < mdp_.n_states; ++s) {
    for (int a = 0; a < mdp_.n_actions; ++a) {
      auto& list = successors_[s * mdp_.n_actions + a];
      for (int s2 = 0; s2 < mdp_.n_states; ++s2) {
        const double pr = mdp_.p(s, a, s2);
        if (pr > 0.0) list.emplace_back(s2, pr);
      }
    }
  }
  behavior_actions_.resize(mdp_.n_states);
  for (int s = 0; s < mdp_.n_states; ++s) {
    for (int a = 0; a < mdp_.n_actions; ++a) {
      const double mu = behavior_(s, a);
      if (mu > 0.0) behavior_actions_[s].emplace_back(a, mu);
    }
  }
}

MultistepOperator::Tail MultistepOperator::tail_from(int horizon,
                                                     double norm_delta) const {
  const double gamma = mdp_.discount;
  Tail tail;
  const BetaBound bound = beta_upper_bound(strategy_, horizon + 1);
  // Coefficients below the IS ratio product make the tail expectation
  // telescope onto the target policy, where each summand is bounded by
  // gamma^t * ||T_pi q - q||.
  if (bound.admissible && full_support_) {
    tail.telescoped =
        std::pow(gamma, horizon + 1) / (1.0 - gamma) * norm_delta;
    tail.telescoped_valid = true;
  }
  // History-independent numeric bounds give sum_{t>H} gamma^t u_t, which is
  // geometric for every supported kind.
  switch (strategy_.kind) {
    case TraceKind::kTreeBackup:
    case TraceKind::kRetrace:
    case TraceKind::kQLambdaOpc: {
      const double gl = gamma * strategy_.lambda;
      tail.absolute = gl > 0.0
                          ? std::pow(gl, horizon + 1) / (1.0 - gl) * norm_delta
                          : 0.0;
      tail.absolute_valid = true;
      break;
    }
    case TraceKind::kNonMarkovRetrace:
      tail.absolute = strategy_.lambda * std::pow(gamma, horizon + 1) /
                      (1.0 - gamma) * norm_delta;
      tail.absolute_valid = true;
      break;
    case TraceKind::kTruncatedIs:
      tail.absolute = strategy_.clip * std::pow(gamma, horizon + 1) /
                      (1.0 - gamma) * norm_delta;
      tail.absolute_valid = true;
      break;
    case TraceKind::kImportanceSampling:
    case TraceKind::kCompositeGlr:
      break;
  }
  return tail;
}

double MultistepOperator::tail_value(int horizon, double norm_delta) const {
  const Tail tail = tail_from(horizon, norm_delta);
  double value = kInf;
  if (tail.telescoped_valid) value = std::min(value, tail.telescoped);
  if (tail.absolute_valid) value = std::min(value, tail.absolute);
  return value;
}

int MultistepOperator::choose_horizon(double norm_delta, double tol) const {
  if (norm_delta == 0.0) return 0;
  if (!std::isfinite(tail_value(0, norm_delta))) {
    throw std::invalid_argument(
        "enumerate: no finite truncation bound for strategy '" +
        to_string(strategy_.kind) +
        "' (behavior policy must cover the target policy)");
  }
  int horizon = 0;
  while (tail_value(horizon, norm_delta) > tol) {
    if (++horizon > 1'000'000) {
      throw std::runtime_error("enumerate: horizon search did not terminate");
    }
  }
  return horizon;
}

OperatorResult MultistepOperator::enumerate(const QTable& q, double tol,
                                            long long budget) const {
  if (!(tol > 0.0)) throw std::invalid_argument("enumerate: tol must be > 0");
  if (!(mdp_.discount < 1.0)) {
    throw std::invalid_argument("enumerate: discount must be < 1");
  }
  const QTable backed = bellman_backup(mdp_, target_, q);
  std::vector<double> delta(q.size());
  double norm_delta = 0.0;
  for (int i = 0; i < q.size(); ++i) {
    delta[i] = backed.values[i] - q.values[i];
    norm_delta = std::max(norm_delta, std::abs(delta[i]));
  }
  const int horizon = choose_horizon(norm_delta, tol);

  Enumerator enumerator(mdp_, strategy_, successors_, behavior_actions_,
                        delta, horizon, budget);
  enumerator.set_pair_weights(target_, behavior_, strategy_);

  OperatorResult result;
  result.mq = q;
  result.horizon = horizon;
  for (int pair = 0; pair < mdp_.n_pairs(); ++pair) {
    result.mq.values[pair] += enumerator.run_start(pair);
  }
  result.trajectories_expanded = enumerator.visits();
  result.tail_bound =
      enumerator.live_frontier() ? tail_value(horizon, norm_delta) : 0.0;
  return result;
}

Eigen::MatrixXd MultistepOperator::trace_weighted_matrix() const {
  const int n = mdp_.n_pairs();
  const int na = mdp_.n_actions;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (int s = 0; s < mdp_.n_states; ++s) {
    for (int a = 0; a < na; ++a) {
      const int row = s * na + a;
      for (const auto& [s2, pr] : successors_[row]) {
        for (const auto& [a2, mu] : behavior_actions_[s2]) {
          m(row, s2 * na + a2) +=
              pr * mu * markov_trace(strategy_, s2, a2, target_, behavior_);
        }
      }
    }
  }
  return m;
}

QTable MultistepOperator::closed_form(const QTable& q) const {
  const int n = mdp_.n_pairs();
  const Eigen::MatrixXd p_cmu = trace_weighted_matrix();
  const Eigen::MatrixXd lhs =
      Eigen::MatrixXd::Identity(n, n) - mdp_.discount * p_cmu;
  const QTable backed = bellman_backup(mdp_, target_, q);
  Eigen::VectorXd delta = to_vector(backed) - to_vector(q);
  const Eigen::VectorXd x = lhs.partialPivLu().solve(delta);
  const double residual = (lhs * x - delta).lpNorm<Eigen::Infinity>();
  if (residual > 1e-10) {
    throw std::runtime_error("closed_form: solver residual " +
                             std::to_string(residual) + " exceeds 1e-10");
  }
  QTable out = q;
  for (int i = 0; i < n; ++i) out.values[i] += x[i];
  return out;
}

MonteCarloResult MultistepOperator::monte_carlo(const QTable& q,
                                                int n_samples, int horizon,
                                                std::uint64_t seed) const {
  if (n_samples < 2) {
    throw std::invalid_argument("monte_carlo: need n_samples >= 2");
  }
  if (horizon < 1) {
    throw std::invalid_argument("monte_carlo: need horizon >= 1");
  }
  const int na = mdp_.n_actions;
  // Target-policy state values, reused by every sampled TD error.
  std::vector<double> state_value(mdp_.n_states, 0.0);
  for (int s = 0; s < mdp_.n_states; ++s) {
    for (int a = 0; a < na; ++a) state_value[s] += target_(s, a) * q(s, a);
  }

  MonteCarloResult res{QTable(mdp_.n_states, na), QTable(mdp_.n_states, na)};
  for (int start = 0; start < mdp_.n_pairs(); ++start) {
    RngStream rng(seed, "mc:" + std::to_string(start));
    double mean = 0.0, m2 = 0.0;
    for (int i = 0; i < n_samples; ++i) {
      int s = start / na, a = start % na;
      TraceSummary summary;
      double discount_pow = 1.0;
      double total = 0.0;
      for (int t = 0; t <= horizon; ++t) {
        // Sample the next state, then score the TD error for this step.
        const auto& succ = successors_[s * na + a];
        int s2 = succ.front().first;
        if (succ.size() > 1) {
          const double u = rng.next_double();
          double cdf = 0.0;
          for (const auto& [cand, pr] : succ) {
            cdf += pr;
            s2 = cand;
            if (u < cdf) break;
          }
        }
        const double delta = mdp_.r(s, a) +
                             mdp_.discount * state_value[s2] - q(s, a);
        total += discount_pow * summary_beta(strategy_, summary) * delta;
        if (t == horizon) break;
        // Sample the next behavior action and advance the summary.
        const auto& acts = behavior_actions_[s2];
        int a2 = acts.front().first;
        double mu = acts.front().second;
        if (acts.size() > 1) {
          const double u = rng.next_double();
          double cdf = 0.0;
          for (const auto& [cand, pr] : acts) {
            cdf += pr;
            a2 = cand;
            mu = pr;
            if (u < cdf) break;
          }
        }
        summary =
            step_summary(strategy_, summary, {s2, a2}, target_, behavior_)
                .first;
        discount_pow *= mdp_.discount;
        s = s2;
        a = a2;
      }
      // Welford update keeps the variance accumulation stable.
      const double d1 = total - mean;
      mean += d1 / (i + 1);
      m2 += d1 * (total - mean);
    }
    res.estimate.values[start] = q.values[start] + mean;
    res.std_error.values[start] =
        std::sqrt(m2 / (static_cast<double>(n_samples) - 1.0) / n_samples);
  }
  return res;
}

Eigen::MatrixXd MultistepOperator::effective_linear_map(
    double tol, long long budget) const {
  const int n = mdp_.n_pairs();
  const double probe_tol = tol / n;
  const QTable zero(mdp_.n_states, mdp_.n_actions, 0.0);
  const Eigen::VectorXd base = to_vector(enumerate(zero, probe_tol, budget).mq);

  Eigen::MatrixXd map(n, n);
  for (int j = 0; j < n; ++j) {
    QTable probe = zero;
    probe.values[j] = 1.0;
    map.col(j) = to_vector(enumerate(probe, probe_tol, budget).mq) - base;
  }

  // The backup is affine in Q, so the probed map must reproduce it on an
  // independent random Q around the evaluation fixed point.
  const QTable q_pi = exact_q_pi(mdp_, target_);
  RngStream rng(0x5eedc0de, "effective_map_check");
  QTable q(mdp_.n_states, mdp_.n_actions);
  for (double& v : q.values) v = rng.next_in(-1.0, 1.0);
  const Eigen::VectorXd lhs =
      to_vector(enumerate(q, tol, budget).mq) - to_vector(q_pi);
  const Eigen::VectorXd rhs = map * (to_vector(q) - to_vector(q_pi));
  const double err = (lhs - rhs).lpNorm<Eigen::Infinity>();
  if (err > 10.0 * tol) {
    throw std::runtime_error(
        "effective_linear_map: affine reconstruction check failed (" +
        std::to_string(err) + " > " + std::to_string(10.0 * tol) + ")");
  }
  return map;
}

ContractionReport MultistepOperator::contraction_report(
    double norm_tol, const QTable& q, long long budget) const {
  ContractionReport report;
  report.gamma = mdp_.discount;

  const QTable q_pi = exact_q_pi(mdp_, target_);
  report.norm_before = sup_norm_diff(q, q_pi);
  report.norm_after =
      sup_norm_diff(enumerate(q, norm_tol, budget).mq, q_pi);
  report.effective_map_norm = effective_linear_map(norm_tol, budget)
                                  .cwiseAbs()
                                  .rowwise()
                                  .sum()
                                  .maxCoeff();
  if (strategy_.factorable()) {
    const int n = mdp_.n_pairs();
    const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd c_matrix =
        (identity - mdp_.discount * trace_weighted_matrix())
            .partialPivLu()
            .solve(identity);
    const Eigen::MatrixXd p_pi = pair_transition_matrix(mdp_, target_);
    report.lemma2_norm =
        (identity - c_matrix * (identity - mdp_.discount * p_pi))
            .cwiseAbs()
            .rowwise()
            .sum()
            .maxCoeff();
  }

  // Spot-check the convergence hypothesis on sampled behavior rollouts.
  report.admissible_spot_check = true;
  RngStream rng(0xad1551b1e, "admissibility_spot_check");
  for (int trial = 0; trial < 200 && report.admissible_spot_check; ++trial) {
    const int start = rng.next_int(mdp_.n_pairs());
    History history{{start / mdp_.n_actions, start % mdp_.n_actions}};
    const int length = 1 + rng.next_int(8);
    while (static_cast<int>(history.size()) < length) {
      const auto& succ = successors_[history.back().state * mdp_.n_actions +
                                     history.back().action];
      double u = rng.next_double();
      int s2 = succ.front().first;
      double cdf = 0.0;
      for (const auto& [cand, pr] : succ) {
        cdf += pr;
        s2 = cand;
        if (u < cdf) break;
      }
      const auto& acts = behavior_actions_[s2];
      u = rng.next_double();
      int a2 = acts.front().first;
      cdf = 0.0;
      for (const auto& [cand, pr] : acts) {
        cdf += pr;
        a2 = cand;
        if (u < cdf) break;
      }
      history.push_back({s2, a2});
    }
    if (!is_admissible(strategy_, history, target_, behavior_).ok) {
      report.admissible_spot_check = false;
    }
  }
  return report;
}

double MultistepOperator::difference_series_residual(const QTable& q,
                                                     int t_max) const {
  if (t_max < 0) {
    throw std::invalid_argument("difference_series_residual: t_max >= 0");
  }
  const QTable q_pi = exact_q_pi(mdp_, target_);
  const Eigen::VectorXd x = to_vector(q) - to_vector(q_pi);
  const Eigen::VectorXd lhs = to_vector(closed_form(q)) - to_vector(q_pi);

  const Eigen::MatrixXd p_cmu = trace_weighted_matrix();
  const Eigen::MatrixXd p_pi = pair_transition_matrix(mdp_, target_);
  Eigen::VectorXd series = Eigen::VectorXd::Zero(x.size());
  Eigen::VectorXd forward = p_pi * x;   // P_cmu^{t-1} P_pi x
  Eigen::VectorXd powers = p_cmu * x;   // P_cmu^t x
  double gamma_pow = mdp_.discount;
  for (int t = 1; t <= t_max; ++t) {
    series += gamma_pow * (forward - powers);
    gamma_pow *= mdp_.discount;
    if (t < t_max) {
      forward = p_cmu * forward;
      powers = p_cmu * powers;
    }
  }
  return (lhs - series).lpNorm<Eigen::Infinity>();
}

}  // namespace tracelab
