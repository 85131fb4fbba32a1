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

#include "tracelab/learner.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tracelab {

StepSizeSchedule StepSizeSchedule::constant(double alpha) {
  return {Kind::kConstant, alpha, 1.0};
}

StepSizeSchedule StepSizeSchedule::harmonic(double alpha0, double n0) {
  return {Kind::kHarmonic, alpha0, n0};
}

double StepSizeSchedule::at(int episode) const {
  switch (kind) {
    case Kind::kConstant: return alpha0;
    case Kind::kHarmonic: return alpha0 / (1.0 + episode / n0);
  }
  return alpha0;
}

namespace {

int sample_start_state(const FiniteMdp& mdp, RngStream& rng) {
  std::vector<int> starts;
  for (int s = 0; s < mdp.n_states; ++s) {
    if (!mdp.is_terminal(s)) starts.push_back(s);
  }
  if (starts.empty()) {
    throw std::invalid_argument("run_episode: every state is terminal");
  }
  return starts[rng.next_int(static_cast<int>(starts.size()))];
}

int sample_action(const FiniteMdp& mdp, const PolicyTable& behavior, int s,
                  RngStream& rng) {
  const double u = rng.next_double();
  double cdf = 0.0;
  int action = mdp.n_actions - 1;
  for (int a = 0; a < mdp.n_actions; ++a) {
    cdf += behavior(s, a);
    if (u < cdf) {
      action = a;
      break;
    }
  }
  return action;
}

int sample_next_state(const FiniteMdp& mdp, int s, int a, RngStream& rng) {
  const double u = rng.next_double();
  double cdf = 0.0;
  int next = mdp.n_states - 1;
  for (int s2 = 0; s2 < mdp.n_states; ++s2) {
    cdf += mdp.p(s, a, s2);
    if (u < cdf) {
      next = s2;
      break;
    }
  }
  return next;
}

}  // namespace

EpisodeResult run_episode(const FiniteMdp& mdp, const PolicyTable& target,
                          const PolicyTable& behavior,
                          const TraceStrategy& strategy, QTable& q,
                          double alpha, RngStream& rng, int max_steps,
                          bool offline, std::vector<UpdateRecord>* log) {
  if (max_steps < 1) {
    throw std::invalid_argument("run_episode: max_steps must be >= 1");
  }
  const double gamma = mdp.discount;
  std::vector<StateAction> visits;
  std::vector<TraceSummary> summaries;  // suffix summary per visit index

  // Offline mode scores TD errors against the episode-start table and
  // applies the accumulated updates once at the end.
  const QTable frozen = q;
  const QTable& scored = offline ? frozen : q;
  QTable accumulated = offline ? QTable(q.n_states, q.n_actions, 0.0)
                               : QTable();

  EpisodeResult result;
  int s = sample_start_state(mdp, rng);
  for (int t = 0; t < max_steps; ++t) {
    const int a = sample_action(mdp, behavior, s, rng);
    // Every stored visit extends its suffix history by (s_t, a_t); the new
    // visit starts a fresh stream with coefficient 1.
    for (auto& summary : summaries) {
      summary = step_summary(strategy, summary, {s, a}, target, behavior).first;
    }
    visits.push_back({s, a});
    summaries.push_back(TraceSummary{});

    const double reward = mdp.r(s, a);
    const int s2 = sample_next_state(mdp, s, a, rng);
    const double delta =
        td_error(mdp, Transition{s, a, reward, s2}, target, scored);
    if (!std::isfinite(delta)) {
      throw std::runtime_error("run_episode: non-finite TD error at step " +
                               std::to_string(t));
    }

    double gamma_pow = 1.0;
    for (int k = t; k >= 0; --k) {
      const double weight = gamma_pow * summary_beta(strategy, summaries[k]);
      const double increment = alpha * weight * delta;
      if (offline) {
        accumulated(visits[k].state, visits[k].action) += increment;
      } else {
        q(visits[k].state, visits[k].action) += increment;
      }
      if (log != nullptr) {
        log->push_back(
            {t, k, visits[k].state, visits[k].action, weight, delta});
      }
      gamma_pow *= gamma;
    }

    result.steps = t + 1;
    if (mdp.is_terminal(s2)) break;
    if (t + 1 == max_steps) {
      result.truncated = true;
      break;
    }
    s = s2;
  }
  if (offline) {
    for (std::size_t i = 0; i < q.values.size(); ++i) {
      q.values[i] += accumulated.values[i];
    }
  }
  return result;
}

TrainResult train(const FiniteMdp& mdp, const PolicyTable& target,
                  const PolicyTable& behavior, const LearnerConfig& config,
                  const QTable& q0) {
  if (config.max_episodes < 0) {
    throw std::invalid_argument("train: max_episodes must be >= 0");
  }
  const QTable q_pi = exact_q_pi(mdp, target);
  TrainResult result;
  result.q = q0;
  result.curve.reserve(config.max_episodes);
  RngStream rng(config.seed, "learner");
  for (int episode = 0; episode < config.max_episodes; ++episode) {
    const double alpha = config.schedule.at(episode);
    const EpisodeResult ep = run_episode(
        mdp, target, behavior, config.strategy, result.q, alpha, rng,
        config.max_steps_per_episode, config.offline_accumulation);
    if (ep.truncated) ++result.truncated_episodes;
    result.curve.push_back(
        {episode, sup_norm_diff(result.q, q_pi), ep.steps});
  }
  return result;
}

}  // namespace tracelab
