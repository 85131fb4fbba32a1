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

#ifndef TRACELAB_LEARNER_HPP_
#define TRACELAB_LEARNER_HPP_

#include <cstdint>
#include <vector>

#include "tracelab/mdp.hpp"
#include "tracelab/rng.hpp"
#include "tracelab/traces.hpp"

namespace tracelab {

/// Step-size schedule over episodes: constant alpha, or harmonic decay
/// alpha_n = alpha0 / (1 + n / n0) with n the episode index.
struct StepSizeSchedule {
  enum class Kind { kConstant, kHarmonic };
  Kind kind = Kind::kConstant;
  double alpha0 = 0.1;
  double n0 = 1000.0;

  static StepSizeSchedule constant(double alpha);
  static StepSizeSchedule harmonic(double alpha0, double n0);
  double at(int episode) const;
};

struct LearnerConfig {
  TraceStrategy strategy;
  StepSizeSchedule schedule;
  int max_episodes = 1000;
  int max_steps_per_episode = 500;
  std::uint64_t seed = 0;
  // When set, per-step updates are accumulated against a frozen Q-table and
  // applied once at episode end instead of immediately in place.
  bool offline_accumulation = false;
};

/// One applied eligibility update: at step t, the visit made at step k
/// received weight * alpha * delta.
struct UpdateRecord {
  int t = 0;
  int k = 0;
  int state = 0;
  int action = 0;
  double weight = 0.0;  // gamma^{t-k} * coefficient of the suffix history
  double delta = 0.0;
};

struct EpisodeResult {
  int steps = 0;
  bool truncated = false;  // hit the step cap instead of a terminal state
};

// Runs one behavior-policy episode from a uniformly drawn non-terminal start
// state, updating q in place. Each visit owns its own running suffix
// summary, so repeated visits to a pair accrue independent eligibility
// streams. Episodes end on entering a terminal state, or at max_steps with
// truncation flagged.
EpisodeResult run_episode(const FiniteMdp& mdp, const PolicyTable& target,
                          const PolicyTable& behavior,
                          const TraceStrategy& strategy, QTable& q,
                          double alpha, RngStream& rng,
                          int max_steps = 500, bool offline = false,
                          std::vector<UpdateRecord>* log = nullptr);

struct CurvePoint {
  int episode = 0;
  double sup_norm_error = 0.0;
  int steps = 0;
};

struct TrainResult {
  QTable q;
  std::vector<CurvePoint> curve;
  int truncated_episodes = 0;
};

// Runs config.max_episodes episodes, logging the sup-norm error against the
// exact evaluation Q after each. Deterministic given config.seed.
TrainResult train(const FiniteMdp& mdp, const PolicyTable& target,
                  const PolicyTable& behavior, const LearnerConfig& config,
                  const QTable& q0);

}  // namespace tracelab

#endif  // TRACELAB_LEARNER_HPP_
