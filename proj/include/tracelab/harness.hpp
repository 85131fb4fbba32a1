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

#ifndef TRACELAB_HARNESS_HPP_
#define TRACELAB_HARNESS_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tracelab/mdp.hpp"

namespace tracelab {

/// Command-line or fixture errors; the CLI maps these to exit code 2.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class ExperimentKind {
  kEvaluateOperator,
  kContractionSuite,
  kLearn,
  kControl,
};

/// Everything one experiment run needs, parsed from the command line.
struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::kEvaluateOperator;
  std::string mdp_spec = "chain2";   // builtin name, garnet:..., or file path
  std::string strategy = "retrace:lambda=0.9";
  std::string target = "greedy:epsilon=0.2";
  std::string behavior = "uniform";
  double tol = 1e-5;
  std::uint64_t seed = 1;
  std::string out;                    // defaults to <experiment>.csv
  int iterations = 60;               // control iterations
  int episodes = 10000;              // learner episodes
  int max_steps = 500;               // learner per-episode cap
  std::string step_schedule = "harmonic";  // constant | harmonic
  double alpha0 = 0.4;
  double n0 = 3000.0;
  std::string q0 = "zeros";          // zeros|pessimistic|optimistic|random
  std::string epsilon_schedule = "inverse";  // inverse|exp:R|plateau:C,K
};

// Parses argv (without the program name). Throws UsageError on malformed
// input; the message names the offending flag or token.
ExperimentSpec parse_args(const std::vector<std::string>& args);

// Resolves the MDP source: `chain2`, `chain2_episodic`,
// `garnet:ns,na,branching,scale[,gamma]`, or a fixture file path.
FiniteMdp resolve_mdp(const std::string& spec);

// Policy specs: `uniform`, `greedy:epsilon=E` (mixture around the greedy
// policy of the MDP's optimal Q), `random:seed=S`, or
// `table:p,p,...;p,p,...` with one row per state.
PolicyTable resolve_policy(const std::string& spec, const FiniteMdp& mdp);

// Executes the experiment and writes its CSV atomically (temp file +
// rename). Returns 0 on success; throws on numeric or resource failure.
int run(const ExperimentSpec& spec);

// Full CLI entry point: parse, run, map failures to exit codes
// (0 success, 1 numeric/resource failure, 2 usage error).
int harness_main(int argc, const char* const* argv);

}  // namespace tracelab

#endif  // TRACELAB_HARNESS_HPP_
