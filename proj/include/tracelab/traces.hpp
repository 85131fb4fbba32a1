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

#ifndef TRACELAB_TRACES_HPP_
#define TRACELAB_TRACES_HPP_

#include <string>
#include <utility>
#include <vector>

#include "tracelab/mdp.hpp"

namespace tracelab {

/// One (state, action) visit.
struct StateAction {
  int state = 0;
  int action = 0;
  bool operator==(const StateAction&) const = default;
};

/// Ordered visit sequence; element 0 is the start pair, which contributes no
/// correction factor.
using History = std::vector<StateAction>;

enum class TraceKind {
  kImportanceSampling,  // full ratio product
  kTruncatedIs,         // ratio product clipped at a constant
  kTreeBackup,          // product of lambda * pi
  kRetrace,             // product of lambda * min(1, ratio)
  kNonMarkovRetrace,    // recursive clip against the running coefficient
  kQLambdaOpc,          // plain lambda^t decay, no off-policy correction
  kCompositeGlr,        // per-pair discount/lambda multipliers times ratio
};

/// Rule assigning a nonnegative coefficient to every visit history, plus the
/// parameters the rule needs. The coefficient of the empty suffix is 1 by
/// definition for every kind.
struct TraceStrategy {
  TraceKind kind = TraceKind::kImportanceSampling;
  double lambda = 1.0;      // decay in [0,1] where the rule uses one
  double clip = 1.0;        // clip constant d >= 0 (truncated IS)
  double gamma_mult = 1.0;  // constant discount multiplier (composite)
  // Optional per-(s,a) multiplier tables for the composite rule; when empty
  // the scalar lambda / gamma_mult apply uniformly.
  std::vector<double> state_lambda;
  std::vector<double> state_gamma;

  static TraceStrategy importance_sampling();
  static TraceStrategy truncated_is(double d);
  static TraceStrategy tree_backup(double lambda);
  static TraceStrategy retrace(double lambda);
  static TraceStrategy nonmarkov_retrace(double lambda);
  static TraceStrategy qlambda_opc(double lambda);
  static TraceStrategy composite_glr(double lambda, double gamma_mult);
  static TraceStrategy composite_glr(std::vector<double> state_lambda,
                                     std::vector<double> state_gamma);

  // True when the coefficient factors into per-decision traces c(s,a).
  bool factorable() const {
    return kind != TraceKind::kNonMarkovRetrace &&
           kind != TraceKind::kTruncatedIs;
  }

  // Parameter-range checks; `n_pairs` > 0 additionally checks table sizes.
  void validate(int n_pairs = 0) const;
};

std::string to_string(TraceKind kind);
std::string to_string(const TraceStrategy& strategy);

// Parses the CLI grammar `kind[:param=value,...]`, e.g. `retrace:lambda=0.9`
// or `truncated_is:d=1.5`. Errors name the offending token.
TraceStrategy parse_strategy(const std::string& spec);

/// Constant-size running state from which the coefficient of a growing
/// history can be recovered: the running coefficient itself for most rules,
/// the raw ratio product for truncated IS.
struct TraceSummary {
  double value = 1.0;
  int steps = 0;
};

// Coefficient of the full history (pairs 0..t), evaluated from scratch.
// Throws std::domain_error naming the history index when a needed behavior
// probability is zero.
double beta(const TraceStrategy& strategy, const History& history,
            const PolicyTable& target, const PolicyTable& behavior);

// Incremental protocol: fold step_summary over history pairs 1..t starting
// from init_summary to obtain exactly beta() of the growing history.
TraceSummary init_summary(const TraceStrategy& strategy);
std::pair<TraceSummary, double> step_summary(const TraceStrategy& strategy,
                                             const TraceSummary& summary,
                                             const StateAction& pair,
                                             const PolicyTable& target,
                                             const PolicyTable& behavior);

// Coefficient encoded by a summary.
double summary_beta(const TraceStrategy& strategy, const TraceSummary& s);

// True when every extension of a history with this summary has coefficient
// zero, so enumeration may drop the subtree exactly.
bool summary_is_dead(const TraceStrategy& strategy, const TraceSummary& s);

struct AdmissibilityResult {
  bool ok = false;
  double beta = 0.0;
  double is_bound = 0.0;  // full importance-sampling ratio product
};

// Checks the convergence hypothesis beta <= (ratio product) on one history,
// with a 1e-12 absolute tolerance for accumulated rounding.
AdmissibilityResult is_admissible(const TraceStrategy& strategy,
                                  const History& history,
                                  const PolicyTable& target,
                                  const PolicyTable& behavior);

/// Certified history-independent information about coefficients at step t.
struct BetaBound {
  // The coefficient never exceeds the IS ratio product (so expectation tail
  // sums telescope onto the target policy).
  bool admissible = false;
  // Numeric bound valid for every history of length t+1; may be +infinity.
  double value = 0.0;
};

BetaBound beta_upper_bound(const TraceStrategy& strategy, int t);

// Per-decision factor c(s,a) with beta == product of factors; only defined
// for factorable strategies, otherwise throws std::invalid_argument.
double markov_trace(const TraceStrategy& strategy, int state, int action,
                    const PolicyTable& target, const PolicyTable& behavior);

}  // namespace tracelab

#endif  // TRACELAB_TRACES_HPP_
