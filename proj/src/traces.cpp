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

#include "tracelab/traces.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>

namespace tracelab {

namespace {

constexpr double kAdmissibilityTol = 1e-12;

double ratio_at(const History& history, std::size_t k,
                const PolicyTable& target, const PolicyTable& behavior) {
  const auto [s, a] = history[k];
  const double mu = behavior(s, a);
  if (mu <= 0.0) {
    throw std::domain_error(
        "beta: behavior probability is zero at history index " +
        std::to_string(k) + " (state=" + std::to_string(s) +
        ", action=" + std::to_string(a) + ")");
  }
  return target(s, a) / mu;
}

double composite_lambda(const TraceStrategy& st, const StateAction& pair,
                        int n_actions) {
  if (st.state_lambda.empty()) return st.lambda;
  return st.state_lambda[static_cast<std::size_t>(pair.state) * n_actions +
                         pair.action];
}

double composite_gamma(const TraceStrategy& st, const StateAction& pair,
                       int n_actions) {
  if (st.state_gamma.empty()) return st.gamma_mult;
  return st.state_gamma[static_cast<std::size_t>(pair.state) * n_actions +
                        pair.action];
}

void check_unit_interval(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw std::invalid_argument(std::string("trace strategy: ") + name +
                                " must lie in [0, 1]");
  }
}

}  // namespace

TraceStrategy TraceStrategy::importance_sampling() {
  return TraceStrategy{TraceKind::kImportanceSampling};
}
TraceStrategy TraceStrategy::truncated_is(double d) {
  TraceStrategy st{TraceKind::kTruncatedIs};
  st.clip = d;
  return st;
}
TraceStrategy TraceStrategy::tree_backup(double lambda) {
  TraceStrategy st{TraceKind::kTreeBackup};
  st.lambda = lambda;
  return st;
}
TraceStrategy TraceStrategy::retrace(double lambda) {
  TraceStrategy st{TraceKind::kRetrace};
  st.lambda = lambda;
  return st;
}
TraceStrategy TraceStrategy::nonmarkov_retrace(double lambda) {
  TraceStrategy st{TraceKind::kNonMarkovRetrace};
  st.lambda = lambda;
  return st;
}
TraceStrategy TraceStrategy::qlambda_opc(double lambda) {
  TraceStrategy st{TraceKind::kQLambdaOpc};
  st.lambda = lambda;
  return st;
}
TraceStrategy TraceStrategy::composite_glr(double lambda, double gamma_mult) {
  TraceStrategy st{TraceKind::kCompositeGlr};
  st.lambda = lambda;
  st.gamma_mult = gamma_mult;
  return st;
}
TraceStrategy TraceStrategy::composite_glr(std::vector<double> state_lambda,
                                           std::vector<double> state_gamma) {
  TraceStrategy st{TraceKind::kCompositeGlr};
  st.state_lambda = std::move(state_lambda);
  st.state_gamma = std::move(state_gamma);
  return st;
}

void TraceStrategy::validate(int n_pairs) const {
  switch (kind) {
    case TraceKind::kImportanceSampling:
      break;
    case TraceKind::kTruncatedIs:
      if (!(clip >= 0.0)) {
        throw std::invalid_argument("trace strategy: clip d must be >= 0");
      }
      break;
    case TraceKind::kTreeBackup:
    case TraceKind::kRetrace:
    case TraceKind::kNonMarkovRetrace:
    case TraceKind::kQLambdaOpc:
      check_unit_interval(lambda, "lambda");
      break;
    case TraceKind::kCompositeGlr:
      check_unit_interval(lambda, "lambda");
      check_unit_interval(gamma_mult, "gamma");
      if (state_lambda.size() != state_gamma.size()) {
        throw std::invalid_argument(
            "trace strategy: composite multiplier tables differ in size");
      }
      if (n_pairs > 0 && !state_lambda.empty() &&
          state_lambda.size() != static_cast<std::size_t>(n_pairs)) {
        throw std::invalid_argument(
            "trace strategy: composite tables must have one entry per "
            "(state, action) pair");
      }
      for (double v : state_lambda) check_unit_interval(v, "state_lambda");
      for (double v : state_gamma) check_unit_interval(v, "state_gamma");
      break;
  }
}

std::string to_string(TraceKind kind) {
  switch (kind) {
    case TraceKind::kImportanceSampling: return "is";
    case TraceKind::kTruncatedIs: return "truncated_is";
    case TraceKind::kTreeBackup: return "tree_backup";
    case TraceKind::kRetrace: return "retrace";
    case TraceKind::kNonMarkovRetrace: return "nonmarkov_retrace";
    case TraceKind::kQLambdaOpc: return "qlambda_opc";
    case TraceKind::kCompositeGlr: return "composite_glr";
  }
  return "?";
}

std::string to_string(const TraceStrategy& st) {
  switch (st.kind) {
    case TraceKind::kImportanceSampling:
      return "is";
    case TraceKind::kTruncatedIs:
      return "truncated_is:d=" + std::to_string(st.clip);
    case TraceKind::kCompositeGlr:
      return "composite_glr:lambda=" + std::to_string(st.lambda) +
             ",gamma=" + std::to_string(st.gamma_mult);
    default:
      return to_string(st.kind) + ":lambda=" + std::to_string(st.lambda);
  }
}

TraceStrategy parse_strategy(const std::string& spec) {
  const std::size_t colon = spec.find(':');
  const std::string kind_tok = spec.substr(0, colon);
  std::string params =
      colon == std::string::npos ? "" : spec.substr(colon + 1);

  TraceStrategy st;
  if (kind_tok == "is") {
    st.kind = TraceKind::kImportanceSampling;
  } else if (kind_tok == "truncated_is") {
    st.kind = TraceKind::kTruncatedIs;
  } else if (kind_tok == "tree_backup") {
    st.kind = TraceKind::kTreeBackup;
  } else if (kind_tok == "retrace") {
    st.kind = TraceKind::kRetrace;
  } else if (kind_tok == "nonmarkov_retrace") {
    st.kind = TraceKind::kNonMarkovRetrace;
  } else if (kind_tok == "qlambda_opc") {
    st.kind = TraceKind::kQLambdaOpc;
  } else if (kind_tok == "composite_glr") {
    st.kind = TraceKind::kCompositeGlr;
  } else {
    throw std::invalid_argument("strategy spec: unknown kind '" + kind_tok +
                                "'");
  }

  while (!params.empty()) {
    const std::size_t comma = params.find(',');
    const std::string item = params.substr(0, comma);
    params = comma == std::string::npos ? "" : params.substr(comma + 1);
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("strategy spec: malformed parameter '" +
                                  item + "' (expected name=value)");
    }
    const std::string name = item.substr(0, eq);
    const std::string value_tok = item.substr(eq + 1);
    char* end = nullptr;
    const double value = std::strtod(value_tok.c_str(), &end);
    if (value_tok.empty() || end != value_tok.c_str() + value_tok.size()) {
      throw std::invalid_argument("strategy spec: bad numeric value '" +
                                  value_tok + "' for parameter '" + name +
                                  "'");
    }
    if (name == "lambda") {
      st.lambda = value;
    } else if (name == "d" && st.kind == TraceKind::kTruncatedIs) {
      st.clip = value;
    } else if (name == "gamma" && st.kind == TraceKind::kCompositeGlr) {
      st.gamma_mult = value;
    } else {
      throw std::invalid_argument("strategy spec: unknown parameter '" + name +
                                  "' for kind '" + kind_tok + "'");
    }
  }
  st.validate();
  return st;
}

double beta(const TraceStrategy& st, const History& history,
            const PolicyTable& target, const PolicyTable& behavior) {
  if (history.empty()) {
    throw std::invalid_argument("beta: history must be non-empty");
  }
  const std::size_t t = history.size() - 1;
  if (t == 0) return 1.0;

  switch (st.kind) {
    case TraceKind::kImportanceSampling: {
      double prod = 1.0;
      for (std::size_t k = 1; k <= t; ++k) {
        prod *= ratio_at(history, k, target, behavior);
      }
      return prod;
    }
    case TraceKind::kTruncatedIs: {
      double prod = 1.0;
      for (std::size_t k = 1; k <= t; ++k) {
        prod *= ratio_at(history, k, target, behavior);
      }
      return std::min(st.clip, prod);
    }
    case TraceKind::kTreeBackup: {
      double prod = 1.0;
      for (std::size_t k = 1; k <= t; ++k) {
        prod *= st.lambda * target(history[k].state, history[k].action);
      }
      return prod;
    }
    case TraceKind::kRetrace: {
      double prod = 1.0;
      for (std::size_t k = 1; k <= t; ++k) {
        prod *= st.lambda *
                std::min(1.0, ratio_at(history, k, target, behavior));
      }
      return prod;
    }
    case TraceKind::kNonMarkovRetrace: {
      double b = 1.0;
      for (std::size_t k = 1; k <= t; ++k) {
        b = st.lambda *
            std::min(1.0, b * ratio_at(history, k, target, behavior));
      }
      return b;
    }
    case TraceKind::kQLambdaOpc:
      return std::pow(st.lambda, static_cast<double>(t));
    case TraceKind::kCompositeGlr: {
      double prod = 1.0;
      for (std::size_t k = 1; k <= t; ++k) {
        prod *= composite_gamma(st, history[k], target.n_actions) *
                composite_lambda(st, history[k], target.n_actions) *
                ratio_at(history, k, target, behavior);
      }
      return prod;
    }
  }
  throw std::logic_error("beta: unhandled strategy kind");
}

TraceSummary init_summary(const TraceStrategy&) { return TraceSummary{}; }

std::pair<TraceSummary, double> step_summary(const TraceStrategy& st,
                                             const TraceSummary& summary,
                                             const StateAction& pair,
                                             const PolicyTable& target,
                                             const PolicyTable& behavior) {
  auto ratio = [&]() {
    const double mu = behavior(pair.state, pair.action);
    if (mu <= 0.0) {
      throw std::domain_error(
          "step_summary: behavior probability is zero at (state=" +
          std::to_string(pair.state) + ", action=" +
          std::to_string(pair.action) + ")");
    }
    return target(pair.state, pair.action) / mu;
  };

  TraceSummary next = summary;
  next.steps = summary.steps + 1;
  switch (st.kind) {
    case TraceKind::kImportanceSampling:
    case TraceKind::kTruncatedIs:
      next.value = summary.value * ratio();
      break;
    case TraceKind::kTreeBackup:
      next.value =
          summary.value * (st.lambda * target(pair.state, pair.action));
      break;
    case TraceKind::kRetrace:
      next.value = summary.value * (st.lambda * std::min(1.0, ratio()));
      break;
    case TraceKind::kNonMarkovRetrace:
      next.value = st.lambda * std::min(1.0, summary.value * ratio());
      break;
    case TraceKind::kQLambdaOpc:
      next.value = summary.value * st.lambda;
      break;
    case TraceKind::kCompositeGlr:
      next.value = summary.value *
                   (composite_gamma(st, pair, target.n_actions) *
                    composite_lambda(st, pair, target.n_actions) * ratio());
      break;
  }
  return {next, summary_beta(st, next)};
}

double summary_beta(const TraceStrategy& st, const TraceSummary& s) {
  if (s.steps == 0) return 1.0;
  if (st.kind == TraceKind::kTruncatedIs) return std::min(st.clip, s.value);
  return s.value;
}

bool summary_is_dead(const TraceStrategy& st, const TraceSummary& s) {
  // The running value is multiplicative (or clip-recursive) for every kind,
  // so zero is absorbing. Truncated IS is additionally dead when the clip
  // itself is zero.
  if (st.kind == TraceKind::kTruncatedIs && st.clip == 0.0) return true;
  return s.value == 0.0;
}

AdmissibilityResult is_admissible(const TraceStrategy& st,
                                  const History& history,
                                  const PolicyTable& target,
                                  const PolicyTable& behavior) {
  AdmissibilityResult res;
  res.beta = beta(st, history, target, behavior);
  res.is_bound = 1.0;
  for (std::size_t k = 1; k < history.size(); ++k) {
    res.is_bound *= ratio_at(history, k, target, behavior);
  }
  res.ok = res.beta <= res.is_bound + kAdmissibilityTol;
  return res;
}

BetaBound beta_upper_bound(const TraceStrategy& st, int t) {
  if (t < 0) throw std::invalid_argument("beta_upper_bound: t must be >= 0");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  if (t == 0) {
    return BetaBound{st.kind != TraceKind::kQLambdaOpc, 1.0};
  }
  switch (st.kind) {
    case TraceKind::kImportanceSampling:
      return {true, kInf};
    case TraceKind::kTruncatedIs:
      return {true, st.clip};
    case TraceKind::kTreeBackup:
    case TraceKind::kRetrace:
      return {true, std::pow(st.lambda, t)};
    case TraceKind::kNonMarkovRetrace:
      return {true, st.lambda};
    case TraceKind::kQLambdaOpc:
      return {false, std::pow(st.lambda, t)};
    case TraceKind::kCompositeGlr:
      return {true, kInf};
  }
  throw std::logic_error("beta_upper_bound: unhandled strategy kind");
}

double markov_trace(const TraceStrategy& st, int state, int action,
                    const PolicyTable& target, const PolicyTable& behavior) {
  auto ratio = [&]() {
    const double mu = behavior(state, action);
    if (mu <= 0.0) {
      throw std::domain_error(
          "markov_trace: behavior probability is zero at (state=" +
          std::to_string(state) + ", action=" + std::to_string(action) + ")");
    }
    return target(state, action) / mu;
  };
  switch (st.kind) {
    case TraceKind::kImportanceSampling:
      return ratio();
    case TraceKind::kTreeBackup:
      return st.lambda * target(state, action);
    case TraceKind::kRetrace:
      return st.lambda * std::min(1.0, ratio());
    case TraceKind::kQLambdaOpc:
      return st.lambda;
    case TraceKind::kCompositeGlr:
      return composite_gamma(st, {state, action}, target.n_actions) *
             composite_lambda(st, {state, action}, target.n_actions) * ratio();
    case TraceKind::kNonMarkovRetrace:
    case TraceKind::kTruncatedIs:
      throw std::invalid_argument(
          "markov_trace: strategy '" + to_string(st.kind) +
          "' does not factor into per-decision traces");
  }
  throw std::logic_error("markov_trace: unhandled strategy kind");
}

}  // namespace tracelab
