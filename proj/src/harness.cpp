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

#include "tracelab/harness.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "tracelab/control.hpp"
#include "tracelab/learner.hpp"
#include "tracelab/mdp_io.hpp"
#include "tracelab/multistep.hpp"
#include "tracelab/rng.hpp"
#include "tracelab/traces.hpp"

namespace tracelab {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// CSV rows are accumulated in memory and written through a temp file plus
// rename, so a partial run never leaves a truncated output behind.
void write_csv_atomic(const std::string& path,
                      const std::vector<std::string>& lines) {
  const std::filesystem::path out(path);
  const std::filesystem::path tmp(path + ".tmp");
  {
    std::ofstream stream(tmp);
    if (!stream) {
      throw std::runtime_error("cannot open output file: " + tmp.string());
    }
    for (const std::string& line : lines) stream << line << "\n";
    stream.flush();
    if (!stream) {
      throw std::runtime_error("failed writing output file: " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, out);
}

int worker_count() {
  if (const char* env = std::getenv("TRACE_LAB_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

std::vector<double> split_numbers(const std::string& text, char sep,
                                  const std::string& context) {
  std::vector<double> out;
  std::stringstream stream(text);
  std::string tok;
  while (std::getline(stream, tok, sep)) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (tok.empty() || end != tok.c_str() + tok.size()) {
      throw UsageError(context + ": bad number '" + tok + "'");
    }
    out.push_back(v);
  }
  return out;
}

EpsilonSchedule resolve_epsilon_schedule(const std::string& spec) {
  if (spec == "inverse") return EpsilonSchedule::inverse();
  if (spec.rfind("exp:", 0) == 0) {
    const auto nums = split_numbers(spec.substr(4), ',', "epsilon schedule");
    if (nums.size() != 1) {
      throw UsageError("epsilon schedule: exp takes one parameter");
    }
    return EpsilonSchedule::exponential(nums[0]);
  }
  if (spec.rfind("plateau:", 0) == 0) {
    const auto nums = split_numbers(spec.substr(8), ',', "epsilon schedule");
    if (nums.size() != 2) {
      throw UsageError("epsilon schedule: plateau takes value,start");
    }
    return EpsilonSchedule::constant_then_decay(nums[0],
                                                static_cast<int>(nums[1]));
  }
  throw UsageError("epsilon schedule: unknown spec '" + spec + "'");
}

QInitMode resolve_q0_mode(const std::string& spec) {
  if (spec == "zeros") return QInitMode::kZeros;
  if (spec == "pessimistic") return QInitMode::kPessimistic;
  if (spec == "optimistic") return QInitMode::kOptimistic;
  if (spec == "random") return QInitMode::kRandom;
  throw UsageError("q0 mode: unknown spec '" + spec + "'");
}

BehaviorMode resolve_behavior_mode(const std::string& spec) {
  if (spec == "uniform") return BehaviorMode::kUniform;
  if (spec == "mirror") return BehaviorMode::kEpsilonGreedyMirror;
  if (spec == "random") return BehaviorMode::kFixedRandom;
  throw UsageError(
      "control behavior: expected uniform|mirror|random, got '" + spec + "'");
}

StepSizeSchedule resolve_step_schedule(const ExperimentSpec& spec) {
  if (spec.step_schedule == "constant") {
    return StepSizeSchedule::constant(spec.alpha0);
  }
  if (spec.step_schedule == "harmonic") {
    return StepSizeSchedule::harmonic(spec.alpha0, spec.n0);
  }
  throw UsageError("step schedule: expected constant|harmonic, got '" +
                   spec.step_schedule + "'");
}

int run_evaluate_operator(const ExperimentSpec& spec) {
  const FiniteMdp mdp = resolve_mdp(spec.mdp_spec);
  const PolicyTable target = resolve_policy(spec.target, mdp);
  const PolicyTable behavior = resolve_policy(spec.behavior, mdp);
  const TraceStrategy strategy = parse_strategy(spec.strategy);
  const MultistepOperator op(mdp, target, behavior, strategy);
  const QTable q(mdp.n_states, mdp.n_actions, 0.0);
  const OperatorResult result = op.enumerate(q, spec.tol);

  std::vector<std::string> lines{"state,action,q,mq,tail_bound,horizon"};
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      lines.push_back(std::to_string(s) + "," + std::to_string(a) + "," +
                      format_double(q(s, a)) + "," +
                      format_double(result.mq(s, a)) + "," +
                      format_double(result.tail_bound) + "," +
                      std::to_string(result.horizon));
    }
  }
  write_csv_atomic(spec.out, lines);
  return 0;
}

int run_contraction_suite(const ExperimentSpec& spec) {
  const FiniteMdp mdp = resolve_mdp(spec.mdp_spec);
  const PolicyTable target = resolve_policy(spec.target, mdp);
  const PolicyTable behavior = resolve_policy(spec.behavior, mdp);

  const std::vector<std::string> strategy_specs{
      "is",
      "truncated_is:d=1",
      "tree_backup:lambda=0.9",
      "retrace:lambda=0.9",
      "nonmarkov_retrace:lambda=0.9",
      "qlambda_opc:lambda=0.9",
      "composite_glr:lambda=0.9,gamma=0.95",
  };

  // The probe point is shared by every strategy row.
  RngStream rng(spec.seed, "contraction:q");
  QTable q(mdp.n_states, mdp.n_actions);
  for (double& v : q.values) v = rng.next_in(-1.0, 1.0);

  std::vector<std::string> rows(strategy_specs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mutex;

  auto work = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= strategy_specs.size() || failed.load()) return;
      try {
        const TraceStrategy strategy = parse_strategy(strategy_specs[i]);
        const MultistepOperator op(mdp, target, behavior, strategy);
        const ContractionReport report =
            op.contraction_report(spec.tol, q);
        std::string row = strategy_specs[i] + "," +
                          format_double(report.gamma) + "," +
                          format_double(report.norm_before) + "," +
                          format_double(report.norm_after) + "," +
                          format_double(report.effective_map_norm) + ",";
        if (report.lemma2_norm.has_value()) {
          row += format_double(*report.lemma2_norm);
        }
        row += report.admissible_spot_check ? ",1" : ",0";
        rows[i] = std::move(row);
      } catch (const std::exception& e) {
        const std::lock_guard<std::mutex> lock(failure_mutex);
        failure = std::string("strategy '") + strategy_specs[i] +
                  "': " + e.what();
        failed.store(true);
        return;
      }
    }
  };

  const int workers = std::min<int>(worker_count(),
                                    static_cast<int>(strategy_specs.size()));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();
  if (failed.load()) throw std::runtime_error(failure);

  std::vector<std::string> lines{
      "strategy,gamma,norm_before,norm_after,map_norm,lemma2_norm,admissible"};
  lines.insert(lines.end(), rows.begin(), rows.end());
  write_csv_atomic(spec.out, lines);
  return 0;
}

int run_learn(const ExperimentSpec& spec) {
  const FiniteMdp mdp = resolve_mdp(spec.mdp_spec);
  const PolicyTable target = resolve_policy(spec.target, mdp);
  const PolicyTable behavior = resolve_policy(spec.behavior, mdp);

  LearnerConfig config;
  config.strategy = parse_strategy(spec.strategy);
  config.schedule = resolve_step_schedule(spec);
  config.max_episodes = spec.episodes;
  config.max_steps_per_episode = spec.max_steps;
  config.seed = spec.seed;

  const QTable q0(mdp.n_states, mdp.n_actions, 0.0);
  const TrainResult result = train(mdp, target, behavior, config, q0);

  std::vector<std::string> lines{"episode,sup_norm_error,steps"};
  for (const CurvePoint& point : result.curve) {
    lines.push_back(std::to_string(point.episode) + "," +
                    format_double(point.sup_norm_error) + "," +
                    std::to_string(point.steps));
  }
  write_csv_atomic(spec.out, lines);
  return 0;
}

int run_control_experiment(const ExperimentSpec& spec) {
  const FiniteMdp mdp = resolve_mdp(spec.mdp_spec);

  ControlConfig config;
  config.strategy = parse_strategy(spec.strategy);
  config.epsilon_schedule = resolve_epsilon_schedule(spec.epsilon_schedule);
  config.behavior_mode = resolve_behavior_mode(spec.behavior);
  config.q0_mode = resolve_q0_mode(spec.q0);
  config.seed = spec.seed;
  config.iterations = spec.iterations;
  config.tol = spec.tol;

  const ControlTrace trace = run_control(mdp, config);

  std::vector<std::string> lines{"k,err,epsilon,bound_rhs,bound_ok"};
  for (const ControlRecord& rec : trace.records) {
    lines.push_back(std::to_string(rec.k) + "," + format_double(rec.err) +
                    "," + format_double(rec.epsilon) + "," +
                    format_double(rec.bound_rhs) + "," +
                    (rec.bound_ok ? "1" : "0"));
  }
  write_csv_atomic(spec.out, lines);
  return 0;
}

}  // namespace

FiniteMdp resolve_mdp(const std::string& spec) {
  if (spec == "chain2") return make_chain2();
  if (spec == "chain2_episodic") return make_chain2_episodic();
  if (spec.rfind("garnet:", 0) == 0) {
    const auto nums = split_numbers(spec.substr(7), ',', "garnet spec");
    if (nums.size() != 4 && nums.size() != 5) {
      throw UsageError(
          "garnet spec: expected garnet:n_states,n_actions,branching,scale"
          "[,discount]");
    }
    const double discount = nums.size() == 5 ? nums[4] : 0.5;
    try {
      return generate_random_mdp(static_cast<int>(nums[0]),
                                 static_cast<int>(nums[1]),
                                 static_cast<int>(nums[2]), nums[3],
                                 /*seed=*/1234567, discount);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("garnet spec: ") + e.what());
    }
  }
  try {
    return load_mdp_file(spec);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

PolicyTable resolve_policy(const std::string& spec, const FiniteMdp& mdp) {
  if (spec == "uniform") {
    return PolicyTable::uniform(mdp.n_states, mdp.n_actions);
  }
  if (spec.rfind("greedy", 0) == 0) {
    double epsilon = 0.0;
    if (spec.size() > 6) {
      if (spec.rfind("greedy:epsilon=", 0) != 0) {
        throw UsageError("policy spec: expected greedy[:epsilon=E], got '" +
                         spec + "'");
      }
      const auto nums =
          split_numbers(spec.substr(15), ',', "policy spec epsilon");
      if (nums.size() != 1) {
        throw UsageError("policy spec: greedy takes one epsilon");
      }
      epsilon = nums[0];
    }
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
      throw UsageError("policy spec: epsilon must lie in [0, 1]");
    }
    const QTable q_star = exact_q_star(mdp, 1e-9);
    PolicyTable pi(mdp.n_states, mdp.n_actions, epsilon / mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s) {
      int best = 0;
      for (int a = 1; a < mdp.n_actions; ++a) {
        if (q_star(s, a) > q_star(s, best)) best = a;
      }
      pi(s, best) += 1.0 - epsilon;
    }
    return pi;
  }
  if (spec.rfind("random:seed=", 0) == 0) {
    const auto nums = split_numbers(spec.substr(12), ',', "policy spec seed");
    if (nums.size() != 1) throw UsageError("policy spec: random takes a seed");
    return PolicyTable::random_full_support(
        mdp.n_states, mdp.n_actions,
        derive_stream_seed(static_cast<std::uint64_t>(nums[0]), "policy"));
  }
  if (spec.rfind("table:", 0) == 0) {
    std::stringstream stream(spec.substr(6));
    std::string row_text;
    PolicyTable pi(mdp.n_states, mdp.n_actions, 0.0);
    int s = 0;
    while (std::getline(stream, row_text, ';')) {
      if (s >= mdp.n_states) {
        throw UsageError("policy table: more rows than states");
      }
      const auto row = split_numbers(row_text, ',', "policy table row");
      if (static_cast<int>(row.size()) != mdp.n_actions) {
        throw UsageError("policy table: row " + std::to_string(s) + " has " +
                         std::to_string(row.size()) + " entries, expected " +
                         std::to_string(mdp.n_actions));
      }
      for (int a = 0; a < mdp.n_actions; ++a) pi(s, a) = row[a];
      ++s;
    }
    if (s != mdp.n_states) {
      throw UsageError("policy table: expected " +
                       std::to_string(mdp.n_states) + " rows, got " +
                       std::to_string(s));
    }
    try {
      pi.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return pi;
  }
  throw UsageError("policy spec: unknown form '" + spec + "'");
}

ExperimentSpec parse_args(const std::vector<std::string>& args) {
  ExperimentSpec spec;
  std::string experiment;

  CLI::App app{"tracelab experiment runner"};
  app.add_option("--experiment", experiment,
                 "evaluate_operator | contraction_suite | learn | control")
      ->required();
  app.add_option("--mdp", spec.mdp_spec,
                 "chain2 | chain2_episodic | garnet:ns,na,b,scale[,gamma] | "
                 "fixture file path");
  app.add_option("--strategy", spec.strategy, "trace strategy spec");
  app.add_option("--target", spec.target, "target policy spec");
  app.add_option("--behavior", spec.behavior,
                 "behavior policy spec (control: uniform|mirror|random)");
  app.add_option("--tol", spec.tol, "numeric tolerance");
  app.add_option("--seed", spec.seed, "root seed for all randomness");
  app.add_option("--out", spec.out, "output CSV path");
  app.add_option("--iterations", spec.iterations, "control iterations");
  app.add_option("--episodes", spec.episodes, "learner episodes");
  app.add_option("--max-steps", spec.max_steps, "learner per-episode cap");
  app.add_option("--step-schedule", spec.step_schedule, "constant | harmonic");
  app.add_option("--alpha0", spec.alpha0, "learner base step size");
  app.add_option("--n0", spec.n0, "harmonic schedule scale");
  app.add_option("--q0", spec.q0,
                 "control init: zeros|pessimistic|optimistic|random");
  app.add_option("--epsilon-schedule", spec.epsilon_schedule,
                 "control exploration: inverse | exp:R | plateau:C,K");

  std::vector<const char*> argv{"trace_lab"};
  for (const std::string& arg : args) argv.push_back(arg.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  if (experiment == "evaluate_operator") {
    spec.kind = ExperimentKind::kEvaluateOperator;
  } else if (experiment == "contraction_suite") {
    spec.kind = ExperimentKind::kContractionSuite;
  } else if (experiment == "learn") {
    spec.kind = ExperimentKind::kLearn;
  } else if (experiment == "control") {
    spec.kind = ExperimentKind::kControl;
  } else {
    throw UsageError("unknown experiment '" + experiment + "'");
  }
  if (spec.out.empty()) spec.out = experiment + ".csv";

  // Fail fast on malformed sub-specs so usage errors surface before any
  // computation starts.
  try {
    parse_strategy(spec.strategy);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (spec.kind == ExperimentKind::kControl) {
    resolve_behavior_mode(spec.behavior);
    resolve_q0_mode(spec.q0);
    resolve_epsilon_schedule(spec.epsilon_schedule);
  }
  return spec;
}

int run(const ExperimentSpec& spec) {
  switch (spec.kind) {
    case ExperimentKind::kEvaluateOperator:
      return run_evaluate_operator(spec);
    case ExperimentKind::kContractionSuite:
      return run_contraction_suite(spec);
    case ExperimentKind::kLearn:
      return run_learn(spec);
    case ExperimentKind::kControl:
      return run_control_experiment(spec);
  }
  throw std::logic_error("run: unhandled experiment kind");
}

int harness_main(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  if (!args.empty() && (args[0] == "-h" || args[0] == "--help")) {
    std::cout
        << "usage: trace_lab --experiment "
           "<evaluate_operator|contraction_suite|learn|control> [options]\n"
           "options: --mdp --strategy --target --behavior --tol --seed --out\n"
           "         --iterations --episodes --max-steps --step-schedule\n"
           "         --alpha0 --n0 --q0 --epsilon-schedule\n";
    return 0;
  }
  try {
    return run(parse_args(args));
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace tracelab
