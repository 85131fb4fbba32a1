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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "tracelab/traces.hpp"
#include "tracelab/rng.hpp"
#include "test_util.hpp"

using namespace tracelab;
using namespace tracelab::test;

namespace {

std::vector<TraceStrategy> all_strategies() {
  return {
      TraceStrategy::importance_sampling(),
      TraceStrategy::truncated_is(1.0),
      TraceStrategy::tree_backup(0.9),
      TraceStrategy::retrace(0.9),
      TraceStrategy::nonmarkov_retrace(0.9),
      TraceStrategy::qlambda_opc(0.8),
      TraceStrategy::composite_glr(0.8, 0.95),
  };
}

History random_history(RngStream& rng, int ns, int na, int max_len) {
  History h;
  const int len = 1 + rng.next_int(max_len);
  for (int i = 0; i < len; ++i) {
    h.push_back({rng.next_int(ns), rng.next_int(na)});
  }
  return h;
}

double fold_beta(const TraceStrategy& st, const History& h,
                 const PolicyTable& target, const PolicyTable& behavior) {
  TraceSummary summary = init_summary(st);
  double last = summary_beta(st, summary);
  for (std::size_t k = 1; k < h.size(); ++k) {
    auto [next, b] = step_summary(st, summary, h[k], target, behavior);
    summary = next;
    last = b;
  }
  return last;
}

// Two-state policies with hand-picked ratios at (0,0) and (1,0).
PolicyTable ratio_target(double p0, double p1) {
  PolicyTable pi(2, 2);
  pi(0, 0) = p0;
  pi(0, 1) = 1.0 - p0;
  pi(1, 0) = p1;
  pi(1, 1) = 1.0 - p1;
  return pi;
}

}  // namespace

TEST_CASE("coefficient of the empty suffix is one for every strategy") {
  const PolicyTable target = chain2_target();
  const PolicyTable behavior = PolicyTable::uniform(2, 2);
  const History start{{0, 1}};
  for (const TraceStrategy& st : all_strategies()) {
    CHECK(beta(st, start, target, behavior) == 1.0);
    CHECK(summary_beta(st, init_summary(st)) == 1.0);
  }
}

TEST_CASE("single-step clipping arithmetic") {
  // ratio 2 at pair (0,0)
  const PolicyTable target = ratio_target(0.8, 0.5);
  PolicyTable behavior(2, 2, 0.0);
  behavior(0, 0) = 0.4;
  behavior(0, 1) = 0.6;
  behavior(1, 0) = 0.5;
  behavior(1, 1) = 0.5;

  const History h{{1, 1}, {0, 0}};
  CHECK(beta(TraceStrategy::retrace(1.0), h, target, behavior) == 1.0);
  CHECK(beta(TraceStrategy::importance_sampling(), h, target, behavior) ==
        doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("recursive clipping releases what per-decision clipping cuts") {
  // ratio 0.25 at (0,0), ratio 8 at (1,0)
  const PolicyTable target = ratio_target(0.125, 0.8);
  PolicyTable behavior(2, 2, 0.0);
  behavior(0, 0) = 0.5;
  behavior(0, 1) = 0.5;
  behavior(1, 0) = 0.1;
  behavior(1, 1) = 0.9;

  const History one{{0, 1}, {0, 0}};
  const History two{{0, 1}, {0, 0}, {1, 0}};
  const TraceStrategy recursive = TraceStrategy::nonmarkov_retrace(1.0);
  const TraceStrategy per_decision = TraceStrategy::retrace(1.0);

  CHECK(beta(recursive, one, target, behavior) ==
        doctest::Approx(0.25).epsilon(1e-14));
  CHECK(beta(recursive, two, target, behavior) ==
        doctest::Approx(1.0).epsilon(1e-14));
  CHECK(beta(per_decision, two, target, behavior) ==
        doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("truncated IS releases when the raw product falls below the clip") {
  // ratio 2 at (0,0), ratio 0.1 at (1,0)
  const PolicyTable target = ratio_target(0.8, 0.05);
  PolicyTable behavior(2, 2, 0.0);
  behavior(0, 0) = 0.4;
  behavior(0, 1) = 0.6;
  behavior(1, 0) = 0.5;
  behavior(1, 1) = 0.5;

  const TraceStrategy st = TraceStrategy::truncated_is(1.0);
  TraceSummary summary = init_summary(st);
  auto [s1, b1] = step_summary(st, summary, {0, 0}, target, behavior);
  CHECK(s1.value == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(b1 == doctest::Approx(1.0).epsilon(1e-14));
  auto [s2, b2] = step_summary(st, s1, {1, 0}, target, behavior);
  CHECK(s2.value == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(b2 == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("full IS coefficient equals the ratio-product oracle") {
  RngStream rng(101);
  const TraceStrategy st = TraceStrategy::importance_sampling();
  for (int trial = 0; trial < 1000; ++trial) {
    const int ns = 2 + rng.next_int(3), na = 2 + rng.next_int(2);
    const PolicyTable target =
        PolicyTable::random_full_support(ns, na, rng.next_u64());
    const PolicyTable behavior =
        PolicyTable::random_full_support(ns, na, rng.next_u64());
    const History h = random_history(rng, ns, na, 10);

    double oracle = 1.0;
    for (std::size_t k = 1; k < h.size(); ++k) {
      oracle *= target(h[k].state, h[k].action) /
                behavior(h[k].state, h[k].action);
    }
    CHECK(std::abs(beta(st, h, target, behavior) - oracle) <= 1e-12);
  }
}

TEST_CASE("incremental summaries reproduce the full-history coefficient") {
  SUBCASE("sampled histories") {
    RngStream rng(202);
    for (int trial = 0; trial < 10000; ++trial) {
      const int ns = 2 + rng.next_int(3), na = 2;
      const PolicyTable target =
          PolicyTable::random_full_support(ns, na, rng.next_u64());
      const PolicyTable behavior =
          PolicyTable::random_full_support(ns, na, rng.next_u64());
      const History h = random_history(rng, ns, na, 12);
      for (const TraceStrategy& st : all_strategies()) {
        const double full = beta(st, h, target, behavior);
        CHECK(full >= 0.0);
        CHECK(std::abs(fold_beta(st, h, target, behavior) - full) <= 1e-12);
      }
    }
  }

  SUBCASE("exhaustive over chain2 histories of length <= 5") {
    const PolicyTable target = chain2_target();
    const PolicyTable behavior = PolicyTable::uniform(2, 2);
    std::vector<History> histories;
    std::function<void(History&)> grow = [&](History& h) {
      if (!h.empty()) histories.push_back(h);
      if (h.size() == 5) return;
      for (int pair = 0; pair < 4; ++pair) {
        h.push_back({pair / 2, pair % 2});
        grow(h);
        h.pop_back();
      }
    };
    History h;
    grow(h);
    CHECK(histories.size() == 4 + 16 + 64 + 256 + 1024);
    for (const TraceStrategy& st : all_strategies()) {
      for (const History& hist : histories) {
        CHECK(std::abs(fold_beta(st, hist, target, behavior) -
                       beta(st, hist, target, behavior)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("admissibility scans") {
  RngStream rng(303);
  const TraceStrategy tree_backup = TraceStrategy::tree_backup(1.0);
  const TraceStrategy recursive = TraceStrategy::nonmarkov_retrace(1.0);
  int checked = 0;
  for (int trial = 0; trial < 100000; ++trial) {
    const int ns = 2, na = 2;
    const PolicyTable target =
        PolicyTable::random_full_support(ns, na, rng.next_u64());
    const PolicyTable behavior =
        PolicyTable::random_full_support(ns, na, rng.next_u64());
    const History h = random_history(rng, ns, na, 10);
    if (!is_admissible(tree_backup, h, target, behavior).ok) break;
    if (!is_admissible(recursive, h, target, behavior).ok) break;
    ++checked;
  }
  CHECK(checked == 100000);
}

TEST_CASE("undecayed lambda with a deterministic target violates the bound") {
  PolicyTable target(2, 2, 0.0);
  target(0, 0) = 1.0;  // deterministic: always action 0
  target(1, 0) = 1.0;
  const PolicyTable behavior = PolicyTable::uniform(2, 2);
  const History off_target{{0, 0}, {1, 1}};  // second pair is never taken

  const auto res = is_admissible(TraceStrategy::qlambda_opc(1.0), off_target,
                                 target, behavior);
  CHECK(res.beta == 1.0);
  CHECK(res.is_bound == 0.0);
  CHECK_FALSE(res.ok);
}

TEST_CASE("certified coefficient bounds") {
  CHECK(beta_upper_bound(TraceStrategy::qlambda_opc(0.8), 3).value ==
        doctest::Approx(0.512).epsilon(1e-14));
  CHECK_FALSE(beta_upper_bound(TraceStrategy::qlambda_opc(0.8), 3).admissible);
  for (const TraceStrategy& st : all_strategies()) {
    CHECK(beta_upper_bound(st, 0).value == 1.0);
  }
  const BetaBound retrace_bound =
      beta_upper_bound(TraceStrategy::retrace(0.9), 4);
  CHECK(retrace_bound.admissible);
  CHECK(retrace_bound.value == doctest::Approx(std::pow(0.9, 4)));
  const BetaBound truncated_bound =
      beta_upper_bound(TraceStrategy::truncated_is(1.5), 7);
  CHECK(truncated_bound.admissible);
  CHECK(truncated_bound.value == 1.5);
  CHECK(std::isinf(
      beta_upper_bound(TraceStrategy::importance_sampling(), 2).value));
}

TEST_CASE("per-decision factors") {
  // ratio 2 at pair (0,0)
  const PolicyTable target = ratio_target(0.8, 0.5);
  PolicyTable behavior(2, 2, 0.0);
  behavior(0, 0) = 0.4;
  behavior(0, 1) = 0.6;
  behavior(1, 0) = 0.5;
  behavior(1, 1) = 0.5;

  SUBCASE("direct values") {
    CHECK(markov_trace(TraceStrategy::retrace(0.9), 0, 0, target, behavior) ==
          doctest::Approx(0.9).epsilon(1e-14));
    CHECK(markov_trace(TraceStrategy::importance_sampling(), 0, 0, target,
                       behavior) == doctest::Approx(2.0).epsilon(1e-14));
  }

  SUBCASE("non-factorable strategies are rejected") {
    CHECK_THROWS_AS(markov_trace(TraceStrategy::nonmarkov_retrace(0.9), 0, 0,
                                 target, behavior),
                    std::invalid_argument);
    CHECK_THROWS_AS(markov_trace(TraceStrategy::truncated_is(1.0), 0, 0,
                                 target, behavior),
                    std::invalid_argument);
  }

  SUBCASE("factor products reproduce the coefficient") {
    RngStream rng(404);
    for (int trial = 0; trial < 10000; ++trial) {
      const int ns = 2 + rng.next_int(2), na = 2;
      const PolicyTable t =
          PolicyTable::random_full_support(ns, na, rng.next_u64());
      const PolicyTable b =
          PolicyTable::random_full_support(ns, na, rng.next_u64());
      const History h = random_history(rng, ns, na, 8);
      for (const TraceStrategy& st : all_strategies()) {
        if (!st.factorable()) continue;
        double product = 1.0;
        for (std::size_t k = 1; k < h.size(); ++k) {
          product *= markov_trace(st, h[k].state, h[k].action, t, b);
        }
        CHECK(std::abs(product - beta(st, h, t, b)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("per-decision clipped strategies are monotone non-increasing") {
  RngStream rng(505);
  for (int trial = 0; trial < 2000; ++trial) {
    const PolicyTable target =
        PolicyTable::random_full_support(3, 2, rng.next_u64());
    const PolicyTable behavior =
        PolicyTable::random_full_support(3, 2, rng.next_u64());
    History h = random_history(rng, 3, 2, 8);
    for (const TraceStrategy& st :
         {TraceStrategy::retrace(0.95), TraceStrategy::tree_backup(1.0)}) {
      TraceSummary summary = init_summary(st);
      double prev = 1.0;
      for (std::size_t k = 1; k < h.size(); ++k) {
        auto [next, b] = step_summary(st, summary, h[k], target, behavior);
        summary = next;
        CHECK(b <= prev + 1e-15);
        prev = b;
      }
    }
  }
}

TEST_CASE("zero behavior probability raises a named domain error") {
  const PolicyTable target = chain2_target();
  PolicyTable behavior(2, 2, 0.0);
  behavior(0, 0) = 1.0;  // state 0 never takes action 1
  behavior(1, 0) = 0.5;
  behavior(1, 1) = 0.5;
  const History h{{0, 0}, {1, 1}, {0, 1}};  // offending pair at index 2
  CHECK_THROWS_WITH_AS(
      beta(TraceStrategy::importance_sampling(), h, target, behavior),
      doctest::Contains("index 2"), std::domain_error);
}

TEST_CASE("composite per-pair multiplier tables") {
  const PolicyTable target = chain2_target();
  const PolicyTable behavior = PolicyTable::uniform(2, 2);
  // lambda table zeroing pair (1,1), gamma table scaling everything by 0.5
  std::vector<double> lam{1.0, 1.0, 1.0, 0.0};
  std::vector<double> gam{0.5, 0.5, 0.5, 0.5};
  const TraceStrategy st = TraceStrategy::composite_glr(lam, gam);
  st.validate(4);

  const History live{{0, 0}, {0, 1}};
  const double rho = target(0, 1) / behavior(0, 1);
  CHECK(beta(st, live, target, behavior) ==
        doctest::Approx(0.5 * rho).epsilon(1e-14));

  const History cut{{0, 0}, {1, 1}, {0, 1}};
  CHECK(beta(st, cut, target, behavior) == 0.0);

  CHECK_THROWS_AS(TraceStrategy::composite_glr(std::vector<double>{0.5},
                                               std::vector<double>{0.5})
                      .validate(4),
                  std::invalid_argument);
  CHECK_THROWS_AS(TraceStrategy::composite_glr({2.0, 0, 0, 0}, {1, 1, 1, 1})
                      .validate(4),
                  std::invalid_argument);
}

TEST_CASE("strategy spec grammar") {
  SUBCASE("round trips") {
    CHECK(parse_strategy("is").kind == TraceKind::kImportanceSampling);
    const TraceStrategy retrace = parse_strategy("retrace:lambda=0.9");
    CHECK(retrace.kind == TraceKind::kRetrace);
    CHECK(retrace.lambda == 0.9);
    const TraceStrategy truncated = parse_strategy("truncated_is:d=1.5");
    CHECK(truncated.kind == TraceKind::kTruncatedIs);
    CHECK(truncated.clip == 1.5);
    const TraceStrategy composite =
        parse_strategy("composite_glr:lambda=0.8,gamma=0.9");
    CHECK(composite.lambda == 0.8);
    CHECK(composite.gamma_mult == 0.9);
    for (const TraceStrategy& st : all_strategies()) {
      CHECK(parse_strategy(to_string(st)).kind == st.kind);
    }
  }

  SUBCASE("errors name the offending token") {
    CHECK_THROWS_WITH_AS(parse_strategy("warp:lambda=1"),
                         doctest::Contains("warp"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_strategy("retrace:lambda="),
                         doctest::Contains("lambda"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_strategy("retrace:zeta=1"),
                         doctest::Contains("zeta"), std::invalid_argument);
    CHECK_THROWS_AS(parse_strategy("retrace:lambda=1.5"),
                    std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_strategy("is:lambda"),
                         doctest::Contains("lambda"), std::invalid_argument);
  }
}
