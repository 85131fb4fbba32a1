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

#include <algorithm>
#include <sstream>

#include "tracelab/mdp.hpp"
#include "tracelab/mdp_io.hpp"
#include "tracelab/rng.hpp"
#include "test_util.hpp"

using namespace tracelab;
using namespace tracelab::test;

TEST_CASE("policy operator fixes constants and zero") {
  RngStream rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const FiniteMdp mdp = generate_random_mdp(2 + rng.next_int(4), 2, 2, 1.0,
                                              rng.next_u64(), 0.7);
    const PolicyTable pi = PolicyTable::random_full_support(
        mdp.n_states, mdp.n_actions, rng.next_u64());
    const QTable ones(mdp.n_states, mdp.n_actions, 1.0);
    for (double v : apply_policy_operator(mdp, pi, ones).values) {
      CHECK(std::abs(v - 1.0) <= 1e-12);
    }
    const QTable zeros(mdp.n_states, mdp.n_actions, 0.0);
    for (double v : apply_policy_operator(mdp, pi, zeros).values) {
      CHECK(v == 0.0);
    }
  }
}

TEST_CASE("policy operator matches dense matrix oracle on chain2") {
  const FiniteMdp mdp = make_chain2();
  const PolicyTable pi = chain2_target();
  QTable q(2, 2);
  q.values = mdp.reward;  // probe with the reward vector

  const DenseMatrix oracle = policy_pair_matrix_oracle(mdp, pi);
  const std::vector<double> expected = matvec(oracle, q.values);
  const QTable got = apply_policy_operator(mdp, pi, q);
  CHECK(max_abs_diff(got.values, expected) <= 1e-15);
}

TEST_CASE("bellman backup basics") {
  FiniteMdp mdp = make_chain2();
  const PolicyTable pi = chain2_target();

  SUBCASE("zero discount returns rewards") {
    mdp.discount = 0.0;
    RngStream rng(5);
    const QTable q = random_q(rng, 2, 2);
    const QTable backed = bellman_backup(mdp, pi, q);
    CHECK(max_abs_diff(backed.values, mdp.reward) == 0.0);
  }

  SUBCASE("zero q returns rewards") {
    const QTable zeros(2, 2, 0.0);
    CHECK(max_abs_diff(bellman_backup(mdp, pi, zeros).values, mdp.reward) ==
          0.0);
  }

  SUBCASE("exact evaluation is a fixed point") {
    const QTable q_pi = exact_q_pi(mdp, pi);
    CHECK(sup_norm_diff(bellman_backup(mdp, pi, q_pi), q_pi) <= 1e-10);
  }

  SUBCASE("dimension mismatch is rejected") {
    const QTable wrong(3, 2, 0.0);
    CHECK_THROWS_AS(bellman_backup(mdp, pi, wrong), std::invalid_argument);
  }
}

TEST_CASE("optimality backup") {
  const FiniteMdp mdp = make_chain2();

  SUBCASE("optimal Q is a fixed point") {
    const QTable q_star = exact_q_star(mdp, 1e-10);
    const auto [backed, greedy] = bellman_optimality(mdp, q_star);
    CHECK(sup_norm_diff(backed, q_star) <= 1e-9);
    for (int s = 0; s < 2; ++s) {
      CHECK(greedy(s, 0) + greedy(s, 1) == 1.0);
    }
  }

  SUBCASE("single-action MDP reduces to the policy backup") {
    const FiniteMdp single = generate_random_mdp(4, 1, 2, 1.0, 99, 0.8);
    const PolicyTable only = PolicyTable::uniform(4, 1);
    RngStream rng(7);
    const QTable q = random_q(rng, 4, 1);
    CHECK(sup_norm_diff(bellman_optimality(single, q).first,
                        bellman_backup(single, only, q)) == 0.0);
  }

  SUBCASE("zero q yields rewards and ties break to the lowest index") {
    const QTable zeros(2, 2, 0.0);
    const auto [backed, greedy] = bellman_optimality(mdp, zeros);
    CHECK(max_abs_diff(backed.values, mdp.reward) == 0.0);
    CHECK(greedy(0, 0) == 1.0);
    CHECK(greedy(1, 0) == 1.0);
  }
}

TEST_CASE("exact evaluation solutions") {
  const FiniteMdp mdp = make_chain2();
  const PolicyTable pi = chain2_target();

  SUBCASE("zero discount gives the reward table") {
    FiniteMdp myopic = mdp;
    myopic.discount = 0.0;
    CHECK(max_abs_diff(exact_q_pi(myopic, pi).values, myopic.reward) <= 1e-14);
  }

  SUBCASE("zero rewards give zero values") {
    FiniteMdp zero = mdp;
    std::fill(zero.reward.begin(), zero.reward.end(), 0.0);
    CHECK(sup_norm(exact_q_pi(zero, pi)) <= 1e-14);
    CHECK(sup_norm(exact_q_star(zero, 1e-10)) <= 1e-10);
  }

  SUBCASE("matches the truncated power series oracle") {
    const DenseMatrix oracle_matrix = policy_pair_matrix_oracle(mdp, pi);
    const std::vector<double> series =
        power_series_oracle(oracle_matrix, mdp.reward, mdp.discount, 10000);
    CHECK(max_abs_diff(exact_q_pi(mdp, pi).values, series) <= 1e-8);
  }

  SUBCASE("Bellman residual stays below 1e-10 on random models") {
    RngStream rng(23);
    for (int trial = 0; trial < 50; ++trial) {
      const FiniteMdp random_mdp = generate_random_mdp(
          2 + rng.next_int(5), 2, 2, 2.0, rng.next_u64(), 0.9);
      const PolicyTable random_pi = PolicyTable::random_full_support(
          random_mdp.n_states, 2, rng.next_u64());
      const QTable q = exact_q_pi(random_mdp, random_pi);
      CHECK(sup_norm_diff(bellman_backup(random_mdp, random_pi, q), q) <=
            1e-10);
    }
  }

  SUBCASE("optimal values dominate every sampled policy") {
    const QTable q_star = exact_q_star(mdp, 1e-9);
    RngStream rng(31);
    for (int trial = 0; trial < 100; ++trial) {
      const PolicyTable random_pi =
          PolicyTable::random_full_support(2, 2, rng.next_u64());
      const QTable q_pi = exact_q_pi(mdp, random_pi);
      for (int i = 0; i < q_star.size(); ++i) {
        CHECK(q_star.values[i] + 1e-8 >= q_pi.values[i]);
      }
    }
  }

  SUBCASE("single-action optimal equals the only policy's value") {
    const FiniteMdp single = generate_random_mdp(3, 1, 2, 1.0, 4, 0.6);
    CHECK(sup_norm_diff(exact_q_star(single, 1e-9),
                        exact_q_pi(single, PolicyTable::uniform(3, 1))) <=
          1e-9);
  }
}

TEST_CASE("random MDP generator") {
  SUBCASE("same seed reproduces the model bit for bit") {
    const FiniteMdp a = generate_random_mdp(5, 3, 2, 1.5, 77, 0.8);
    const FiniteMdp b = generate_random_mdp(5, 3, 2, 1.5, 77, 0.8);
    CHECK(a.transition == b.transition);
    CHECK(a.reward == b.reward);
  }

  SUBCASE("branching one gives deterministic transitions") {
    const FiniteMdp mdp = generate_random_mdp(6, 2, 1, 1.0, 3, 0.5);
    for (int s = 0; s < 6; ++s) {
      for (int a = 0; a < 2; ++a) {
        int nonzero = 0;
        for (int s2 = 0; s2 < 6; ++s2) {
          if (mdp.p(s, a, s2) != 0.0) {
            ++nonzero;
            CHECK(mdp.p(s, a, s2) == 1.0);
          }
        }
        CHECK(nonzero == 1);
      }
    }
  }

  SUBCASE("invariants hold across 1000 seeds") {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      const int ns = 1 + static_cast<int>(seed % 6);
      const int na = 1 + static_cast<int>(seed % 3);
      const int branching = 1 + static_cast<int>(seed % ns);
      const FiniteMdp mdp =
          generate_random_mdp(ns, na, branching, 2.0, seed, 0.9);
      CHECK_NOTHROW(mdp.validate());
    }
  }

  SUBCASE("parameter violations are rejected") {
    CHECK_THROWS_AS(generate_random_mdp(3, 2, 0, 1.0, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_random_mdp(3, 2, 4, 1.0, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_random_mdp(3, 2, 1, -1.0, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_random_mdp(3, 2, 1, 1.0, 1, 1.0),
                    std::invalid_argument);
  }
}

TEST_CASE("td error") {
  const FiniteMdp mdp = make_chain2();
  const PolicyTable pi = chain2_target();

  SUBCASE("expected error vanishes at the exact evaluation") {
    const QTable q_pi = exact_q_pi(mdp, pi);
    for (int s = 0; s < 2; ++s) {
      for (int a = 0; a < 2; ++a) {
        double expected_delta = 0.0;
        for (int s2 = 0; s2 < 2; ++s2) {
          if (mdp.p(s, a, s2) == 0.0) continue;
          expected_delta +=
              mdp.p(s, a, s2) * td_error(mdp, {s, a, mdp.r(s, a), s2}, pi, q_pi);
        }
        CHECK(std::abs(expected_delta) <= 1e-9);
      }
    }
  }

  SUBCASE("zero discount and zero q give the raw reward") {
    FiniteMdp myopic = mdp;
    myopic.discount = 0.0;
    const QTable zeros(2, 2, 0.0);
    CHECK(td_error(myopic, {1, 1, 1.0, 1}, pi, zeros) == 1.0);
  }

  SUBCASE("hand-expanded sample matches") {
    const QTable q_pi = exact_q_pi(mdp, pi);
    const double got = td_error(mdp, {0, 1, 0.0, 1}, pi, q_pi);
    const double bootstrap = pi(1, 0) * q_pi(1, 0) + pi(1, 1) * q_pi(1, 1);
    const double expected = 0.0 + mdp.discount * bootstrap - q_pi(0, 1);
    CHECK(std::abs(got - expected) <= 1e-14);
  }

  SUBCASE("terminal next state has zero bootstrap") {
    const FiniteMdp episodic = make_chain2_episodic();
    const PolicyTable pi3 = chain2_episodic_target();
    QTable q(3, 2, 5.0);  // nonzero everywhere, including the terminal rows
    CHECK(td_error(episodic, {0, 1, 0.0, 2}, pi3, q) == -5.0);
  }
}

TEST_CASE("order and contraction properties of the backup") {
  RngStream rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const FiniteMdp mdp = generate_random_mdp(2 + rng.next_int(3), 2, 2, 1.0,
                                              rng.next_u64(), 0.85);
    const PolicyTable pi =
        PolicyTable::random_full_support(mdp.n_states, 2, rng.next_u64());
    const QTable q1 = random_q(rng, mdp.n_states, 2);
    QTable q2 = q1;
    for (double& v : q2.values) v += rng.next_double();  // q2 >= q1

    const QTable b1 = bellman_backup(mdp, pi, q1);
    const QTable b2 = bellman_backup(mdp, pi, q2);
    for (int i = 0; i < b1.size(); ++i) {
      CHECK(b1.values[i] <= b2.values[i] + 1e-12);
    }
    CHECK(sup_norm_diff(b1, b2) <=
          mdp.discount * sup_norm_diff(q1, q2) + 1e-12);

    const QTable optimal = bellman_optimality(mdp, q1).first;
    for (int i = 0; i < b1.size(); ++i) {
      CHECK(optimal.values[i] + 1e-12 >= b1.values[i]);
    }
  }
}

TEST_CASE("terminal state invariants") {
  CHECK_NOTHROW(make_chain2_episodic().validate());

  FiniteMdp broken = make_chain2_episodic();
  broken.r(2, 0) = 0.5;  // reward on a terminal state
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);

  FiniteMdp leaky = make_chain2_episodic();
  leaky.p(2, 0, 2) = 0.5;
  leaky.p(2, 0, 0) = 0.5;  // terminal state that is not absorbing
  CHECK_THROWS_AS(leaky.validate(), std::invalid_argument);
}

TEST_CASE("mdp fixture file round trip and errors") {
  SUBCASE("round trip preserves every field") {
    const FiniteMdp original = generate_random_mdp(4, 2, 3, 1.7, 2024, 0.83);
    std::stringstream buffer;
    save_mdp(buffer, original);
    const FiniteMdp loaded = load_mdp(buffer);
    CHECK(loaded.n_states == original.n_states);
    CHECK(loaded.n_actions == original.n_actions);
    CHECK(loaded.discount == original.discount);
    CHECK(loaded.transition == original.transition);
    CHECK(loaded.reward == original.reward);
  }

  SUBCASE("round trip keeps terminal states") {
    std::stringstream buffer;
    save_mdp(buffer, make_chain2_episodic());
    CHECK(load_mdp(buffer).terminal_states == std::set<int>{2});
  }

  SUBCASE("comments and key order are accepted") {
    std::stringstream in(
        "# tiny single-state fixture\n"
        "discount 0  # inline comment\n"
        "n_actions 1\nn_states 1\n"
        "reward 0.25\ntransition 1\n");
    const FiniteMdp mdp = load_mdp(in);
    CHECK(mdp.r(0, 0) == 0.25);
  }

  SUBCASE("unknown key names the token") {
    std::stringstream in("n_states 1\nn_actions 1\nbogus 3\n");
    CHECK_THROWS_WITH_AS(load_mdp(in), doctest::Contains("bogus"),
                         std::invalid_argument);
  }

  SUBCASE("short transition list is rejected") {
    std::stringstream in(
        "n_states 2\nn_actions 1\ndiscount 0.5\ntransition 1 0 0\n");
    CHECK_THROWS_AS(load_mdp(in), std::invalid_argument);
  }

  SUBCASE("missing required key is rejected") {
    std::stringstream in("n_states 1\nn_actions 1\ntransition 1\nreward 0\n");
    CHECK_THROWS_WITH_AS(load_mdp(in), doctest::Contains("discount"),
                         std::invalid_argument);
  }

  SUBCASE("non-stochastic rows are rejected on load") {
    std::stringstream in(
        "n_states 1\nn_actions 1\ndiscount 0.5\ntransition 0.7\nreward 0\n");
    CHECK_THROWS_AS(load_mdp(in), std::invalid_argument);
  }
}
