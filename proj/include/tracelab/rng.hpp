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

#ifndef TRACELAB_RNG_HPP_
#define TRACELAB_RNG_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace tracelab {

// Derives a child seed from a root seed and a component name, so that every
// randomized component of an experiment owns an independent, reproducible
// stream: stream id = splitmix64(root_seed XOR fnv1a64(component)).
std::uint64_t derive_stream_seed(std::uint64_t root_seed,
                                 std::string_view component);

/// Seeded random stream. All sampling goes through next_double() so that a
/// stream's output depends only on its seed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}
  RngStream(std::uint64_t root_seed, std::string_view component)
      : gen_(derive_stream_seed(root_seed, component)) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double next_in(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Uniform integer in [0, n).
  int next_int(int n);

  // Index sampled from a discrete distribution (probabilities summing to ~1).
  int sample(std::span<const double> probs);

  // Point on the probability simplex, all coordinates positive a.s.
  std::vector<double> dirichlet(int k);

 private:
  std::mt19937_64 gen_;
};

}  // namespace tracelab

#endif  // TRACELAB_RNG_HPP_
