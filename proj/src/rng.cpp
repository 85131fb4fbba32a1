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

#include "tracelab/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace tracelab {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t derive_stream_seed(std::uint64_t root_seed,
                                 std::string_view component) {
  return splitmix64(root_seed ^ fnv1a64(component));
}

int RngStream::next_int(int n) {
  if (n <= 0) throw std::invalid_argument("next_int: n must be positive");
  return static_cast<int>(next_double() * n);
}

int RngStream::sample(std::span<const double> probs) {
  const double u = next_double();
  double cdf = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cdf += probs[i];
    if (u < cdf) return static_cast<int>(i);
  }
  // Rounding can leave cdf marginally below 1; fall back to the last
  // positive-probability index.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return static_cast<int>(i);
  }
  throw std::invalid_argument("sample: all probabilities are zero");
}

std::vector<double> RngStream::dirichlet(int k) {
  if (k <= 0) throw std::invalid_argument("dirichlet: k must be positive");
  std::vector<double> x(k);
  double sum = 0.0;
  do {
    sum = 0.0;
    for (int i = 0; i < k; ++i) {
      x[i] = -std::log1p(-next_double());
      sum += x[i];
    }
  } while (sum <= 0.0);
  for (int i = 0; i < k; ++i) x[i] /= sum;
  return x;
}

}  // namespace tracelab
