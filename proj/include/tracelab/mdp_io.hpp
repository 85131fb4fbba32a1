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

#ifndef TRACELAB_MDP_IO_HPP_
#define TRACELAB_MDP_IO_HPP_

#include <iosfwd>
#include <string>

#include "tracelab/mdp.hpp"

namespace tracelab {

// Plain-text MDP fixture format. Whitespace-separated tokens; `#` starts a
// comment running to end of line. Keys may appear in any order:
//
//   n_states <int>
//   n_actions <int>
//   discount <real>
//   transition <n_states * n_actions * n_states reals, (s,a,s') row-major>
//   reward <n_states * n_actions reals, (s,a) row-major>
//   terminal_states <zero or more ints>
//
// n_states and n_actions must precede transition/reward. The loaded MDP is
// validated; malformed input throws std::invalid_argument naming the token.
FiniteMdp load_mdp(std::istream& in);
FiniteMdp load_mdp_file(const std::string& path);

void save_mdp(std::ostream& out, const FiniteMdp& mdp);
void save_mdp_file(const std::string& path, const FiniteMdp& mdp);

}  // namespace tracelab

#endif  // TRACELAB_MDP_IO_HPP_
