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

#include "tracelab/mdp_io.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace tracelab {

namespace {

// Token stream that strips '#' comments.
class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  std::optional<std::string> next() {
    if (pushed_) {
      pushed_ = false;
      return std::move(buffer_);
    }
    std::string tok;
    while (in_ >> tok) {
      if (tok[0] == '#') {
        in_.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
        continue;
      }
      return tok;
    }
    return std::nullopt;
  }

  void push_back(std::string tok) {
    buffer_ = std::move(tok);
    pushed_ = true;
  }

 private:
  std::istream& in_;
  std::string buffer_;
  bool pushed_ = false;
};

double parse_real(const std::string& tok, const std::string& context) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || tok.empty()) {
    throw std::invalid_argument("mdp file: expected a number for " + context +
                                ", got '" + tok + "'");
  }
  return v;
}

int parse_int(const std::string& tok, const std::string& context) {
  const double v = parse_real(tok, context);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw std::invalid_argument("mdp file: expected an integer for " +
                                context + ", got '" + tok + "'");
  }
  return i;
}

bool looks_numeric(const std::string& tok) {
  char* end = nullptr;
  std::strtod(tok.c_str(), &end);
  return !tok.empty() && end == tok.c_str() + tok.size();
}

}  // namespace

FiniteMdp load_mdp(std::istream& in) {
  TokenReader reader(in);
  int n_states = -1, n_actions = -1;
  double discount = -1.0;
  std::vector<double> transition, reward;
  std::set<int> terminals;
  bool saw_transition = false, saw_reward = false;

  auto require_dims = [&](const std::string& key) {
    if (n_states < 0 || n_actions < 0) {
      throw std::invalid_argument(
          "mdp file: n_states and n_actions must precede '" + key + "'");
    }
  };

  while (auto tok = reader.next()) {
    const std::string& key = *tok;
    if (key == "n_states") {
      auto v = reader.next();
      if (!v) throw std::invalid_argument("mdp file: missing n_states value");
      n_states = parse_int(*v, "n_states");
    } else if (key == "n_actions") {
      auto v = reader.next();
      if (!v) throw std::invalid_argument("mdp file: missing n_actions value");
      n_actions = parse_int(*v, "n_actions");
    } else if (key == "discount") {
      auto v = reader.next();
      if (!v) throw std::invalid_argument("mdp file: missing discount value");
      discount = parse_real(*v, "discount");
    } else if (key == "transition") {
      require_dims(key);
      const std::size_t count =
          static_cast<std::size_t>(n_states) * n_actions * n_states;
      transition.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        auto v = reader.next();
        if (!v) {
          throw std::invalid_argument(
              "mdp file: transition list ended early at entry " +
              std::to_string(i));
        }
        transition[i] = parse_real(*v, "transition");
      }
      saw_transition = true;
    } else if (key == "reward") {
      require_dims(key);
      const std::size_t count = static_cast<std::size_t>(n_states) * n_actions;
      reward.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        auto v = reader.next();
        if (!v) {
          throw std::invalid_argument(
              "mdp file: reward list ended early at entry " +
              std::to_string(i));
        }
        reward[i] = parse_real(*v, "reward");
      }
      saw_reward = true;
    } else if (key == "terminal_states") {
      // Consume integer tokens until the next key.
      while (auto v = reader.next()) {
        if (!looks_numeric(*v)) {
          reader.push_back(*v);
          break;
        }
        terminals.insert(parse_int(*v, "terminal_states"));
      }
    } else {
      throw std::invalid_argument("mdp file: unknown key '" + key + "'");
    }
  }

  if (n_states < 0) throw std::invalid_argument("mdp file: missing n_states");
  if (n_actions < 0) throw std::invalid_argument("mdp file: missing n_actions");
  if (discount < 0.0) throw std::invalid_argument("mdp file: missing discount");
  if (!saw_transition) throw std::invalid_argument("mdp file: missing transition");
  if (!saw_reward) throw std::invalid_argument("mdp file: missing reward");

  FiniteMdp mdp(n_states, n_actions, discount);
  mdp.transition = std::move(transition);
  mdp.reward = std::move(reward);
  mdp.terminal_states = std::move(terminals);
  mdp.validate();
  return mdp;
}

FiniteMdp load_mdp_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open mdp file: " + path);
  return load_mdp(in);
}

void save_mdp(std::ostream& out, const FiniteMdp& mdp) {
  out.precision(17);
  out << "n_states " << mdp.n_states << "\n";
  out << "n_actions " << mdp.n_actions << "\n";
  out << "discount " << mdp.discount << "\n";
  if (!mdp.terminal_states.empty()) {
    out << "terminal_states";
    for (int s : mdp.terminal_states) out << " " << s;
    out << "\n";
  }
  out << "transition";
  for (double v : mdp.transition) out << " " << v;
  out << "\n";
  out << "reward";
  for (double v : mdp.reward) out << " " << v;
  out << "\n";
}

void save_mdp_file(const std::string& path, const FiniteMdp& mdp) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write mdp file: " + path);
  save_mdp(out, mdp);
}

}  // namespace tracelab
