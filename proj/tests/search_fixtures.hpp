/* Copyright 2026 The pbe-fixer Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Small decoders with fully known distributions and an exhaustive ranking of
// everything they can emit.

#ifndef PBE_TESTS_SEARCH_FIXTURES_HPP
#define PBE_TESTS_SEARCH_FIXTURES_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "pbe/search.hpp"

namespace pbe::testing {

// Emits EOS, 3 or 4. The state row holds the prefix coded in base 4, so the
// distribution may depend on the whole prefix.
class TableDecoder final : public StepDecoder {
 public:
  using Dist = std::function<std::array<double, 3>(const TokenSeq& prefix)>;  // weights of EOS, 3, 4

  explicit TableDecoder(Dist dist) : dist_(std::move(dist)) {}
  int vocab_size() const override { return 5; }
  FMat initial_state(const FMat& latent) const override { return FMat::Zero(latent.rows(), 1); }
  void step(const FMat& state, std::span<const int> tokens, FMat& next, FMat& logp) const override {
    next.resize(state.rows(), 1);
    logp.setConstant(state.rows(), 5, -std::numeric_limits<float>::infinity());
    for (Eigen::Index r = 0; r < state.rows(); ++r) {
      const int t = tokens[static_cast<std::size_t>(r)];
      const double code = t == tok::kBos ? 0.0 : static_cast<double>(state(r, 0)) * 4 + (t - 1);
      next(r, 0) = static_cast<float>(code);
      const auto w = dist_(decode_prefix(code));
      const double z = w[0] + w[1] + w[2];
      for (int v = 0; v < 3; ++v) {
        if (w[static_cast<std::size_t>(v)] > 0) logp(r, v + 2) = static_cast<float>(std::log(w[static_cast<std::size_t>(v)] / z));
      }
    }
  }

 private:
  static TokenSeq decode_prefix(double code) {
    TokenSeq out;
    for (auto c = static_cast<long>(code); c > 0; c /= 4) out.push_back(static_cast<int>(c % 4) + 1);
    std::reverse(out.begin(), out.end());
    return out;
  }
  Dist dist_;
};

inline double teacher_forced(const StepDecoder& d, const TokenSeq& tokens) {
  FMat state = d.initial_state(FMat::Zero(1, 1)), next, logp;
  int input = tok::kBos;
  double total = 0;
  for (int t : tokens) {
    d.step(state, std::span<const int>(&input, 1), next, logp);
    total += static_cast<double>(logp(0, t));
    state = next;
    input = t;
  }
  return total;
}

inline bool ranks_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return a.tokens < b.tokens;
}

// Every emittable sequence: finished ones ranked, then unfinished ones of
// length max_tokens ranked.
inline std::vector<Hypothesis> exhaustive(const StepDecoder& d, int max_tokens) {
  std::vector<Hypothesis> finished, open;
  std::function<void(const TokenSeq&)> walk = [&](const TokenSeq& prefix) {
    if (static_cast<int>(prefix.size()) == max_tokens) {
      open.push_back({prefix, teacher_forced(d, prefix), false});
      return;
    }
    FMat state = d.initial_state(FMat::Zero(1, 1)), next, logp;
    int input = tok::kBos;
    for (int t : prefix) {
      d.step(state, std::span<const int>(&input, 1), next, logp);
      state = next;
      input = t;
    }
    d.step(state, std::span<const int>(&input, 1), next, logp);
    for (int v = 0; v < d.vocab_size(); ++v) {
      if (!std::isfinite(logp(0, v))) continue;
      TokenSeq t = prefix;
      t.push_back(v);
      if (v == tok::kEos) {
        finished.push_back({t, teacher_forced(d, t), true});
      } else {
        walk(t);
      }
    }
  };
  walk({});
  std::sort(finished.begin(), finished.end(), ranks_before);
  std::sort(open.begin(), open.end(), ranks_before);
  finished.insert(finished.end(), open.begin(), open.end());
  return finished;
}

struct NamedDecoder {
  std::string name;
  TableDecoder decoder;
};

// Three tokens, at most four per sequence (EOS is forced at the fourth).
// Each one is built so that no top-K sequence has a prefix that falls out of
// the top K at an earlier step; beam search is exact only under that condition.
inline std::vector<NamedDecoder> hand_built_decoders() {
  auto capped = [](auto f) {
    return [f](const TokenSeq& p) -> std::array<double, 3> {
      if (p.size() >= 3) return {1, 0, 0};
      return f(p);
    };
  };
  std::vector<NamedDecoder> out;
  out.push_back({"fixed_length", TableDecoder(capped([](const TokenSeq&) { return std::array<double, 3>{0, 0.6, 0.4}; }))});
  out.push_back({"rising_eos", TableDecoder(capped([](const TokenSeq& p) {
                   const double e = 0.1 + 0.4 * static_cast<double>(p.size());
                   return std::array<double, 3>{e, 0.6 * (1 - e), 0.4 * (1 - e)};
                 }))});
  out.push_back({"alternating", TableDecoder(capped([](const TokenSeq& p) {
                   if (!p.empty() && p.back() == 3) return std::array<double, 3>{0.15, 0.1, 0.75};
                   return std::array<double, 3>{0.15, 0.75, 0.1};
                 }))});
  out.push_back({"early_stop", TableDecoder(capped([](const TokenSeq& p) {
                   return p.empty() ? std::array<double, 3>{0.7, 0.2, 0.1} : std::array<double, 3>{0.5, 0.3, 0.2};
                 }))});
  return out;
}

}  // namespace pbe::testing

#endif  // PBE_TESTS_SEARCH_FIXTURES_HPP
