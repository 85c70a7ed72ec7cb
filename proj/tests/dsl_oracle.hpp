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

// Reference interpreter built on std::regex, sharing nothing with the
// library's matcher or evaluator beyond the program data types.

#ifndef PBE_TESTS_DSL_ORACLE_HPP
#define PBE_TESTS_DSL_ORACLE_HPP

#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "pbe/dsl.hpp"

namespace pbe::testing {

inline std::string oracle_regex(const MatchPattern& pattern) {
  if (const auto* k = std::get_if<RegexKind>(&pattern)) {
    switch (*k) {
      case RegexKind::Word: return "[A-Za-z]+";
      case RegexKind::Num: return "[0-9]+";
      case RegexKind::Alphanum: return "[A-Za-z0-9]+";
      case RegexKind::AllCaps: return "[A-Z]+";
      case RegexKind::PropCase: return "[A-Z][a-z]+";
      case RegexKind::Lower: return "[a-z]+";
      case RegexKind::Digit: return "[0-9]";
      case RegexKind::Char: return "[^ ]";
    }
  }
  std::string re;
  for (char c : std::get<Delimiter>(pattern).text()) {
    if (std::string("().-/").find(c) != std::string::npos) re += '\\';
    re += c;
  }
  return re;
}

inline std::vector<Match> oracle_matches(const MatchPattern& pattern, const std::string& input) {
  std::vector<Match> out;
  const std::regex rx(oracle_regex(pattern));
  for (auto it = std::sregex_iterator(input.begin(), input.end(), rx); it != std::sregex_iterator(); ++it) {
    out.push_back({static_cast<int>(it->position()), static_cast<int>(it->position() + it->length())});
  }
  return out;
}

inline std::optional<int> oracle_position(const Position& pos, const std::string& s) {
  const int len = static_cast<int>(s.size());
  if (const auto* c = std::get_if<ConstPos>(&pos)) {
    const int at = c->n >= 0 ? c->n : len + 1 + c->n;
    if (at < 0 || at > len) return std::nullopt;
    return at;
  }
  const auto& r = std::get<RegexPos>(pos);
  const auto m = oracle_matches(r.pattern, s);
  const int n = static_cast<int>(m.size());
  int idx = -1;
  if (r.k > 0 && r.k <= n) idx = r.k - 1;
  if (r.k < 0 && -r.k <= n) idx = n + r.k;
  if (idx < 0) return std::nullopt;
  return r.boundary == Boundary::Start ? m[static_cast<std::size_t>(idx)].start : m[static_cast<std::size_t>(idx)].end;
}

// nullopt when any expression fails.
inline std::optional<std::string> oracle_execute(const Program& p, const std::string& s) {
  std::string out;
  for (const auto& e : p.expressions) {
    if (const auto* c = std::get_if<ConstStr>(&e)) {
      out += std::string(c->value.text());
      continue;
    }
    const auto& sub = std::get<SubStr>(e);
    const auto a = oracle_position(sub.start, s), b = oracle_position(sub.end, s);
    if (!a || !b || *a >= *b) return std::nullopt;
    out += s.substr(static_cast<std::size_t>(*a), static_cast<std::size_t>(*b - *a));
  }
  return out;
}

}  // namespace pbe::testing

#endif  // PBE_TESTS_DSL_ORACLE_HPP
