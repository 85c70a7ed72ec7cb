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

// String-transformation DSL: AST, concrete syntax and interpreter.
//
//   P := Concat(e_1, ..., e_n)              1 <= n <= kMaxExpressions
//   e := ConstStr(s) | SubStr(p1, p2)
//   p := Regex(r, k, Start|End) | ConstPos(n)
//   r := s | t
//
// Positions are character boundaries 0..len; SubStr is the half-open range
// [p1, p2).

#ifndef PBE_DSL_HPP
#define PBE_DSL_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace pbe {

inline constexpr int kMaxExpressions = 10;
inline constexpr int kMaxMatchIndex = 5;   // K
inline constexpr int kMaxConstPos = 10;    // L
inline constexpr int kMaxStringLength = 80;

enum class RegexKind : std::uint8_t {
  Word,      // [A-Za-z]+
  Num,       // [0-9]+
  Alphanum,  // [A-Za-z0-9]+
  AllCaps,   // [A-Z]+
  PropCase,  // [A-Z][a-z]+
  Lower,     // [a-z]+
  Digit,     // [0-9]
  Char,      // [^ ]
};
inline constexpr int kNumRegexKinds = 8;

std::string_view regex_kind_name(RegexKind kind);
std::optional<RegexKind> regex_kind_from_name(std::string_view name);

// Closed constant vocabulary, shared by ConstStr and literal-match regexes.
inline constexpr std::array<std::string_view, 13> kDelimiters = {
    " ", ".", ". ", ",", ", ", "-", ":", " : ", ";", "/", "(", ")", "@"};
inline constexpr int kNumDelimiters = static_cast<int>(kDelimiters.size());

std::optional<int> delimiter_index(std::string_view text);

struct Delimiter {
  int index = 0;  // into kDelimiters

  std::string_view text() const { return kDelimiters[static_cast<std::size_t>(index)]; }
  friend bool operator==(const Delimiter&, const Delimiter&) = default;
};

// r := s | t
using MatchPattern = std::variant<RegexKind, Delimiter>;

enum class Boundary : std::uint8_t { Start, End };

struct RegexPos {
  MatchPattern pattern;
  int k = 1;
  Boundary boundary = Boundary::Start;
  friend bool operator==(const RegexPos&, const RegexPos&) = default;
};

struct ConstPos {
  int n = 0;
  friend bool operator==(const ConstPos&, const ConstPos&) = default;
};

using Position = std::variant<RegexPos, ConstPos>;

struct ConstStr {
  Delimiter value;
  friend bool operator==(const ConstStr&, const ConstStr&) = default;
};

struct SubStr {
  Position start;
  Position end;
  friend bool operator==(const SubStr&, const SubStr&) = default;
};

using Expression = std::variant<ConstStr, SubStr>;

struct Program {
  std::vector<Expression> expressions;
  friend bool operator==(const Program&, const Program&) = default;
};

enum class ExecErrorKind : std::uint8_t {
  NoSuchMatch,
  PositionOutOfRange,
  EmptyOrInvertedSubstring,
  ZeroMatchIndex,
};

std::string_view exec_error_name(ExecErrorKind kind);

struct ExecError {
  ExecErrorKind kind;
  int expression = -1;  // index of the failing expression, -1 for a bare position
  friend bool operator==(const ExecError&, const ExecError&) = default;
};

struct ParseError {
  std::size_t offset = 0;
  std::string expected;
  std::string message() const;
};

using ParseResult = std::variant<Program, ParseError>;
using PositionResult = std::variant<int, ExecError>;
using ExecResult = std::variant<std::string, ExecError>;

struct Match {
  int start = 0;
  int end = 0;
  friend bool operator==(const Match&, const Match&) = default;
};

ParseResult parse(std::string_view text);
std::string render(const Program& program);
std::string render(const Expression& expr);

// Leftmost, non-overlapping, maximal matches in increasing start order.
std::vector<Match> regex_matches(const MatchPattern& pattern, std::string_view input);

PositionResult eval_position(const Position& pos, std::string_view input);
ExecResult execute(const Program& program, std::string_view input);

inline int program_length(const Program& program) {
  return static_cast<int>(program.expressions.size());
}

// Structural validity: length bounds and literal ranges. The parser and the
// token decoder only ever produce valid programs.
bool is_valid(const Program& program);

// Throws std::invalid_argument on a parse error; convenience for tests and
// fixtures with known-good text.
Program parse_or_throw(std::string_view text);

}  // namespace pbe

#endif  // PBE_DSL_HPP
