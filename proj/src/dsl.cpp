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

#include "pbe/dsl.hpp"

#include <cctype>
#include <charconv>
#include <stdexcept>

namespace pbe {

namespace {

constexpr std::array<std::string_view, kNumRegexKinds> kRegexKindNames = {
    "Word", "Num", "Alphanum", "AllCaps", "PropCase", "Lower", "Digit", "Char"};

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return is_upper(c) || is_lower(c); }

// Length of the maximal match of `kind` starting exactly at `at`, 0 if none.
int match_length_at(RegexKind kind, std::string_view s, std::size_t at) {
  auto run = [&](auto pred) {
    std::size_t j = at;
    while (j < s.size() && pred(s[j])) ++j;
    return static_cast<int>(j - at);
  };
  switch (kind) {
    case RegexKind::Word:
      return run(is_alpha);
    case RegexKind::Num:
      return run(is_digit);
    case RegexKind::Alphanum:
      return run([](char c) { return is_alpha(c) || is_digit(c); });
    case RegexKind::AllCaps:
      return run(is_upper);
    case RegexKind::Lower:
      return run(is_lower);
    case RegexKind::PropCase: {
      if (!is_upper(s[at]) || at + 1 >= s.size() || !is_lower(s[at + 1])) return 0;
      std::size_t j = at + 1;
      while (j < s.size() && is_lower(s[j])) ++j;
      return static_cast<int>(j - at);
    }
    case RegexKind::Digit:
      return is_digit(s[at]) ? 1 : 0;
    case RegexKind::Char:
      return s[at] != ' ' ? 1 : 0;
  }
  return 0;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  ParseResult program() {
    try {
      Program p;
      keyword("Concat");
      punct('(');
      skip_ws();
      if (peek() == ')') fail("expression");
      p.expressions.push_back(expression());
      while (try_punct(',')) p.expressions.push_back(expression());
      punct(')');
      skip_ws();
      if (pos_ != text_.size()) fail("end of input");
      if (program_length(p) > kMaxExpressions) {
        pos_ = text_.size();
        fail("at most 10 expressions");
      }
      return p;
    } catch (const ParseError& e) {
      return e;
    }
  }

 private:
  [[noreturn]] void fail(std::string expected) { throw ParseError{pos_, std::move(expected)}; }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  std::string_view identifier() {
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  void keyword(std::string_view kw) {
    skip_ws();
    std::size_t at = pos_;
    if (identifier() != kw) {
      pos_ = at;
      fail(std::string(kw));
    }
  }

  void punct(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("'") + c + "'");
    ++pos_;
  }

  bool try_punct(char c) {
    skip_ws();
    if (peek() != c) return false;
    ++pos_;
    return true;
  }

  int integer(int bound, const char* what) {
    skip_ws();
    std::size_t start = pos_;
    if (peek() == '-') ++pos_;
    while (is_digit(peek())) ++pos_;
    int value = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (ec != std::errc() || ptr != text_.data() + pos_) {
      pos_ = start;
      fail(what);
    }
    if (value < -bound || value > bound) {
      pos_ = start;
      fail(std::string(what) + " in [-" + std::to_string(bound) + ", " + std::to_string(bound) + "]");
    }
    return value;
  }

  Delimiter delimiter() {
    skip_ws();
    std::size_t start = pos_;
    if (peek() != '"') fail("string literal");
    ++pos_;
    std::string value;
    while (true) {
      if (pos_ >= text_.size()) fail("closing '\"'");
      char c = text_[pos_++];
      if (c == '"') break;
      if (c == '\\') {
        if (pos_ >= text_.size()) fail("escaped character");
        c = text_[pos_++];
      }
      value.push_back(c);
    }
    auto idx = delimiter_index(value);
    if (!idx) {
      pos_ = start;
      fail("constant string from the delimiter vocabulary");
    }
    return Delimiter{*idx};
  }

  Expression expression() {
    skip_ws();
    std::size_t at = pos_;
    std::string_view name = identifier();
    if (name == "ConstStr") {
      punct('(');
      ConstStr e{delimiter()};
      punct(')');
      return e;
    }
    if (name == "SubStr") {
      punct('(');
      Position p1 = position();
      punct(',');
      Position p2 = position();
      punct(')');
      return SubStr{std::move(p1), std::move(p2)};
    }
    pos_ = at;
    fail("ConstStr or SubStr");
  }

  Position position() {
    skip_ws();
    std::size_t at = pos_;
    std::string_view name = identifier();
    if (name == "ConstPos") {
      punct('(');
      ConstPos p{integer(kMaxConstPos, "position")};
      punct(')');
      return p;
    }
    if (name == "Regex") {
      punct('(');
      RegexPos p;
      skip_ws();
      if (peek() == '"') {
        p.pattern = delimiter();
      } else {
        std::size_t kind_at = pos_;
        auto kind = regex_kind_from_name(identifier());
        if (!kind) {
          pos_ = kind_at;
          fail("regex token or string literal");
        }
        p.pattern = *kind;
      }
      punct(',');
      p.k = integer(kMaxMatchIndex, "match index");
      punct(',');
      skip_ws();
      std::size_t b_at = pos_;
      std::string_view b = identifier();
      if (b == "Start") {
        p.boundary = Boundary::Start;
      } else if (b == "End") {
        p.boundary = Boundary::End;
      } else {
        pos_ = b_at;
        fail("Start or End");
      }
      punct(')');
      return p;
    }
    pos_ = at;
    fail("Regex or ConstPos");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

void render_quoted(std::string& out, std::string_view s) {
  out.push_back('"');
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
}

void render_position(std::string& out, const Position& pos) {
  if (const auto* c = std::get_if<ConstPos>(&pos)) {
    out += "ConstPos(" + std::to_string(c->n) + ")";
    return;
  }
  const auto& r = std::get<RegexPos>(pos);
  out += "Regex(";
  if (const auto* kind = std::get_if<RegexKind>(&r.pattern)) {
    out += regex_kind_name(*kind);
  } else {
    render_quoted(out, std::get<Delimiter>(r.pattern).text());
  }
  out += ", " + std::to_string(r.k) + ", ";
  out += r.boundary == Boundary::Start ? "Start" : "End";
  out += ")";
}

void render_expression(std::string& out, const Expression& expr) {
  if (const auto* c = std::get_if<ConstStr>(&expr)) {
    out += "ConstStr(";
    render_quoted(out, c->value.text());
    out += ")";
    return;
  }
  const auto& s = std::get<SubStr>(expr);
  out += "SubStr(";
  render_position(out, s.start);
  out += ", ";
  render_position(out, s.end);
  out += ")";
}

bool valid_position(const Position& pos) {
  if (const auto* c = std::get_if<ConstPos>(&pos)) return c->n >= -kMaxConstPos && c->n <= kMaxConstPos;
  const auto& r = std::get<RegexPos>(pos);
  if (const auto* d = std::get_if<Delimiter>(&r.pattern)) {
    if (d->index < 0 || d->index >= kNumDelimiters) return false;
  }
  return r.k >= -kMaxMatchIndex && r.k <= kMaxMatchIndex;
}

}  // namespace

std::string_view regex_kind_name(RegexKind kind) {
  return kRegexKindNames[static_cast<std::size_t>(kind)];
}

std::optional<RegexKind> regex_kind_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kRegexKindNames.size(); ++i) {
    if (kRegexKindNames[i] == name) return static_cast<RegexKind>(i);
  }
  return std::nullopt;
}

std::optional<int> delimiter_index(std::string_view text) {
  for (int i = 0; i < kNumDelimiters; ++i) {
    if (kDelimiters[static_cast<std::size_t>(i)] == text) return i;
  }
  return std::nullopt;
}

std::string_view exec_error_name(ExecErrorKind kind) {
  switch (kind) {
    case ExecErrorKind::NoSuchMatch:
      return "NoSuchMatch";
    case ExecErrorKind::PositionOutOfRange:
      return "PositionOutOfRange";
    case ExecErrorKind::EmptyOrInvertedSubstring:
      return "EmptyOrInvertedSubstring";
    case ExecErrorKind::ZeroMatchIndex:
      return "ZeroMatchIndex";
  }
  return "?";
}

std::string ParseError::message() const {
  return "parse error at offset " + std::to_string(offset) + ": expected " + expected;
}

ParseResult parse(std::string_view text) { return Parser(text).program(); }

Program parse_or_throw(std::string_view text) {
  auto result = parse(text);
  if (auto* err = std::get_if<ParseError>(&result)) throw std::invalid_argument(err->message());
  return std::get<Program>(std::move(result));
}

std::string render(const Expression& expr) {
  std::string out;
  render_expression(out, expr);
  return out;
}

std::string render(const Program& program) {
  std::string out = "Concat(";
  for (std::size_t i = 0; i < program.expressions.size(); ++i) {
    if (i > 0) out += ", ";
    render_expression(out, program.expressions[i]);
  }
  out += ")";
  return out;
}

bool is_valid(const Program& program) {
  int n = program_length(program);
  if (n < 1 || n > kMaxExpressions) return false;
  for (const auto& e : program.expressions) {
    if (const auto* c = std::get_if<ConstStr>(&e)) {
      if (c->value.index < 0 || c->value.index >= kNumDelimiters) return false;
    } else {
      const auto& s = std::get<SubStr>(e);
      if (!valid_position(s.start) || !valid_position(s.end)) return false;
    }
  }
  return true;
}

std::vector<Match> regex_matches(const MatchPattern& pattern, std::string_view input) {
  std::vector<Match> out;
  if (const auto* d = std::get_if<Delimiter>(&pattern)) {
    std::string_view lit = d->text();
    std::size_t at = input.find(lit);
    while (at != std::string_view::npos) {
      out.push_back({static_cast<int>(at), static_cast<int>(at + lit.size())});
      at = input.find(lit, at + lit.size());
    }
    return out;
  }
  RegexKind kind = std::get<RegexKind>(pattern);
  std::size_t i = 0;
  while (i < input.size()) {
    int len = match_length_at(kind, input, i);
    if (len > 0) {
      out.push_back({static_cast<int>(i), static_cast<int>(i) + len});
      i += static_cast<std::size_t>(len);
    } else {
      ++i;
    }
  }
  return out;
}

PositionResult eval_position(const Position& pos, std::string_view input) {
  const int len = static_cast<int>(input.size());
  if (const auto* c = std::get_if<ConstPos>(&pos)) {
    int at = c->n >= 0 ? c->n : len + c->n + 1;
    if (at < 0 || at > len) return ExecError{ExecErrorKind::PositionOutOfRange};
    return at;
  }
  const auto& r = std::get<RegexPos>(pos);
  if (r.k == 0) return ExecError{ExecErrorKind::ZeroMatchIndex};
  auto matches = regex_matches(r.pattern, input);
  const int count = static_cast<int>(matches.size());
  const int idx = r.k > 0 ? r.k - 1 : count + r.k;
  if (idx < 0 || idx >= count) return ExecError{ExecErrorKind::NoSuchMatch};
  const Match& m = matches[static_cast<std::size_t>(idx)];
  return r.boundary == Boundary::Start ? m.start : m.end;
}

ExecResult execute(const Program& program, std::string_view input) {
  std::string out;
  for (std::size_t i = 0; i < program.expressions.size(); ++i) {
    const int index = static_cast<int>(i);
    const Expression& e = program.expressions[i];
    if (const auto* c = std::get_if<ConstStr>(&e)) {
      out += c->value.text();
      continue;
    }
    const auto& s = std::get<SubStr>(e);
    auto p1 = eval_position(s.start, input);
    if (auto* err = std::get_if<ExecError>(&p1)) return ExecError{err->kind, index};
    auto p2 = eval_position(s.end, input);
    if (auto* err = std::get_if<ExecError>(&p2)) return ExecError{err->kind, index};
    const int a = std::get<int>(p1);
    const int b = std::get<int>(p2);
    if (a >= b) return ExecError{ExecErrorKind::EmptyOrInvertedSubstring, index};
    out += input.substr(static_cast<std::size_t>(a), static_cast<std::size_t>(b - a));
  }
  return out;
}

}  // namespace pbe
