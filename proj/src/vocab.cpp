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

#include "pbe/vocab.hpp"

#include <algorithm>
#include <cstdlib>

namespace pbe {

namespace {

std::vector<std::string> build_token_names() {
  std::vector<std::string> names(tok::kVocabSize);
  names[tok::kPad] = "<pad>";
  names[tok::kBos] = "<bos>";
  names[tok::kEos] = "<eos>";
  names[tok::kConstStr] = "ConstStr";
  names[tok::kSubStr] = "SubStr";
  names[tok::kRegex] = "Regex";
  names[tok::kConstPos] = "ConstPos";
  names[tok::kStart] = "Start";
  names[tok::kEnd] = "End";
  for (int i = 0; i < kNumRegexKinds; ++i) {
    names[static_cast<std::size_t>(tok::kFirstKind + i)] = regex_kind_name(static_cast<RegexKind>(i));
  }
  for (int i = 0; i < kNumDelimiters; ++i) {
    names[static_cast<std::size_t>(tok::kFirstLiteral + i)] =
        "\"" + std::string(kDelimiters[static_cast<std::size_t>(i)]) + "\"";
  }
  for (int v = -kMaxConstPos; v <= kMaxConstPos; ++v) {
    names[static_cast<std::size_t>(tok::integer(v))] = std::to_string(v);
  }
  return names;
}

void emit_position(TokenSeq& out, const Position& pos) {
  if (const auto* c = std::get_if<ConstPos>(&pos)) {
    out.push_back(tok::kConstPos);
    out.push_back(tok::integer(c->n));
    return;
  }
  const auto& r = std::get<RegexPos>(pos);
  out.push_back(tok::kRegex);
  if (const auto* kind = std::get_if<RegexKind>(&r.pattern)) {
    out.push_back(tok::kind(*kind));
  } else {
    out.push_back(tok::literal(std::get<Delimiter>(r.pattern)));
  }
  out.push_back(tok::integer(r.k));
  out.push_back(r.boundary == Boundary::Start ? tok::kStart : tok::kEnd);
}

bool is_literal(int t) { return t >= tok::kFirstLiteral && t < tok::kFirstInt; }
bool is_kind(int t) { return t >= tok::kFirstKind && t < tok::kFirstLiteral; }
bool is_int(int t) { return t >= tok::kFirstInt && t < tok::kVocabSize; }
int int_value(int t) { return t - tok::kFirstInt - kMaxConstPos; }

class TokenReader {
 public:
  explicit TokenReader(std::span<const int> tokens) : tokens_(tokens) {}

  DecodeResult program() {
    Program p;
    while (true) {
      if (at_ >= tokens_.size()) return err("truncated before <eos>");
      int t = tokens_[at_];
      if (t == tok::kEos) {
        if (p.expressions.empty()) return err("empty program");
        if (at_ + 1 != tokens_.size()) return DecodeError{at_ + 1, "tokens after <eos>"};
        return p;
      }
      if (program_length(p) == kMaxExpressions) return err("more than 10 expressions");
      ++at_;
      if (t == tok::kConstStr) {
        if (at_ >= tokens_.size() || !is_literal(tokens_[at_])) return err("string literal");
        p.expressions.emplace_back(ConstStr{Delimiter{tokens_[at_++] - tok::kFirstLiteral}});
      } else if (t == tok::kSubStr) {
        SubStr s;
        if (!position(s.start) || !position(s.end)) return error_;
        p.expressions.emplace_back(std::move(s));
      } else {
        --at_;
        return err("ConstStr or SubStr");
      }
    }
  }

 private:
  DecodeError err(std::string reason) {
    error_ = DecodeError{at_, std::move(reason)};
    return error_;
  }

  bool fail(std::string reason) {
    err(std::move(reason));
    return false;
  }

  bool next(int& t) {
    if (at_ >= tokens_.size()) return fail("truncated expression");
    t = tokens_[at_++];
    return true;
  }

  bool position(Position& out) {
    int t = 0;
    if (!next(t)) return false;
    if (t == tok::kConstPos) {
      if (!next(t)) return false;
      if (!is_int(t)) return fail("integer");
      out = ConstPos{int_value(t)};
      return true;
    }
    if (t != tok::kRegex) return fail("Regex or ConstPos");
    RegexPos r;
    if (!next(t)) return false;
    if (is_kind(t)) {
      r.pattern = static_cast<RegexKind>(t - tok::kFirstKind);
    } else if (is_literal(t)) {
      r.pattern = Delimiter{t - tok::kFirstLiteral};
    } else {
      return fail("regex token or literal");
    }
    if (!next(t)) return false;
    if (!is_int(t) || std::abs(int_value(t)) > kMaxMatchIndex) return fail("match index in [-5, 5]");
    r.k = int_value(t);
    if (!next(t)) return false;
    if (t != tok::kStart && t != tok::kEnd) return fail("Start or End");
    r.boundary = t == tok::kStart ? Boundary::Start : Boundary::End;
    out = r;
    return true;
  }

  std::span<const int> tokens_;
  std::size_t at_ = 0;
  DecodeError error_;
};

}  // namespace

const std::vector<std::string>& token_names() {
  static const std::vector<std::string> names = build_token_names();
  return names;
}

std::string_view token_name(int id) {
  const auto& names = token_names();
  if (id < 0 || id >= static_cast<int>(names.size())) return "<invalid>";
  return names[static_cast<std::size_t>(id)];
}

TokenSeq program_to_tokens(const Program& program) {
  TokenSeq out;
  for (const auto& e : program.expressions) {
    if (const auto* c = std::get_if<ConstStr>(&e)) {
      out.push_back(tok::kConstStr);
      out.push_back(tok::literal(c->value));
    } else {
      const auto& s = std::get<SubStr>(e);
      out.push_back(tok::kSubStr);
      emit_position(out, s.start);
      emit_position(out, s.end);
    }
  }
  out.push_back(tok::kEos);
  if (out.size() > static_cast<std::size_t>(kMaxTokens)) {
    throw SequenceTooLong("program linearizes to " + std::to_string(out.size()) + " tokens");
  }
  return out;
}

DecodeResult tokens_to_program(std::span<const int> tokens) {
  return TokenReader(tokens).program();
}

bool is_printable_ascii(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c >= 0x20 && c <= 0x7E; });
}

namespace {

void append_string(std::vector<int>& out, std::string_view s, int width) {
  if (static_cast<int>(s.size()) > width) {
    throw EncodeError(EncodeError::Kind::StringTooLong,
                      "string of length " + std::to_string(s.size()) + " exceeds width " + std::to_string(width));
  }
  for (char c : s) {
    if (c < 0x20 || c > 0x7E) {
      throw EncodeError(EncodeError::Kind::InvalidCharacter,
                        "non-printable character code " + std::to_string(static_cast<unsigned char>(c)));
    }
    out.push_back(chr::kFirstPrintable + (c - 0x20));
  }
  out.insert(out.end(), static_cast<std::size_t>(width) - s.size(), chr::kPad);
}

}  // namespace

std::vector<int> encode_string(std::string_view s, int width) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(width));
  append_string(out, s, width);
  return out;
}

void encode_triplet_into(std::vector<int>& out, std::string_view input, std::string_view output,
                         const ExecutedSlot& executed, int width) {
  append_string(out, input, width);
  append_string(out, output, width);
  switch (executed.kind) {
    case ExecutedSlot::Kind::Dummy:
      out.insert(out.end(), static_cast<std::size_t>(width), chr::kDummy);
      break;
    case ExecutedSlot::Kind::Fail:
      out.push_back(chr::kFail);
      out.insert(out.end(), static_cast<std::size_t>(width) - 1, chr::kPad);
      break;
    case ExecutedSlot::Kind::Output: {
      std::string_view text = executed.text;
      if (static_cast<int>(text.size()) > width) text = text.substr(0, static_cast<std::size_t>(width));
      append_string(out, text, width);
      break;
    }
  }
}

std::vector<int> encode_triplet(std::string_view input, std::string_view output, const ExecutedSlot& executed,
                                int width) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(3 * width));
  encode_triplet_into(out, input, output, executed, width);
  return out;
}

}  // namespace pbe
