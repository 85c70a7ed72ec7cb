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

// Program <-> token sequence linearization and character encodings.
//
// A program linearizes in pre-order with no parentheses and no Concat token:
//   ConstStr  LIT
//   SubStr    POS POS
//   POS  :=   Regex (KIND | LIT) INT (Start | End)  |  ConstPos INT
// followed by a single EOS.

#ifndef PBE_VOCAB_HPP
#define PBE_VOCAB_HPP

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pbe/dsl.hpp"

namespace pbe {

inline constexpr int kMaxTokens = 128;  // T_max, EOS included

namespace tok {
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kConstStr = 3;
inline constexpr int kSubStr = 4;
inline constexpr int kRegex = 5;
inline constexpr int kConstPos = 6;
inline constexpr int kStart = 7;
inline constexpr int kEnd = 8;
inline constexpr int kFirstKind = 9;
inline constexpr int kFirstLiteral = kFirstKind + kNumRegexKinds;
inline constexpr int kFirstInt = kFirstLiteral + kNumDelimiters;  // holds -L
inline constexpr int kVocabSize = kFirstInt + 2 * kMaxConstPos + 1;

constexpr int kind(RegexKind k) { return kFirstKind + static_cast<int>(k); }
constexpr int literal(Delimiter d) { return kFirstLiteral + d.index; }
constexpr int integer(int v) { return kFirstInt + kMaxConstPos + v; }
}  // namespace tok

using TokenSeq = std::vector<int>;

// Printable name of every token id, in id order. Emitted into checkpoint
// manifests so ids can be checked across runs.
const std::vector<std::string>& token_names();
std::string_view token_name(int id);

class SequenceTooLong : public std::length_error {
 public:
  using std::length_error::length_error;
};

TokenSeq program_to_tokens(const Program& program);

struct DecodeError {
  std::size_t position = 0;
  std::string reason;
};
using DecodeResult = std::variant<Program, DecodeError>;

DecodeResult tokens_to_program(std::span<const int> tokens);

// ---------------------------------------------------------------------------
// Character encoding of IO strings.

namespace chr {
inline constexpr int kPad = 0;
inline constexpr int kDummy = 1;
inline constexpr int kFail = 2;
inline constexpr int kFirstPrintable = 3;  // ' ' (0x20)
inline constexpr int kVocabSize = kFirstPrintable + (0x7E - 0x20 + 1);
}  // namespace chr

class EncodeError : public std::invalid_argument {
 public:
  enum class Kind { StringTooLong, InvalidCharacter };
  EncodeError(Kind kind, const std::string& what) : std::invalid_argument(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

bool is_printable_ascii(std::string_view s);

std::vector<int> encode_string(std::string_view s, int width = kMaxStringLength);

// Third slot of an encoded triplet.
struct ExecutedSlot {
  enum class Kind { Dummy, Fail, Output };
  Kind kind = Kind::Dummy;
  std::string text;

  static ExecutedSlot dummy() { return {}; }
  static ExecutedSlot fail() { return {Kind::Fail, {}}; }
  static ExecutedSlot output(std::string s) { return {Kind::Output, std::move(s)}; }
  friend bool operator==(const ExecutedSlot&, const ExecutedSlot&) = default;
};

// Three width-wide blocks: input, desired output, executed output. Executed
// outputs longer than `width` are truncated; input and output are not.
std::vector<int> encode_triplet(std::string_view input, std::string_view output,
                                const ExecutedSlot& executed, int width = kMaxStringLength);

// Appends into an existing buffer; used by the batched model paths.
void encode_triplet_into(std::vector<int>& out, std::string_view input, std::string_view output,
                         const ExecutedSlot& executed, int width);

}  // namespace pbe

#endif  // PBE_VOCAB_HPP
