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

#include <set>
#include <string>

#include "doctest.h"
#include "fixtures.hpp"
#include "pbe/rng.hpp"
#include "pbe/taskgen.hpp"
#include "pbe/vocab.hpp"

using namespace pbe;

TEST_CASE("token vocabulary is a bijection") {
  const auto& names = token_names();
  CHECK(static_cast<int>(names.size()) == tok::kVocabSize);
  CHECK(std::set<std::string>(names.begin(), names.end()).size() == names.size());
  CHECK(token_name(tok::kEos) == names[tok::kEos]);
  CHECK(tok::integer(-kMaxConstPos) == tok::kFirstInt);
  CHECK(tok::integer(kMaxConstPos) == tok::kVocabSize - 1);
}

TEST_CASE("single ConstStr linearization") {
  const Program p = parse_or_throw("Concat(ConstStr(\". \"))");
  const TokenSeq t = program_to_tokens(p);
  CHECK(t == TokenSeq{tok::kConstStr, tok::literal(Delimiter{*delimiter_index(". ")}), tok::kEos});
}

TEST_CASE("name/phone program round-trips through tokens") {
  const Program p = parse_or_throw(testing::kNamePhoneProgram);
  const TokenSeq t = program_to_tokens(p);
  CHECK(t.back() == tok::kEos);
  auto back = tokens_to_program(t);
  REQUIRE(std::holds_alternative<Program>(back));
  CHECK(std::get<Program>(back) == p);
}

TEST_CASE("sampled programs round-trip through tokens") {
  GenConfig config;
  Rng rng = Rng::stream(21, SeedDomain::Corpus, 0);
  for (int i = 0; i < 10000; ++i) {
    const Program p = sample_program(rng, config);
    const TokenSeq t = program_to_tokens(p);
    CHECK(t.size() <= static_cast<std::size_t>(kMaxTokens));
    auto back = tokens_to_program(t);
    REQUIRE(std::holds_alternative<Program>(back));
    CHECK(std::get<Program>(back) == p);
  }
}

TEST_CASE("decode errors") {
  CHECK(std::holds_alternative<DecodeError>(tokens_to_program(TokenSeq{tok::kEos})));
  CHECK(std::holds_alternative<DecodeError>(tokens_to_program(TokenSeq{})));
  const TokenSeq full = program_to_tokens(parse_or_throw(testing::kNamePhoneProgram));
  for (std::size_t cut = 0; cut + 1 < full.size(); ++cut) {
    CHECK(std::holds_alternative<DecodeError>(tokens_to_program(std::span<const int>(full.data(), cut))));
  }
  // Out-of-range match index and a literal where a constructor belongs.
  CHECK(std::holds_alternative<DecodeError>(tokens_to_program(TokenSeq{
      tok::kSubStr, tok::kRegex, tok::kind(RegexKind::Word), tok::integer(7), tok::kStart, tok::kConstPos,
      tok::integer(1), tok::kEos})));
  CHECK(std::holds_alternative<DecodeError>(tokens_to_program(TokenSeq{tok::integer(1), tok::kEos})));
  CHECK(std::holds_alternative<DecodeError>(tokens_to_program(TokenSeq{tok::kPad})));
  // Tokens after EOS.
  CHECK(std::holds_alternative<DecodeError>(tokens_to_program(
      TokenSeq{tok::kConstStr, tok::literal(Delimiter{0}), tok::kEos, tok::kEos})));
}

TEST_CASE("arbitrary token sequences decode or fail cleanly") {
  Rng rng = Rng::stream(22, SeedDomain::Corpus, 0);
  int ok = 0;
  for (int i = 0; i < 20000; ++i) {
    TokenSeq t;
    const int len = rng.uniform_int(0, 20);
    for (int j = 0; j < len; ++j) t.push_back(rng.uniform_int(0, tok::kVocabSize - 1));
    auto r = tokens_to_program(t);
    if (auto* p = std::get_if<Program>(&r)) {
      ++ok;
      CHECK(is_valid(*p));
      CHECK(program_to_tokens(*p) == t);
    }
  }
  CHECK(ok < 20000);
}

TEST_CASE("encode_string") {
  CHECK(encode_string("") == std::vector<int>(80, chr::kPad));
  const auto ab = encode_string("ab");
  CHECK(ab.size() == 80);
  CHECK(ab[0] == chr::kFirstPrintable + ('a' - 0x20));
  CHECK(ab[1] == chr::kFirstPrintable + ('b' - 0x20));
  CHECK(std::all_of(ab.begin() + 2, ab.end(), [](int c) { return c == chr::kPad; }));
  CHECK(encode_string(std::string(80, 'x')).size() == 80);
  try {
    encode_string(std::string(81, 'x'));
    FAIL("expected StringTooLong");
  } catch (const EncodeError& e) {
    CHECK(e.kind() == EncodeError::Kind::StringTooLong);
  }
  try {
    encode_string("tab\there");
    FAIL("expected InvalidCharacter");
  } catch (const EncodeError& e) {
    CHECK(e.kind() == EncodeError::Kind::InvalidCharacter);
  }
}

TEST_CASE("char ids are a bijection over printable ASCII") {
  std::set<int> ids;
  for (char c = 0x20; c <= 0x7E; ++c) {
    const int id = encode_string(std::string(1, c), 1)[0];
    CHECK(id != chr::kPad);
    CHECK(id != chr::kDummy);
    CHECK(id != chr::kFail);
    CHECK(id < chr::kVocabSize);
    ids.insert(id);
  }
  CHECK(ids.size() == 95);
}

TEST_CASE("encode_triplet") {
  const auto& [in, out] = testing::kNamePhoneRows[0];
  const auto dummy = encode_triplet(in, out, ExecutedSlot::dummy());
  CHECK(dummy.size() == 240);
  CHECK(std::vector<int>(dummy.begin(), dummy.begin() + 80) == encode_string(in));
  CHECK(std::vector<int>(dummy.begin() + 80, dummy.begin() + 160) == encode_string(out));
  CHECK(std::all_of(dummy.begin() + 160, dummy.end(), [](int c) { return c == chr::kDummy; }));

  const auto fail = encode_triplet(in, out, ExecutedSlot::fail());
  CHECK(fail[160] == chr::kFail);
  CHECK(std::all_of(fail.begin() + 161, fail.end(), [](int c) { return c == chr::kPad; }));

  const auto exec = encode_triplet(in, out, ExecutedSlot::output("M. Henry : 521"));
  CHECK(std::vector<int>(exec.begin() + 160, exec.end()) == encode_string("M. Henry : 521"));

  // Empty output is distinct from a failure.
  const auto empty = encode_triplet(in, out, ExecutedSlot::output(""));
  CHECK(empty != fail);
  CHECK(encode_triplet("", "", ExecutedSlot::output(std::string(100, 'z'))).size() == 240);
}
