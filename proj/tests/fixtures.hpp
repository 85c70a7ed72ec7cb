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

#ifndef PBE_TESTS_FIXTURES_HPP
#define PBE_TESTS_FIXTURES_HPP

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "pbe/dsl.hpp"
#include "pbe/taskgen.hpp"

namespace pbe::testing {

// Name / phone-number formatting task.
inline constexpr const char* kNamePhoneProgram =
    "Concat(SubStr(ConstPos(0), ConstPos(1)),\n"
    "       ConstStr(\". \"),\n"
    "       SubStr(Regex(Word, -1, Start),\n"
    "              Regex(\",\", 1, Start)),\n"
    "       ConstStr(\" : \"),\n"
    "       SubStr(Regex(Num, 1, Start),\n"
    "              Regex(\"-\", 1, Start)))";

inline const std::array<std::pair<std::string, std::string>, 4> kNamePhoneRows = {{
    {"Mark Henry, 521-625-2716", "M. Henry : 521"},
    {"Barry M. Myers, 617-278-8787", "B. Myers : 617"},
    {"Michael Jones, 425-267-2871", "M. Jones : 425"},
    {"Jon Sanders, 617-225-9819", "J. Sanders : 617"},
}};

inline Task name_phone_task() {
  Task t;
  t.program = parse_or_throw(kNamePhoneProgram);
  for (const auto& [i, o] : kNamePhoneRows) t.examples.push_back({i, o});
  return t;
}

}  // namespace pbe::testing

#endif  // PBE_TESTS_FIXTURES_HPP
