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

#include "pbe/taskgen.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <fstream>
#include <map>

#include "json.hpp"
#include "pbe/vocab.hpp"

namespace pbe {

using nlohmann::json;

void GenConfig::validate() const {
  if (max_expressions < 1 || max_expressions > kMaxExpressions) {
    throw std::invalid_argument("max_expressions must be in [1, 10]");
  }
  if (max_io_len < 1 || max_io_len > kMaxStringLength) throw std::invalid_argument("max_io_len must be in [1, 80]");
  if (!length_weights.empty()) {
    if (static_cast<int>(length_weights.size()) != max_expressions) {
      throw std::invalid_argument("length_weights must have max_expressions entries");
    }
    double total = 0;
    for (double w : length_weights) {
      if (!(w >= 0)) throw std::invalid_argument("length weights must be nonnegative");
      total += w;
    }
    if (!(total > 0)) throw std::invalid_argument("length weights must not all be zero");
  }
}

std::vector<double> GenConfig::effective_length_weights() const {
  if (!length_weights.empty()) return length_weights;
  return std::vector<double>(static_cast<std::size_t>(max_expressions), 1.0);
}

namespace {

MatchPattern sample_pattern(Rng& rng) {
  // r := s | t, each side equally likely.
  if (rng.bernoulli(0.5)) return static_cast<RegexKind>(rng.uniform(kNumRegexKinds));
  return Delimiter{static_cast<int>(rng.uniform(kNumDelimiters))};
}

Position sample_position(Rng& rng) {
  if (rng.bernoulli(0.5)) {
    RegexPos r;
    r.pattern = sample_pattern(rng);
    int k = rng.uniform_int(1, kMaxMatchIndex);
    r.k = rng.bernoulli(0.5) ? k : -k;
    r.boundary = rng.bernoulli(0.5) ? Boundary::Start : Boundary::End;
    return r;
  }
  return ConstPos{rng.uniform_int(-kMaxConstPos, kMaxConstPos)};
}

Expression sample_expression(Rng& rng) {
  if (rng.bernoulli(0.5)) return ConstStr{Delimiter{static_cast<int>(rng.uniform(kNumDelimiters))}};
  Position p1 = sample_position(rng);
  Position p2 = sample_position(rng);
  return SubStr{std::move(p1), std::move(p2)};
}

char random_upper(Rng& rng) { return static_cast<char>('A' + rng.uniform(26)); }
char random_lower(Rng& rng) { return static_cast<char>('a' + rng.uniform(26)); }
char random_digit(Rng& rng) { return static_cast<char>('0' + rng.uniform(10)); }

std::string random_run(Rng& rng, int lo, int hi, char (*gen)(Rng&)) {
  std::string s;
  int n = rng.uniform_int(lo, hi);
  for (int i = 0; i < n; ++i) s.push_back(gen(rng));
  return s;
}

std::string prop_case_word(Rng& rng) {
  std::string s(1, random_upper(rng));
  return s + random_run(rng, 1, 5, random_lower);
}

// A short string that matches `kind` at least once.
std::string materialize(Rng& rng, RegexKind kind) {
  switch (kind) {
    case RegexKind::Word: {
      double u = rng.unit();
      if (u < 0.5) return prop_case_word(rng);
      if (u < 0.8) return random_run(rng, 2, 5, random_lower);
      return random_run(rng, 1, 4, random_upper);
    }
    case RegexKind::Num:
      return random_run(rng, 1, 3, random_digit);
    case RegexKind::Alphanum: {
      std::string s;
      int n = rng.uniform_int(2, 5);
      for (int i = 0; i < n; ++i) {
        double u = rng.unit();
        s.push_back(u < 0.4 ? random_lower(rng) : u < 0.7 ? random_upper(rng) : random_digit(rng));
      }
      return s;
    }
    case RegexKind::AllCaps:
      return random_run(rng, 1, 4, random_upper);
    case RegexKind::PropCase:
      return prop_case_word(rng);
    case RegexKind::Lower:
      return random_run(rng, 2, 5, random_lower);
    case RegexKind::Digit:
      return random_run(rng, 1, 2, random_digit);
    case RegexKind::Char: {
      double u = rng.unit();
      return std::string(1, u < 0.4 ? random_lower(rng) : u < 0.7 ? random_upper(rng) : random_digit(rng));
    }
  }
  return {};
}

std::string materialize(Rng& rng, const MatchPattern& pattern) {
  if (const auto* kind = std::get_if<RegexKind>(&pattern)) return materialize(rng, *kind);
  return std::string(std::get<Delimiter>(pattern).text());
}

// Filler between materialized pieces: lowercase 0.4, digit 0.2, space 0.4.
std::string filler(Rng& rng, int lo, int hi) {
  static constexpr std::array<double, 3> kWeights = {0.4, 0.2, 0.4};
  std::string s;
  int n = rng.uniform_int(lo, hi);
  for (int i = 0; i < n; ++i) {
    switch (rng.weighted(kWeights)) {
      case 0:
        s.push_back(random_lower(rng));
        break;
      case 1:
        s.push_back(random_digit(rng));
        break;
      default:
        s.push_back(' ');
        break;
    }
  }
  return s;
}

std::string separator(Rng& rng) {
  static constexpr std::array<double, 3> kWeights = {0.55, 0.15, 0.30};
  switch (rng.weighted(kWeights)) {
    case 0:
      return " ";
    case 1:
      return "";
    default:
      return filler(rng, 1, 3);
  }
}

struct PatternLess {
  bool operator()(const MatchPattern& a, const MatchPattern& b) const {
    auto key = [](const MatchPattern& p) {
      if (const auto* k = std::get_if<RegexKind>(&p)) return static_cast<int>(*k);
      return kNumRegexKinds + std::get<Delimiter>(p).index;
    };
    return key(a) < key(b);
  }
};

struct Demands {
  std::map<MatchPattern, int, PatternLess> matches;  // pattern -> required count
  int min_length = 0;
};

void add_demand(Demands& d, const Position& pos) {
  if (const auto* c = std::get_if<ConstPos>(&pos)) {
    d.min_length = std::max(d.min_length, c->n >= 0 ? c->n : -c->n - 1);
    return;
  }
  const auto& r = std::get<RegexPos>(pos);
  int& need = d.matches[r.pattern];
  need = std::max(need, std::abs(r.k));
}

Demands collect_demands(const Program& program) {
  Demands d;
  for (const auto& e : program.expressions) {
    if (const auto* s = std::get_if<SubStr>(&e)) {
      add_demand(d, s->start);
      add_demand(d, s->end);
    }
  }
  return d;
}

std::string construct_input(Rng& rng, const Demands& demands) {
  std::vector<std::string> pieces;
  for (const auto& [pattern, count] : demands.matches) {
    int n = count + (rng.bernoulli(0.3) ? 1 : 0);
    for (int i = 0; i < n; ++i) pieces.push_back(materialize(rng, pattern));
  }
  int extra = rng.uniform_int(pieces.empty() ? 1 : 0, 2);
  for (int i = 0; i < extra; ++i) pieces.push_back(materialize(rng, sample_pattern(rng)));
  // Fisher-Yates with the portable generator.
  for (std::size_t i = pieces.size(); i > 1; --i) std::swap(pieces[i - 1], pieces[rng.uniform(i)]);

  std::string s;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (i > 0) s += separator(rng);
    s += pieces[i];
  }
  if (static_cast<int>(s.size()) < demands.min_length) {
    s += filler(rng, demands.min_length - static_cast<int>(s.size()), demands.min_length - static_cast<int>(s.size()));
  }
  return s;
}

}  // namespace

Program sample_program(Rng& rng, const GenConfig& config) {
  const auto weights = config.effective_length_weights();
  const int length = static_cast<int>(rng.weighted(weights)) + 1;
  Program p;
  p.expressions.reserve(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) p.expressions.push_back(sample_expression(rng));
  return p;
}

std::optional<std::string> sample_compatible_input(Rng& rng, const Program& program, const GenConfig& config,
                                                   int* attempts) {
  const Demands demands = collect_demands(program);
  for (int attempt = 1; attempt <= kInputAttempts; ++attempt) {
    if (attempts) *attempts = attempt;
    std::string input = construct_input(rng, demands);
    if (static_cast<int>(input.size()) > config.max_io_len) continue;
    auto out = execute(program, input);
    const auto* s = std::get_if<std::string>(&out);
    if (!s || static_cast<int>(s->size()) > config.max_io_len) continue;
    return input;
  }
  return std::nullopt;
}

Task generate_task(Rng& rng, const GenConfig& config) {
  // Each outer round draws up to kProgramResamples programs; in practice the
  // first round almost always succeeds.
  while (true) {
    for (int resample = 0; resample < kProgramResamples; ++resample) {
      Task task;
      task.program = sample_program(rng, config);
      bool ok = true;
      for (int n = 0; n < kNumExamples && ok; ++n) {
        auto input = sample_compatible_input(rng, task.program, config);
        if (!input) {
          ok = false;
          break;
        }
        auto out = std::get<std::string>(execute(task.program, *input));
        task.examples.push_back({std::move(*input), std::move(out)});
      }
      if (ok && task_is_sound(task, config.max_io_len)) return task;
    }
  }
}

Task generate_task_at(const GenConfig& config, SeedDomain domain, std::uint64_t index) {
  Rng rng = Rng::stream(config.seed, domain, index);
  return generate_task(rng, config);
}

std::vector<Task> generate_tasks(const GenConfig& config, SeedDomain domain, std::uint64_t first_index,
                                 std::size_t count, Exec exec) {
  config.validate();
  std::vector<Task> tasks(count);
  for_each_index(count, exec, [&](std::size_t i) { tasks[i] = generate_task_at(config, domain, first_index + i); });
  return tasks;
}

bool task_is_sound(const Task& task, int max_io_len) {
  if (!is_valid(task.program) || task.examples.size() != kNumExamples) return false;
  for (const auto& ex : task.examples) {
    if (static_cast<int>(ex.input.size()) > max_io_len || static_cast<int>(ex.output.size()) > max_io_len) {
      return false;
    }
    if (!is_printable_ascii(ex.input) || !is_printable_ascii(ex.output)) return false;
    auto out = execute(task.program, ex.input);
    const auto* s = std::get_if<std::string>(&out);
    if (!s || *s != ex.output) return false;
  }
  return true;
}

std::string task_to_json_line(const Task& task) {
  json examples = json::array();
  for (const auto& ex : task.examples) examples.push_back({{"i", ex.input}, {"o", ex.output}});
  json j = {{"program", render(task.program)}, {"examples", std::move(examples)}};
  return j.dump();
}

Task task_from_json_line(const std::string& line, std::size_t line_number) {
  auto violation = [&](const std::string& what) {
    return CorpusError("line " + std::to_string(line_number) + ": " + what, line_number);
  };
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw violation("not a JSON object");
  if (!j.contains("program") || !j["program"].is_string()) throw violation("missing string field \"program\"");
  if (!j.contains("examples") || !j["examples"].is_array()) throw violation("missing array field \"examples\"");
  Task task;
  auto parsed = parse(j["program"].get<std::string>());
  if (auto* err = std::get_if<ParseError>(&parsed)) throw violation(err->message());
  task.program = std::get<Program>(std::move(parsed));
  for (const auto& ex : j["examples"]) {
    if (!ex.is_object() || !ex.contains("i") || !ex.contains("o") || !ex["i"].is_string() || !ex["o"].is_string()) {
      throw violation("example must be {\"i\": str, \"o\": str}");
    }
    task.examples.push_back({ex["i"].get<std::string>(), ex["o"].get<std::string>()});
  }
  if (task.examples.size() != kNumExamples) throw violation("expected 4 examples");
  if (!task_is_sound(task)) throw violation("examples are not consistent with the program");
  return task;
}

void write_corpus(std::span<const Task> tasks, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CorpusError("cannot open " + path.string() + " for writing", 0);
  for (const auto& task : tasks) out << task_to_json_line(task) << '\n';
  if (!out) throw CorpusError("write failed: " + path.string(), 0);
}

std::vector<Task> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path.string(), 0);
  std::vector<Task> tasks;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    tasks.push_back(task_from_json_line(line, line_number));
  }
  return tasks;
}

}  // namespace pbe
