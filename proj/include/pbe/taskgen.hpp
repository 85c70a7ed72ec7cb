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

// Synthetic task generation: random programs plus inputs constructed to
// satisfy them, and the JSONL corpus format.

#ifndef PBE_TASKGEN_HPP
#define PBE_TASKGEN_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pbe/dsl.hpp"
#include "pbe/parallel.hpp"
#include "pbe/rng.hpp"

namespace pbe {

inline constexpr int kNumExamples = 4;
inline constexpr int kInputAttempts = 50;
inline constexpr int kProgramResamples = 20;

struct Example {
  std::string input;
  std::string output;
  friend bool operator==(const Example&, const Example&) = default;
};

struct Task {
  Program program;
  std::vector<Example> examples;
  friend bool operator==(const Task&, const Task&) = default;
};

struct GenConfig {
  int max_expressions = kMaxExpressions;
  int max_io_len = kMaxStringLength;
  std::uint64_t seed = 0;
  // Weight of lengths 1..max_expressions; empty means uniform.
  std::vector<double> length_weights;

  // Throws std::invalid_argument.
  void validate() const;
  std::vector<double> effective_length_weights() const;
};

Program sample_program(Rng& rng, const GenConfig& config);

// Returns nullopt (give-up) after kInputAttempts failed constructions.
// `attempts` receives the number of constructions tried.
std::optional<std::string> sample_compatible_input(Rng& rng, const Program& program, const GenConfig& config,
                                                   int* attempts = nullptr);

Task generate_task(Rng& rng, const GenConfig& config);

// Task `index` of the stream (config.seed, domain). Independent of how the
// indices are distributed over workers.
Task generate_task_at(const GenConfig& config, SeedDomain domain, std::uint64_t index);

std::vector<Task> generate_tasks(const GenConfig& config, SeedDomain domain, std::uint64_t first_index,
                                 std::size_t count, Exec exec = Exec::serial());

// Independent soundness check: every example re-executes to its output and
// all strings respect the length bound.
bool task_is_sound(const Task& task, int max_io_len = kMaxStringLength);

class CorpusError : public std::runtime_error {
 public:
  CorpusError(const std::string& what, std::size_t line) : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }  // 1-based, 0 for IO errors

 private:
  std::size_t line_;
};

std::string task_to_json_line(const Task& task);
Task task_from_json_line(const std::string& line, std::size_t line_number);

void write_corpus(std::span<const Task> tasks, const std::filesystem::path& path);
std::vector<Task> read_corpus(const std::filesystem::path& path);

}  // namespace pbe

#endif  // PBE_TASKGEN_HPP
