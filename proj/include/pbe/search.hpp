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

// Inference-time search under an execution budget S: greedy decoding, the
// beam-search baseline and iterative fixing.

#ifndef PBE_SEARCH_HPP
#define PBE_SEARCH_HPP

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "pbe/autodiff.hpp"
#include "pbe/model.hpp"
#include "pbe/taskgen.hpp"
#include "pbe/vocab.hpp"

namespace pbe {

using FMat = ad::Mat<float>;

// Autoregressive next-token model over an opaque per-row state.
class StepDecoder {
 public:
  virtual ~StepDecoder() = default;
  virtual int vocab_size() const = 0;
  // One state row per latent row.
  virtual FMat initial_state(const FMat& latent) const = 0;
  // Feeds one token per row. log_probs[r][v] is -inf for tokens that can
  // never be emitted.
  virtual void step(const FMat& state, std::span<const int> tokens, FMat& next_state, FMat& log_probs) const = 0;
};

class Synthesizer : public StepDecoder {
 public:
  // 1 x H latent for a full example set.
  virtual FMat encode(std::span<const Example> examples, std::span<const ExecutedSlot> executed) const = 0;
};

// The trained network. Holds references; the store must outlive it and must
// not be written while searches run.
class NeuralSynthesizer final : public Synthesizer {
 public:
  NeuralSynthesizer(const ad::ParamStore<float>& params, const ModelConfig& config);

  int vocab_size() const override { return config_.token_vocab; }
  FMat initial_state(const FMat& latent) const override;
  void step(const FMat& state, std::span<const int> tokens, FMat& next_state, FMat& log_probs) const override;
  FMat encode(std::span<const Example> examples, std::span<const ExecutedSlot> executed) const override;

  const ModelConfig& config() const { return config_; }

 private:
  const ad::ParamStore<float>& params_;
  ModelConfig config_;
};

struct Hypothesis {
  TokenSeq tokens;  // ends with EOS iff finished
  double log_prob = 0;
  bool finished = false;
};

// Ties go to the lowest token id.
Hypothesis greedy_search(const StepDecoder& decoder, const FMat& latent, int max_tokens);

// Up to `width` distinct sequences sorted by decreasing log-prob, ties in
// lexicographic token order. Each step keeps the best `width` one-token
// expansions of the live prefixes; expansions ending in EOS are finished.
// If fewer than `width` sequences finish within max_tokens, the best
// unfinished prefixes fill the remaining slots after all finished ones.
std::vector<Hypothesis> beam_search(const StepDecoder& decoder, const FMat& latent, int width, int max_tokens);

struct SearchConfig {
  int budget = 10;      // S: candidate executions
  int inner_beam = 10;  // beam width inside one fixer step
  int max_tokens = kMaxTokens;

  void validate() const;
};

void to_json(nlohmann::json& j, const SearchConfig& c);
void from_json(const nlohmann::json& j, SearchConfig& c);

enum class SearchMethod { Greedy, Beam, Fixer };
std::string_view method_name(SearchMethod m);
std::optional<SearchMethod> method_from_name(std::string_view name);

struct CandidateStep {
  TokenSeq tokens;
  double log_prob = 0;
  std::optional<Program> program;
  std::string decode_error;                          // set iff !program
  std::vector<std::optional<std::string>> outputs;   // per example; nullopt on ExecError
  std::vector<std::optional<ExecError>> errors;      // per example
  bool matched = false;
};

struct FixTrace {
  SearchMethod method = SearchMethod::Greedy;
  std::vector<CandidateStep> steps;
  int solved_at = 0;  // 1-based step, 0 when unsolved
  bool stopped_early = false;  // fixer could not propose a novel candidate

  bool solved() const { return solved_at > 0; }
};

// Decodes, executes and scores one candidate against the examples.
CandidateStep evaluate_candidate(const TokenSeq& tokens, double log_prob, std::span<const Example> examples);

FixTrace run_greedy(const Synthesizer& model, std::span<const Example> examples, const SearchConfig& config);
FixTrace run_beam_baseline(const Synthesizer& model, std::span<const Example> examples, const SearchConfig& config);
FixTrace run_fixer_search(const Synthesizer& model, std::span<const Example> examples, const SearchConfig& config);
FixTrace run_search(SearchMethod method, const Synthesizer& model, std::span<const Example> examples,
                    const SearchConfig& config);

// Budget and uniqueness invariants; returns a description of the first
// violation or an empty string.
std::string check_trace_invariants(const FixTrace& trace, const SearchConfig& config);

// ---------------------------------------------------------------------------
// Trace serialization: one JSON record per executed candidate.

struct TraceRecord {
  std::size_t task = 0;
  SearchMethod method = SearchMethod::Greedy;
  int target_length = 0;  // ground-truth program length, 0 if unknown
  int solved_at = 0;
  int step = 0;           // 1-based
  TokenSeq tokens;
  std::optional<std::string> candidate;  // rendered program
  std::vector<std::optional<std::string>> outputs;
  bool matched = false;
  double log_prob = 0;
};

std::vector<TraceRecord> trace_records(const FixTrace& trace, std::size_t task, int target_length);
nlohmann::json to_json(const TraceRecord& r);
TraceRecord trace_record_from_json(const nlohmann::json& j);

void write_trace_records(std::span<const TraceRecord> records, const std::filesystem::path& path);
// Throws std::runtime_error naming the offending line.
std::vector<TraceRecord> read_trace_records(const std::filesystem::path& path);

}  // namespace pbe

#endif  // PBE_SEARCH_HPP
