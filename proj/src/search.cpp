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

#include "pbe/search.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

namespace pbe {

using nlohmann::json;

// ---------------------------------------------------------------------------
// NeuralSynthesizer

NeuralSynthesizer::NeuralSynthesizer(const ad::ParamStore<float>& params, const ModelConfig& config)
    : params_(params), config_(config) {
  validate_params(params_, config_);
}

FMat NeuralSynthesizer::initial_state(const FMat& latent) const {
  FMat state(latent.rows(), 2 * config_.hidden);
  state.leftCols(config_.hidden) = latent;
  state.rightCols(config_.hidden).setZero();
  return state;
}

void NeuralSynthesizer::step(const FMat& state, std::span<const int> tokens, FMat& next_state,
                             FMat& log_probs) const {
  decoder_step(params_, state, tokens, next_state, log_probs);
}

FMat NeuralSynthesizer::encode(std::span<const Example> examples, std::span<const ExecutedSlot> executed) const {
  return encode_values(params_, config_, encode_examples(examples, executed, config_.io_width));
}

// ---------------------------------------------------------------------------
// Decoding

Hypothesis greedy_search(const StepDecoder& decoder, const FMat& latent, int max_tokens) {
  Hypothesis h;
  FMat state = decoder.initial_state(latent);
  FMat next, logp;
  int input = tok::kBos;
  for (int t = 0; t < max_tokens; ++t) {
    decoder.step(state, std::span<const int>(&input, 1), next, logp);
    Eigen::Index best = 0;
    for (Eigen::Index v = 1; v < logp.cols(); ++v) {
      if (logp(0, v) > logp(0, best)) best = v;
    }
    h.tokens.push_back(static_cast<int>(best));
    h.log_prob += static_cast<double>(logp(0, best));
    if (best == tok::kEos) {
      h.finished = true;
      break;
    }
    input = static_cast<int>(best);
    state = std::move(next);
  }
  return h;
}

namespace {

bool ranks_before(const Hypothesis& a, const Hypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(), b.tokens.end());
}

struct Expansion {
  double score;
  int parent;
  int token;
};

}  // namespace

std::vector<Hypothesis> beam_search(const StepDecoder& decoder, const FMat& latent, int width, int max_tokens) {
  if (width < 1) throw std::invalid_argument("beam width must be >= 1");
  std::vector<Hypothesis> live(1);
  FMat states = decoder.initial_state(latent);
  std::vector<int> inputs = {tok::kBos};
  std::vector<Hypothesis> finished;
  FMat next, logp;
  for (int t = 0; t < max_tokens && !live.empty(); ++t) {
    decoder.step(states, inputs, next, logp);
    std::vector<Expansion> expansions;
    expansions.reserve(live.size() * static_cast<std::size_t>(logp.cols()));
    for (std::size_t i = 0; i < live.size(); ++i) {
      for (Eigen::Index v = 0; v < logp.cols(); ++v) {
        const float lp = logp(static_cast<Eigen::Index>(i), v);
        if (!std::isfinite(lp)) continue;
        expansions.push_back({live[i].log_prob + static_cast<double>(lp), static_cast<int>(i), static_cast<int>(v)});
      }
    }
    // Live prefixes all have length t, so (parent tokens, token) compares
    // lexicographically.
    auto before = [&](const Expansion& a, const Expansion& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.parent != b.parent) {
        const auto& ta = live[static_cast<std::size_t>(a.parent)].tokens;
        const auto& tb = live[static_cast<std::size_t>(b.parent)].tokens;
        if (ta != tb) return std::lexicographical_compare(ta.begin(), ta.end(), tb.begin(), tb.end());
      }
      return a.token < b.token;
    };
    const std::size_t keep = std::min(expansions.size(), static_cast<std::size_t>(width));
    std::partial_sort(expansions.begin(), expansions.begin() + static_cast<std::ptrdiff_t>(keep), expansions.end(),
                      before);

    std::vector<Hypothesis> next_live;
    std::vector<Eigen::Index> rows;
    inputs.clear();
    for (std::size_t k = 0; k < keep; ++k) {
      const Expansion& e = expansions[k];
      Hypothesis h;
      h.tokens = live[static_cast<std::size_t>(e.parent)].tokens;
      h.tokens.push_back(e.token);
      h.log_prob = e.score;
      if (e.token == tok::kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next_live.push_back(std::move(h));
        rows.push_back(e.parent);
        inputs.push_back(e.token);
      }
    }
    FMat next_states(static_cast<Eigen::Index>(rows.size()), next.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) next_states.row(static_cast<Eigen::Index>(k)) = next.row(rows[k]);
    live = std::move(next_live);
    states = std::move(next_states);

    if (static_cast<int>(finished.size()) >= width && !live.empty()) {
      std::sort(finished.begin(), finished.end(), ranks_before);
      const double kth = finished[static_cast<std::size_t>(width) - 1].log_prob;
      double best_live = live.front().log_prob;
      for (const auto& h : live) best_live = std::max(best_live, h.log_prob);
      // Extending a prefix never raises its score.
      if (best_live < kth) break;
    }
  }
  std::sort(finished.begin(), finished.end(), ranks_before);
  if (static_cast<int>(finished.size()) > width) finished.resize(static_cast<std::size_t>(width));
  if (static_cast<int>(finished.size()) < width && !live.empty()) {
    std::sort(live.begin(), live.end(), ranks_before);
    for (auto& h : live) {
      if (static_cast<int>(finished.size()) == width) break;
      finished.push_back(std::move(h));
    }
  }
  return finished;
}

// ---------------------------------------------------------------------------
// Search procedures

void SearchConfig::validate() const {
  if (budget < 1) throw std::invalid_argument("search budget S must be >= 1");
  if (inner_beam < 1) throw std::invalid_argument("inner beam width must be >= 1");
  if (max_tokens < 1 || max_tokens > kMaxTokens) throw std::invalid_argument("max_tokens must be in [1, 128]");
}

void to_json(json& j, const SearchConfig& c) {
  j = {{"budget", c.budget}, {"inner_beam", c.inner_beam}, {"max_tokens", c.max_tokens}};
}

void from_json(const json& j, SearchConfig& c) {
  SearchConfig d;
  c.budget = j.value("budget", d.budget);
  c.inner_beam = j.value("inner_beam", d.inner_beam);
  c.max_tokens = j.value("max_tokens", d.max_tokens);
}

std::string_view method_name(SearchMethod m) {
  switch (m) {
    case SearchMethod::Greedy:
      return "greedy";
    case SearchMethod::Beam:
      return "beam";
    case SearchMethod::Fixer:
      return "fixer";
  }
  return "?";
}

std::optional<SearchMethod> method_from_name(std::string_view name) {
  if (name == "greedy") return SearchMethod::Greedy;
  if (name == "beam") return SearchMethod::Beam;
  if (name == "fixer") return SearchMethod::Fixer;
  return std::nullopt;
}

CandidateStep evaluate_candidate(const TokenSeq& tokens, double log_prob, std::span<const Example> examples) {
  CandidateStep step;
  step.tokens = tokens;
  step.log_prob = log_prob;
  auto decoded = tokens_to_program(tokens);
  if (auto* err = std::get_if<DecodeError>(&decoded)) {
    step.decode_error = err->reason + " at token " + std::to_string(err->position);
    return step;
  }
  step.program = std::get<Program>(std::move(decoded));
  step.matched = true;
  for (const auto& ex : examples) {
    auto result = execute(*step.program, ex.input);
    if (auto* s = std::get_if<std::string>(&result)) {
      step.matched = step.matched && *s == ex.output;
      step.outputs.emplace_back(std::move(*s));
      step.errors.emplace_back(std::nullopt);
    } else {
      step.matched = false;
      step.outputs.emplace_back(std::nullopt);
      step.errors.emplace_back(std::get<ExecError>(result));
    }
  }
  return step;
}

namespace {

std::vector<ExecutedSlot> executed_slots(const CandidateStep& step, std::size_t count) {
  std::vector<ExecutedSlot> slots;
  slots.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    if (step.program && n < step.outputs.size() && step.outputs[n]) {
      slots.push_back(ExecutedSlot::output(*step.outputs[n]));
    } else {
      slots.push_back(ExecutedSlot::fail());
    }
  }
  return slots;
}

void record(FixTrace& trace, CandidateStep step) {
  trace.steps.push_back(std::move(step));
  if (trace.steps.back().matched && trace.solved_at == 0) trace.solved_at = static_cast<int>(trace.steps.size());
}

FMat first_round_latent(const Synthesizer& model, std::span<const Example> examples) {
  const std::vector<ExecutedSlot> dummies(examples.size(), ExecutedSlot::dummy());
  return model.encode(examples, dummies);
}

}  // namespace

FixTrace run_greedy(const Synthesizer& model, std::span<const Example> examples, const SearchConfig& config) {
  config.validate();
  FixTrace trace;
  trace.method = SearchMethod::Greedy;
  Hypothesis h = greedy_search(model, first_round_latent(model, examples), config.max_tokens);
  record(trace, evaluate_candidate(h.tokens, h.log_prob, examples));
  return trace;
}

FixTrace run_beam_baseline(const Synthesizer& model, std::span<const Example> examples, const SearchConfig& config) {
  config.validate();
  FixTrace trace;
  trace.method = SearchMethod::Beam;
  auto beams = beam_search(model, first_round_latent(model, examples), config.budget, config.max_tokens);
  for (const auto& h : beams) {
    if (static_cast<int>(trace.steps.size()) == config.budget) break;
    record(trace, evaluate_candidate(h.tokens, h.log_prob, examples));
    if (trace.solved()) break;
  }
  return trace;
}

FixTrace run_fixer_search(const Synthesizer& model, std::span<const Example> examples, const SearchConfig& config) {
  config.validate();
  FixTrace trace;
  trace.method = SearchMethod::Fixer;
  std::set<TokenSeq> predicted;
  Hypothesis first = greedy_search(model, first_round_latent(model, examples), config.max_tokens);
  predicted.insert(first.tokens);
  record(trace, evaluate_candidate(first.tokens, first.log_prob, examples));

  while (!trace.solved() && static_cast<int>(trace.steps.size()) < config.budget) {
    const CandidateStep& latest = trace.steps.back();
    FMat z_fix = model.encode(examples, executed_slots(latest, examples.size()));
    std::optional<Hypothesis> chosen;
    for (int width : {config.inner_beam, 2 * config.inner_beam}) {
      for (auto& h : beam_search(model, z_fix, width, config.max_tokens)) {
        if (!predicted.contains(h.tokens)) {
          chosen = std::move(h);
          break;
        }
      }
      if (chosen) break;
    }
    if (!chosen) {
      trace.stopped_early = true;
      break;
    }
    predicted.insert(chosen->tokens);
    record(trace, evaluate_candidate(chosen->tokens, chosen->log_prob, examples));
  }
  return trace;
}

FixTrace run_search(SearchMethod method, const Synthesizer& model, std::span<const Example> examples,
                    const SearchConfig& config) {
  switch (method) {
    case SearchMethod::Greedy:
      return run_greedy(model, examples, config);
    case SearchMethod::Beam:
      return run_beam_baseline(model, examples, config);
    case SearchMethod::Fixer:
      return run_fixer_search(model, examples, config);
  }
  throw std::invalid_argument("unknown search method");
}

std::string check_trace_invariants(const FixTrace& trace, const SearchConfig& config) {
  if (static_cast<int>(trace.steps.size()) > config.budget) {
    return "trace executes " + std::to_string(trace.steps.size()) + " candidates, budget " +
           std::to_string(config.budget);
  }
  std::set<TokenSeq> seen;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    if (!seen.insert(trace.steps[i].tokens).second) return "duplicate candidate at step " + std::to_string(i + 1);
  }
  int first_match = 0;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    if (trace.steps[i].matched) {
      first_match = static_cast<int>(i) + 1;
      break;
    }
  }
  if (first_match != trace.solved_at) return "solved_at disagrees with recorded matches";
  return {};
}

// ---------------------------------------------------------------------------
// Serialization

std::vector<TraceRecord> trace_records(const FixTrace& trace, std::size_t task, int target_length) {
  std::vector<TraceRecord> out;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto& s = trace.steps[i];
    TraceRecord r;
    r.task = task;
    r.method = trace.method;
    r.target_length = target_length;
    r.solved_at = trace.solved_at;
    r.step = static_cast<int>(i) + 1;
    r.tokens = s.tokens;
    if (s.program) r.candidate = render(*s.program);
    r.outputs = s.outputs;
    r.matched = s.matched;
    r.log_prob = s.log_prob;
    out.push_back(std::move(r));
  }
  return out;
}

json to_json(const TraceRecord& r) {
  json outputs = json::array();
  for (const auto& o : r.outputs) outputs.push_back(o ? json(*o) : json(nullptr));
  return {{"task", r.task},
          {"method", std::string(method_name(r.method))},
          {"target_length", r.target_length},
          {"solved_at", r.solved_at},
          {"step", r.step},
          {"tokens", r.tokens},
          {"candidate", r.candidate ? json(*r.candidate) : json(nullptr)},
          {"outputs", std::move(outputs)},
          {"matched", r.matched},
          {"log_prob", r.log_prob}};
}

TraceRecord trace_record_from_json(const json& j) {
  TraceRecord r;
  r.task = j.at("task").get<std::size_t>();
  auto method = method_from_name(j.at("method").get<std::string>());
  if (!method) throw std::invalid_argument("unknown method " + j.at("method").dump());
  r.method = *method;
  r.target_length = j.value("target_length", 0);
  r.solved_at = j.value("solved_at", 0);
  r.step = j.at("step").get<int>();
  r.tokens = j.at("tokens").get<TokenSeq>();
  if (!j.at("candidate").is_null()) r.candidate = j.at("candidate").get<std::string>();
  for (const auto& o : j.at("outputs")) {
    r.outputs.push_back(o.is_null() ? std::nullopt : std::optional<std::string>(o.get<std::string>()));
  }
  r.matched = j.at("matched").get<bool>();
  r.log_prob = j.value("log_prob", 0.0);
  return r;
}

void write_trace_records(std::span<const TraceRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<TraceRecord> read_trace_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<TraceRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(trace_record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace pbe
