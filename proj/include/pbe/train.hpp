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

// Training over freshly generated tasks, checkpoints and evaluation.
//
// Training task b of step s (0-based) is task s * B + b of the Train seed
// domain, so every task is seen once and the data position is fully
// described by the step counter.

#ifndef PBE_TRAIN_HPP
#define PBE_TRAIN_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pbe/autodiff.hpp"
#include "pbe/model.hpp"
#include "pbe/parallel.hpp"
#include "pbe/search.hpp"
#include "pbe/taskgen.hpp"

namespace pbe {

void to_json(nlohmann::json& j, const GenConfig& c);
void from_json(const nlohmann::json& j, GenConfig& c);

namespace ad {
void to_json(nlohmann::json& j, const AdamConfig& c);
void from_json(const nlohmann::json& j, AdamConfig& c);
}  // namespace ad

struct TrainConfig {
  int batch_size = 128;
  long steps = 50000;
  long eval_every = 5000;  // 0 disables periodic evaluation
  int eval_tasks = 200;    // drawn from the TrainEval seed domain
  long checkpoint_every = 0;
  // Seeds both the parameter init and the task streams.
  std::uint64_t seed = 0;
  ModelConfig model;
  GenConfig gen;
  ad::AdamConfig optimizer;
  SearchConfig search;
  int max_consecutive_skips = 100;
  bool prefetch = true;  // generate batch s+1 while step s runs

  void validate() const;
  // Copies of the model and generator configs with the seed applied.
  ModelConfig seeded_model() const;
  GenConfig seeded_gen() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
TrainConfig load_train_config(const std::filesystem::path& path);

struct TrainState {
  TrainConfig config;
  ad::ParamStore<float> params;
  long step = 0;           // optimizer steps taken, skipped ones included
  double loss_sum = 0;     // since the last eval point
  long loss_count = 0;
  long skipped = 0;        // total non-finite steps
  int consecutive_skips = 0;
};

TrainState initial_state(const TrainConfig& config);

// ---------------------------------------------------------------------------
// Checkpoints: <dir>/manifest.json, <dir>/params.bin, <dir>/optimizer.bin.
// Tensors are raw little-endian float32, row-major, in name order.

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const TrainState& state, const std::filesystem::path& dir);
TrainState load_checkpoint(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Evaluation.

struct LengthBucket {
  int solved = 0;
  int total = 0;
  double accuracy() const { return total ? static_cast<double>(solved) / total : 0.0; }
};

struct EvalResult {
  SearchMethod method = SearchMethod::Greedy;
  int solved = 0;
  int total = 0;
  std::map<int, LengthBucket> by_length;  // ground-truth length; empty buckets absent
  double mean_steps_to_solve = 0;         // over solved tasks
  std::vector<FixTrace> traces;

  double accuracy() const { return total ? static_cast<double>(solved) / total : 0.0; }
};

EvalResult evaluate(const Synthesizer& model, std::span<const Task> tasks, const SearchConfig& config,
                    SearchMethod method, Exec exec = Exec::serial());

nlohmann::json to_json(const EvalResult& r);

// ---------------------------------------------------------------------------
// Training.

struct MetricsRecord {
  long step = 0;
  double loss = 0;  // mean loss over non-skipped steps since the previous record
  double greedy_acc = 0;
  double beam_acc = 0;
  double fixer_acc = 0;
  long skipped = 0;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

nlohmann::json to_json(const MetricsRecord& r);
MetricsRecord metrics_record_from_json(const nlohmann::json& j);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainHooks {
  std::function<void(const MetricsRecord&)> on_metrics;
  std::function<void(long step, const std::string& message)> on_log;
  Exec eval_exec = Exec::serial();
};

// Runs `state` forward to state.config.steps. With a non-empty `out` the
// metrics log goes to out/metrics.jsonl (records past state.step are dropped
// first, so a resumed run reproduces the uninterrupted log) and checkpoints
// go to out/checkpoint. Returns the metrics records of this call.
std::vector<MetricsRecord> train(TrainState& state, const std::filesystem::path& out = {},
                                 const TrainHooks& hooks = {});

// One optimizer step on a given batch; returns the loss, or nullopt when the
// step was skipped as non-finite.
std::optional<double> train_step(TrainState& state, std::span<const Task> batch);

}  // namespace pbe

#endif  // PBE_TRAIN_HPP
