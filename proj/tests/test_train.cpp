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

#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "pbe/train.hpp"

using namespace pbe;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "pbe_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.batch_size = 4;
  c.steps = 6;
  c.eval_every = 3;
  c.eval_tasks = 5;
  c.checkpoint_every = 3;
  c.seed = 11;
  c.model.hidden = 8;
  c.model.char_embed = 4;
  c.model.token_embed = 4;
  c.gen.max_expressions = 2;
  c.search.budget = 3;
  c.search.inner_beam = 2;
  c.search.max_tokens = 24;
  return c;
}

// Decodes the ground-truth program of whichever known task owns the examples.
class OracleSynthesizer final : public Synthesizer {
 public:
  explicit OracleSynthesizer(std::span<const Task> tasks) : tasks_(tasks) {}
  int vocab_size() const override { return tok::kVocabSize; }
  FMat initial_state(const FMat& latent) const override {
    FMat s(latent.rows(), 2);
    s.col(0) = latent.col(0);
    s.col(1).setZero();
    return s;
  }
  void step(const FMat& state, std::span<const int>, FMat& next, FMat& logp) const override {
    next = state;
    logp.setConstant(state.rows(), tok::kVocabSize, -std::numeric_limits<float>::infinity());
    for (Eigen::Index r = 0; r < state.rows(); ++r) {
      const TokenSeq t = program_to_tokens(tasks_[static_cast<std::size_t>(state(r, 0))].program);
      const auto pos = static_cast<std::size_t>(state(r, 1));
      logp(r, t[std::min(pos, t.size() - 1)]) = 0;
      next(r, 1) = state(r, 1) + 1;
    }
  }
  FMat encode(std::span<const Example> examples, std::span<const ExecutedSlot>) const override {
    for (std::size_t i = 0; i < tasks_.size(); ++i) {
      if (std::equal(examples.begin(), examples.end(), tasks_[i].examples.begin(), tasks_[i].examples.end())) {
        return FMat::Constant(1, 1, static_cast<float>(i));
      }
    }
    throw std::logic_error("unknown task");
  }

 private:
  std::span<const Task> tasks_;
};

}  // namespace

TEST_CASE("config json round trip and validation") {
  const TrainConfig c = tiny_config();
  json j = c;
  const TrainConfig back = j.get<TrainConfig>();
  CHECK(json(back) == j);
  CHECK(c.seeded_model().init_seed == 11);
  CHECK(c.seeded_gen().seed == 11);

  j["model"]["hiden"] = 3;
  CHECK_THROWS(j.get<TrainConfig>());
  TrainConfig bad = c;
  bad.gen.max_io_len = c.model.io_width + 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("checkpoint save, load, save is byte-identical") {
  TrainState state = initial_state(tiny_config());
  const auto batch = generate_tasks(state.config.seeded_gen(), SeedDomain::Train, 0, 4);
  train_step(state, batch);
  train_step(state, batch);
  const fs::path a = fresh_dir("ckpt_a"), b = fresh_dir("ckpt_b");
  save_checkpoint(state, a);
  const TrainState loaded = load_checkpoint(a);
  save_checkpoint(loaded, b);
  for (const char* f : {"manifest.json", "params.bin", "optimizer.bin"}) CHECK(slurp(a / f) == slurp(b / f));
  CHECK(loaded.step == 2);
  CHECK(loaded.params.adam_steps() == 2);
  for (const auto& [name, p] : state.params.params()) {
    CHECK(loaded.params.at(name).value == p.value);
    CHECK(loaded.params.at(name).adam_v == p.adam_v);
  }
}

TEST_CASE("checkpoint mismatches are reported") {
  const TrainState state = initial_state(tiny_config());
  const fs::path dir = fresh_dir("ckpt_bad");
  save_checkpoint(state, dir);
  const json manifest = json::parse(slurp(dir / "manifest.json"));
  auto rewrite = [&](const json& m) { std::ofstream(dir / "manifest.json") << m.dump(); };
  auto message = [&]() -> std::string {
    try {
      load_checkpoint(dir);
    } catch (const CheckpointError& e) {
      return e.what();
    }
    return "";
  };

  json m = manifest;
  m["token_vocab"][5] = "Bogus";
  rewrite(m);
  CHECK(message().find("token vocabulary mismatch at id 5") != std::string::npos);

  m = manifest;
  m["tensors"][0]["rows"] = m["tensors"][0]["rows"].get<int>() + 1;
  rewrite(m);
  CHECK(message().find("shape") != std::string::npos);

  m = manifest;
  m["tensors"].erase(m["tensors"].size() - 1);
  rewrite(m);
  CHECK_FALSE(message().empty());

  rewrite(manifest);
  CHECK(message().empty());
  {
    std::ofstream(dir / "params.bin", std::ios::binary | std::ios::app) << "xxxx";
  }
  CHECK(message().find("params.bin") != std::string::npos);

  CHECK_THROWS_AS(load_checkpoint(fresh_dir("ckpt_missing")), CheckpointError);
}

TEST_CASE("training is deterministic and resumes exactly") {
  const TrainConfig config = tiny_config();
  const fs::path full_dir = fresh_dir("run_full");
  TrainState full = initial_state(config);
  const auto records = train(full, full_dir);
  REQUIRE(records.size() == 2);
  CHECK(records[0].step == 3);
  CHECK(records[1].step == 6);
  CHECK(read_metrics(full_dir / "metrics.jsonl") == records);

  TrainState again = initial_state(config);
  train(again);
  for (const auto& [name, p] : full.params.params()) CHECK(again.params.at(name).value == p.value);

  const fs::path part_dir = fresh_dir("run_part");
  TrainConfig half = config;
  half.steps = 3;
  TrainState part = initial_state(half);
  train(part, part_dir);
  // A later append past the checkpoint must be discarded on resume.
  {
    std::ofstream(part_dir / "metrics.jsonl", std::ios::app) << to_json(MetricsRecord{4, 1.0}).dump() << '\n';
  }
  TrainState resumed = load_checkpoint(part_dir / "checkpoint");
  CHECK(resumed.step == 3);
  resumed.config.steps = 6;
  train(resumed, part_dir);
  CHECK(slurp(part_dir / "metrics.jsonl") == slurp(full_dir / "metrics.jsonl"));
  for (const auto& [name, p] : full.params.params()) {
    CHECK(resumed.params.at(name).value == p.value);
    CHECK(resumed.params.at(name).adam_m == p.adam_m);
  }
}

TEST_CASE("loss on a frozen batch decreases") {
  TrainConfig config;
  config.batch_size = 16;
  config.model.hidden = 64;
  config.gen.max_expressions = 2;
  config.optimizer.lr = 3e-3;
  TrainState state = initial_state(config);
  const auto batch = generate_tasks(config.seeded_gen(), SeedDomain::Train, 0, 16);
  const double first = *train_step(state, batch);
  double last = first;
  for (int i = 1; i < 200; ++i) last = *train_step(state, batch);
  CHECK(last < 0.5 * first);
}

TEST_CASE("non-finite steps are skipped and counted") {
  TrainConfig config = tiny_config();
  config.max_consecutive_skips = 2;
  TrainState state = initial_state(config);
  state.params.at(param_names::kOutBias).value(0, 3) = std::numeric_limits<float>::quiet_NaN();
  const auto batch = generate_tasks(config.seeded_gen(), SeedDomain::Train, 0, 4);
  CHECK_FALSE(train_step(state, batch).has_value());
  CHECK(state.step == 1);
  CHECK(state.params.adam_steps() == 0);
  CHECK_THROWS_AS(train(state), TrainingAborted);
  CHECK(state.skipped == 2);
  CHECK(state.step == 3);
  CHECK(state.params.adam_steps() == 0);
}

TEST_CASE("oracle synthesizer solves everything") {
  GenConfig gc;
  gc.seed = 5;
  const auto tasks = generate_tasks(gc, SeedDomain::Corpus, 0, 100);
  const OracleSynthesizer oracle(tasks);
  for (auto method : {SearchMethod::Greedy, SearchMethod::Beam, SearchMethod::Fixer}) {
    const EvalResult r = evaluate(oracle, tasks, SearchConfig{}, method);
    CHECK(r.accuracy() == 1.0);
    CHECK(r.mean_steps_to_solve == 1.0);
    int total = 0;
    for (const auto& [len, b] : r.by_length) {
      CHECK(b.total > 0);
      total += b.total;
    }
    CHECK(total == 100);
    const json j = to_json(r);
    CHECK(j.at("accuracy") == 1.0);
  }
}

TEST_CASE("an untrained model solves almost nothing beyond length one") {
  TrainConfig config;
  const TrainState state = initial_state(config);
  const NeuralSynthesizer model(state.params, config.seeded_model());
  GenConfig gc;
  std::vector<Task> tasks;
  for (const auto& t : generate_tasks(gc, SeedDomain::Corpus, 0, 300)) {
    if (program_length(t.program) >= 2) tasks.push_back(t);
  }
  for (auto method : {SearchMethod::Greedy, SearchMethod::Fixer}) {
    CHECK(evaluate(model, tasks, SearchConfig{}, method).accuracy() < 0.05);
  }
}

TEST_CASE("parallel evaluation matches serial") {
  const TrainState state = initial_state(tiny_config());
  const NeuralSynthesizer model(state.params, state.config.seeded_model());
  const auto tasks = generate_tasks(state.config.seeded_gen(), SeedDomain::TrainEval, 0, 20);
  const auto a = evaluate(model, tasks, state.config.search, SearchMethod::Fixer);
  const auto b = evaluate(model, tasks, state.config.search, SearchMethod::Fixer, Exec::threads(3));
  CHECK(to_json(a) == to_json(b));
  for (std::size_t i = 0; i < tasks.size(); ++i) CHECK(a.traces[i].steps.size() == b.traces[i].steps.size());
}
