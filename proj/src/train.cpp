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

#include "pbe/train.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <future>
#include <set>

namespace pbe {

using nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + " must be a JSON object");
  std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw std::invalid_argument(std::string("unknown key '") + key + "' in " + what);
  }
}

}  // namespace

void to_json(json& j, const GenConfig& c) {
  j = {{"max_expressions", c.max_expressions},
       {"max_io_len", c.max_io_len},
       {"seed", c.seed},
       {"length_weights", c.length_weights}};
}

void from_json(const json& j, GenConfig& c) {
  reject_unknown_keys(j, {"max_expressions", "max_io_len", "seed", "length_weights"}, "gen config");
  GenConfig d;
  c.max_expressions = j.value("max_expressions", d.max_expressions);
  c.max_io_len = j.value("max_io_len", d.max_io_len);
  c.seed = j.value("seed", d.seed);
  c.length_weights = j.value("length_weights", d.length_weights);
}

namespace ad {

void to_json(json& j, const AdamConfig& c) {
  j = {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}, {"clip_norm", c.clip_norm}};
}

void from_json(const json& j, AdamConfig& c) {
  reject_unknown_keys(j, {"lr", "beta1", "beta2", "eps", "clip_norm"}, "optimizer config");
  AdamConfig d;
  c.lr = j.value("lr", d.lr);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.eps = j.value("eps", d.eps);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
}

}  // namespace ad

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (eval_every < 0 || checkpoint_every < 0) throw std::invalid_argument("intervals must be >= 0");
  if (eval_tasks < 0) throw std::invalid_argument("eval_tasks must be >= 0");
  if (max_consecutive_skips < 1) throw std::invalid_argument("max_consecutive_skips must be >= 1");
  if (!(optimizer.lr > 0) || !(optimizer.beta1 >= 0 && optimizer.beta1 < 1) ||
      !(optimizer.beta2 >= 0 && optimizer.beta2 < 1) || !(optimizer.eps > 0)) {
    throw std::invalid_argument("invalid optimizer hyperparameters");
  }
  model.validate();
  gen.validate();
  search.validate();
  if (gen.max_io_len > model.io_width) throw std::invalid_argument("gen.max_io_len exceeds model.io_width");
}

ModelConfig TrainConfig::seeded_model() const {
  ModelConfig m = model;
  m.init_seed = seed;
  return m;
}

GenConfig TrainConfig::seeded_gen() const {
  GenConfig g = gen;
  g.seed = seed;
  return g;
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"steps", c.steps},
       {"eval_every", c.eval_every},
       {"eval_tasks", c.eval_tasks},
       {"checkpoint_every", c.checkpoint_every},
       {"seed", c.seed},
       {"model", c.model},
       {"gen", c.gen},
       {"optimizer", c.optimizer},
       {"search", c.search},
       {"max_consecutive_skips", c.max_consecutive_skips},
       {"prefetch", c.prefetch}};
}

void from_json(const json& j, TrainConfig& c) {
  reject_unknown_keys(j,
                      {"batch_size", "steps", "eval_every", "eval_tasks", "checkpoint_every", "seed", "model", "gen",
                       "optimizer", "search", "max_consecutive_skips", "prefetch"},
                      "train config");
  TrainConfig d;
  c.batch_size = j.value("batch_size", d.batch_size);
  c.steps = j.value("steps", d.steps);
  c.eval_every = j.value("eval_every", d.eval_every);
  c.eval_tasks = j.value("eval_tasks", d.eval_tasks);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  c.seed = j.value("seed", d.seed);
  if (j.contains("model")) {
    reject_unknown_keys(j.at("model"),
                        {"hidden", "char_embed", "token_embed", "io_width", "num_examples", "encoder_layers",
                         "max_tokens", "char_vocab", "token_vocab", "init_seed"},
                        "model config");
  }
  c.model = j.contains("model") ? j.at("model").get<ModelConfig>() : d.model;
  c.gen = j.contains("gen") ? j.at("gen").get<GenConfig>() : d.gen;
  c.optimizer = j.contains("optimizer") ? j.at("optimizer").get<ad::AdamConfig>() : d.optimizer;
  if (j.contains("search")) reject_unknown_keys(j.at("search"), {"budget", "inner_beam", "max_tokens"}, "search config");
  c.search = j.contains("search") ? j.at("search").get<SearchConfig>() : d.search;
  c.max_consecutive_skips = j.value("max_consecutive_skips", d.max_consecutive_skips);
  c.prefetch = j.value("prefetch", d.prefetch);
}

TrainConfig load_train_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  TrainConfig c = json::parse(in).get<TrainConfig>();
  c.validate();
  return c;
}

TrainState initial_state(const TrainConfig& config) {
  config.validate();
  TrainState s;
  s.config = config;
  s.params = init_params<float>(config.seeded_model());
  return s;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kFormat = "pbe-checkpoint";
constexpr int kFormatVersion = 1;

std::vector<std::string> char_names() {
  std::vector<std::string> names = {"<PAD>", "<DUMMY>", "<FAIL>"};
  for (char c = 0x20; c <= 0x7E; ++c) names.emplace_back(1, c);
  return names;
}

void check_listing(const json& listing, const std::vector<std::string>& expected, const char* what) {
  const auto got = listing.get<std::vector<std::string>>();
  const std::size_t n = std::max(got.size(), expected.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::string g = i < got.size() ? got[i] : "<missing>";
    const std::string e = i < expected.size() ? expected[i] : "<missing>";
    if (g != e) {
      throw CheckpointError(std::string(what) + " vocabulary mismatch at id " + std::to_string(i) +
                            ": checkpoint has '" + g + "', expected '" + e + "'");
    }
  }
}

void write_blob(const fs::path& path, const std::vector<const ad::Mat<float>*>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  for (const auto* m : tensors) {
    out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(float)));
  }
  if (!out) throw CheckpointError("write failed: " + path.string());
}

std::vector<char> read_blob(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void save_checkpoint(const TrainState& state, const fs::path& dir) {
  fs::create_directories(dir);
  json tensors = json::array();
  std::vector<const ad::Mat<float>*> values, moments;
  std::size_t offset = 0;
  for (const auto& [name, p] : state.params.params()) {
    tensors.push_back({{"name", name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"offset", offset}});
    offset += static_cast<std::size_t>(p.value.size());
    values.push_back(&p.value);
  }
  for (const auto& [name, p] : state.params.params()) moments.push_back(&p.adam_m);
  for (const auto& [name, p] : state.params.params()) moments.push_back(&p.adam_v);
  for (const auto* m : moments) {
    if (m->size() == 0) throw CheckpointError("optimizer moments are not initialized");
  }

  json manifest = {{"format", kFormat},
                   {"version", kFormatVersion},
                   {"train_config", state.config},
                   {"model", state.config.seeded_model()},
                   {"token_vocab", token_names()},
                   {"char_vocab", char_names()},
                   {"step", state.step},
                   {"adam_steps", state.params.adam_steps()},
                   {"next_task_index", static_cast<std::uint64_t>(state.step) *
                                           static_cast<std::uint64_t>(state.config.batch_size)},
                   {"loss_sum", state.loss_sum},
                   {"loss_count", state.loss_count},
                   {"skipped", state.skipped},
                   {"consecutive_skips", state.consecutive_skips},
                   {"tensors", tensors},
                   {"scalar_count", offset}};
  write_blob(dir / "params.bin", values);
  write_blob(dir / "optimizer.bin", moments);
  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
  if (!out) throw CheckpointError("write failed: " + (dir / "manifest.json").string());
}

TrainState load_checkpoint(const fs::path& dir) {
  json manifest;
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw CheckpointError("cannot open " + (dir / "manifest.json").string());
    try {
      manifest = json::parse(in);
    } catch (const json::exception& e) {
      throw CheckpointError(std::string("malformed manifest: ") + e.what());
    }
  }
  TrainState state;
  try {
    if (manifest.at("format") != kFormat || manifest.at("version") != kFormatVersion) {
      throw CheckpointError("unsupported checkpoint format");
    }
    check_listing(manifest.at("token_vocab"), token_names(), "token");
    check_listing(manifest.at("char_vocab"), char_names(), "character");
    state.config = manifest.at("train_config").get<TrainConfig>();
    state.config.validate();
    if (manifest.at("model").get<ModelConfig>() != state.config.seeded_model()) {
      throw CheckpointError("manifest model config disagrees with train config");
    }
    state.step = manifest.at("step").get<long>();
    state.loss_sum = manifest.at("loss_sum").get<double>();
    state.loss_count = manifest.at("loss_count").get<long>();
    state.skipped = manifest.at("skipped").get<long>();
    state.consecutive_skips = manifest.at("consecutive_skips").get<int>();

    const ad::ParamStore<float> expected = init_params<float>(state.config.seeded_model());
    const json& tensors = manifest.at("tensors");
    if (tensors.size() != expected.size()) {
      throw CheckpointError("manifest lists " + std::to_string(tensors.size()) + " tensors, model has " +
                            std::to_string(expected.size()));
    }
    const std::size_t total = manifest.at("scalar_count").get<std::size_t>();
    const std::vector<char> values = read_blob(dir / "params.bin");
    const std::vector<char> moments = read_blob(dir / "optimizer.bin");
    if (values.size() != total * sizeof(float)) throw CheckpointError("params.bin size disagrees with manifest");
    if (moments.size() != 2 * total * sizeof(float)) {
      throw CheckpointError("optimizer.bin size disagrees with manifest");
    }
    auto load = [](const char* base, std::size_t offset, Eigen::Index rows, Eigen::Index cols) {
      ad::Mat<float> m(rows, cols);
      std::memcpy(m.data(), base + offset * sizeof(float), static_cast<std::size_t>(m.size()) * sizeof(float));
      return m;
    };
    std::size_t i = 0;
    for (const auto& [name, p] : expected.params()) {
      const json& t = tensors.at(i++);
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      const auto offset = t.at("offset").get<std::size_t>();
      if (t.at("name") != name) {
        throw CheckpointError("tensor '" + t.at("name").get<std::string>() + "' where '" + name + "' expected");
      }
      if (rows != p.value.rows() || cols != p.value.cols()) {
        throw CheckpointError("tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                              std::to_string(cols) + ", model expects " + ad::shape_string(p.value.rows(), p.value.cols()));
      }
      const std::size_t n = static_cast<std::size_t>(rows * cols);
      if (offset + n > total) throw CheckpointError("tensor '" + name + "' overruns params.bin");
      ad::Param<float>& q = state.params.add(name, load(values.data(), offset, rows, cols));
      q.adam_m = load(moments.data(), offset, rows, cols);
      q.adam_v = load(moments.data(), total + offset, rows, cols);
    }
    state.params.set_adam_steps(manifest.at("adam_steps").get<long>());
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("invalid checkpoint config: ") + e.what());
  }
  return state;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalResult evaluate(const Synthesizer& model, std::span<const Task> tasks, const SearchConfig& config,
                    SearchMethod method, Exec exec) {
  config.validate();
  EvalResult r;
  r.method = method;
  r.traces.resize(tasks.size());
  for_each_index(tasks.size(), exec,
                 [&](std::size_t i) { r.traces[i] = run_search(method, model, tasks[i].examples, config); });
  long steps_sum = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const FixTrace& t = r.traces[i];
    LengthBucket& bucket = r.by_length[program_length(tasks[i].program)];
    ++bucket.total;
    ++r.total;
    if (t.solved()) {
      ++bucket.solved;
      ++r.solved;
      steps_sum += t.solved_at;
    }
  }
  r.mean_steps_to_solve = r.solved ? static_cast<double>(steps_sum) / r.solved : 0.0;
  return r;
}

json to_json(const EvalResult& r) {
  json by_length = json::object();
  for (const auto& [len, b] : r.by_length) {
    by_length[std::to_string(len)] = {{"solved", b.solved}, {"total", b.total}, {"accuracy", b.accuracy()}};
  }
  return {{"method", std::string(method_name(r.method))},
          {"accuracy", r.accuracy()},
          {"solved", r.solved},
          {"total", r.total},
          {"mean_steps_to_solve", r.mean_steps_to_solve},
          {"by_length", std::move(by_length)}};
}

// ---------------------------------------------------------------------------
// Training

json to_json(const MetricsRecord& r) {
  return {{"step", r.step},
          {"loss", r.loss},
          {"greedy_acc", r.greedy_acc},
          {"beam_acc", r.beam_acc},
          {"fixer_acc", r.fixer_acc},
          {"skipped", r.skipped}};
}

MetricsRecord metrics_record_from_json(const json& j) {
  MetricsRecord r;
  r.step = j.at("step").get<long>();
  r.loss = j.at("loss").get<double>();
  r.greedy_acc = j.at("greedy_acc").get<double>();
  r.beam_acc = j.at("beam_acc").get<double>();
  r.fixer_acc = j.at("fixer_acc").get<double>();
  r.skipped = j.value("skipped", 0L);
  return r;
}

std::vector<MetricsRecord> read_metrics(const fs::path& path) {
  std::vector<MetricsRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(metrics_record_from_json(json::parse(line)));
  }
  return out;
}

std::optional<double> train_step(TrainState& state, std::span<const Task> batch) {
  const ModelConfig mc = state.config.seeded_model();
  ++state.step;
  state.params.zero_grad();
  ad::Graph<float> g;
  const BoundParams bp = bind_params(g, state.params);
  const LossTerms terms = task_loss(g, bp, state.params, mc, batch);
  const double loss = static_cast<double>(g.value(terms.total)(0, 0));
  if (!std::isfinite(loss)) return std::nullopt;
  g.backward(terms.total);
  if (!ad::adam_step(state.params, state.config.optimizer).applied) return std::nullopt;
  return loss;
}

namespace {

MetricsRecord eval_point(TrainState& state, std::span<const Task> eval_tasks, Exec exec) {
  MetricsRecord r;
  r.step = state.step;
  r.loss = state.loss_count ? state.loss_sum / static_cast<double>(state.loss_count) : 0.0;
  r.skipped = state.skipped;
  if (!eval_tasks.empty()) {
    const NeuralSynthesizer model(state.params, state.config.seeded_model());
    const SearchConfig& sc = state.config.search;
    r.greedy_acc = evaluate(model, eval_tasks, sc, SearchMethod::Greedy, exec).accuracy();
    r.beam_acc = evaluate(model, eval_tasks, sc, SearchMethod::Beam, exec).accuracy();
    r.fixer_acc = evaluate(model, eval_tasks, sc, SearchMethod::Fixer, exec).accuracy();
  }
  state.loss_sum = 0;
  state.loss_count = 0;
  return r;
}

}  // namespace

std::vector<MetricsRecord> train(TrainState& state, const fs::path& out, const TrainHooks& hooks) {
  const TrainConfig& config = state.config;
  config.validate();
  const GenConfig gen = config.seeded_gen();
  const auto B = static_cast<std::uint64_t>(config.batch_size);
  auto log = [&](const std::string& msg) {
    if (hooks.on_log) hooks.on_log(state.step, msg);
  };

  std::ofstream metrics_out;
  if (!out.empty()) {
    fs::create_directories(out);
    const fs::path metrics_path = out / "metrics.jsonl";
    std::vector<MetricsRecord> kept;
    for (const auto& r : read_metrics(metrics_path)) {
      if (r.step <= state.step) kept.push_back(r);
    }
    metrics_out.open(metrics_path, std::ios::trunc);
    if (!metrics_out) throw std::runtime_error("cannot write " + metrics_path.string());
    for (const auto& r : kept) metrics_out << to_json(r).dump() << '\n';
    metrics_out.flush();
  }

  std::vector<Task> eval_tasks;
  if (config.eval_every > 0 && config.eval_tasks > 0) {
    eval_tasks = generate_tasks(gen, SeedDomain::TrainEval, 0, static_cast<std::size_t>(config.eval_tasks));
  }

  auto batch_at = [&gen, B](long step) {
    return generate_tasks(gen, SeedDomain::Train, static_cast<std::uint64_t>(step) * B, B);
  };

  std::vector<MetricsRecord> records;
  std::future<std::vector<Task>> next;
  while (state.step < config.steps) {
    std::vector<Task> batch = next.valid() ? next.get() : batch_at(state.step);
    if (config.prefetch && state.step + 1 < config.steps) {
      next = std::async(std::launch::async, batch_at, state.step + 1);
    }
    if (auto loss = train_step(state, batch)) {
      state.loss_sum += *loss;
      ++state.loss_count;
      state.consecutive_skips = 0;
    } else {
      ++state.skipped;
      ++state.consecutive_skips;
      log("non-finite loss or gradient, step skipped");
      if (state.consecutive_skips >= config.max_consecutive_skips) {
        if (next.valid()) next.wait();
        throw TrainingAborted("aborting after " + std::to_string(state.consecutive_skips) +
                              " consecutive non-finite steps at step " + std::to_string(state.step));
      }
    }
    if (config.eval_every > 0 && state.step % config.eval_every == 0) {
      MetricsRecord r = eval_point(state, eval_tasks, hooks.eval_exec);
      if (metrics_out.is_open()) {
        metrics_out << to_json(r).dump() << '\n';
        metrics_out.flush();
      }
      if (hooks.on_metrics) hooks.on_metrics(r);
      records.push_back(r);
    }
    if (!out.empty() && config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0) {
      save_checkpoint(state, out / "checkpoint");
    }
  }
  if (!out.empty()) save_checkpoint(state, out / "checkpoint");
  return records;
}

}  // namespace pbe
