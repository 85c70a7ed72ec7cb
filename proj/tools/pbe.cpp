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

// pbe: command-line front end.
//
// Exit codes: 0 success, 1 domain failure (unsolved task, execution error,
// bad checkpoint), 2 usage or parse error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pbe/analyze.hpp"
#include "pbe/dsl.hpp"
#include "pbe/gradcheck.hpp"
#include "pbe/search.hpp"
#include "pbe/taskgen.hpp"
#include "pbe/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pbe;

namespace {

constexpr int kOk = 0;
constexpr int kDomainFailure = 1;
constexpr int kUsage = 2;

// Thrown for malformed user input; maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Exec exec_for(int workers) { return workers == 1 ? Exec::serial() : Exec::threads(workers); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Examples file: JSONL {"i": ..., "o": ...}. Fewer than N pairs are padded by
// repeating the last pair.
std::vector<Example> read_examples(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path.string());
  std::vector<Example> examples;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      Example e{j.at("i").get<std::string>(), j.at("o").get<std::string>()};
      if (!is_printable_ascii(e.input) || !is_printable_ascii(e.output)) throw UsageError("non-printable character");
      if (e.input.size() > kMaxStringLength || e.output.size() > kMaxStringLength) {
        throw UsageError("string longer than " + std::to_string(kMaxStringLength));
      }
      examples.push_back(std::move(e));
    } catch (const std::exception& e) {
      throw UsageError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  if (examples.empty()) throw UsageError(path.string() + ": no examples");
  if (examples.size() > static_cast<std::size_t>(kNumExamples)) {
    throw UsageError(path.string() + ": at most " + std::to_string(kNumExamples) + " examples");
  }
  if (examples.size() < static_cast<std::size_t>(kNumExamples)) {
    std::cerr << "note: padding " << examples.size() << " example(s) to " << kNumExamples
              << " by repeating the last pair\n";
    while (examples.size() < static_cast<std::size_t>(kNumExamples)) examples.push_back(examples.back());
  }
  return examples;
}

std::optional<SearchMethod> parse_method(const std::string& name) {
  auto m = method_from_name(name);
  if (!m) throw UsageError("unknown method '" + name + "' (greedy, beam, fixer)");
  return m;
}

void write_traces(const fs::path& path, const std::vector<TraceRecord>& records) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_trace_records(records, path);
}

// ---------------------------------------------------------------------------

struct RunArgs {
  std::string program;
  std::vector<std::string> inputs;
};

int cmd_run(const RunArgs& a) {
  std::string text = a.program;
  if (fs::is_regular_file(text)) text = read_file(text);
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r' || text.back() == ' ')) text.pop_back();
  auto parsed = parse(text);
  if (auto* err = std::get_if<ParseError>(&parsed)) {
    std::cerr << "parse error: " << err->message() << '\n' << "  " << text << '\n'
              << "  " << std::string(err->offset, ' ') << "^\n";
    return kUsage;
  }
  const Program& program = std::get<Program>(parsed);
  int status = kOk;
  for (const auto& input : a.inputs) {
    auto result = execute(program, input);
    if (auto* s = std::get_if<std::string>(&result)) {
      std::cout << *s << '\n';
    } else {
      const auto& e = std::get<ExecError>(result);
      std::cout << "error: " << exec_error_name(e.kind) << " in expression " << e.expression << '\n';
      status = kDomainFailure;
    }
  }
  return status;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string checkpoint;
  std::string examples;
  std::string method = "fixer";
  int steps = 10;
  int inner_beam = 10;
  std::string trace;
};

int cmd_synth(const SynthArgs& a) {
  const auto method = *parse_method(a.method);
  const auto examples = read_examples(a.examples);
  const TrainState state = load_checkpoint(a.checkpoint);
  const NeuralSynthesizer model(state.params, state.config.seeded_model());
  SearchConfig sc;
  sc.budget = a.steps;
  sc.inner_beam = a.inner_beam;
  sc.validate();
  const FixTrace trace = run_search(method, model, examples, sc);
  const auto records = trace_records(trace, 0, 0);
  if (!a.trace.empty()) {
    write_traces(a.trace, records);
  } else {
    for (const auto& r : records) std::cerr << to_json(r).dump() << '\n';
  }
  if (!trace.solved()) {
    std::cerr << "unsolved after " << trace.steps.size() << " candidate(s)\n";
    return kDomainFailure;
  }
  const auto& step = trace.steps[static_cast<std::size_t>(trace.solved_at) - 1];
  std::cout << render(*step.program) << '\n';
  std::cerr << "solved at step " << trace.solved_at << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::uint64_t seed = 0;
  std::size_t count = 1000;
  std::uint64_t first = 0;
  int max_expressions = 3;
  int max_io_len = 30;
  std::string domain = "corpus";
  std::string out;
  int workers = 1;
};

int cmd_gen(const GenArgs& a) {
  GenConfig gc;
  gc.seed = a.seed;
  gc.max_expressions = a.max_expressions;
  gc.max_io_len = a.max_io_len;
  try {
    gc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  SeedDomain domain;
  if (a.domain == "corpus") {
    domain = SeedDomain::Corpus;
  } else if (a.domain == "train") {
    domain = SeedDomain::Train;
  } else if (a.domain == "train-eval") {
    domain = SeedDomain::TrainEval;
  } else {
    throw UsageError("unknown domain '" + a.domain + "' (corpus, train, train-eval)");
  }
  const auto tasks = generate_tasks(gc, domain, a.first, a.count, exec_for(a.workers));
  if (a.out.empty() || a.out == "-") {
    for (const auto& t : tasks) std::cout << task_to_json_line(t) << '\n';
  } else {
    if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
    write_corpus(tasks, a.out);
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string out;
  bool resume = false;
  std::optional<long> steps;
  std::optional<std::uint64_t> seed;
  int workers = 1;
};

int cmd_train(const TrainArgs& a) {
  const fs::path ckpt = fs::path(a.out) / "checkpoint";
  TrainState state;
  if (a.resume) {
    state = load_checkpoint(ckpt);
    if (a.steps) state.config.steps = *a.steps;
    std::cerr << "resuming from step " << state.step << '\n';
  } else {
    TrainConfig config;
    try {
      config = load_train_config(a.config);
      if (a.steps) config.steps = *a.steps;
      if (a.seed) config.seed = *a.seed;
      config.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    } catch (const json::exception& e) {
      throw UsageError(a.config + ": " + e.what());
    }
    state = initial_state(config);
  }
  const auto t0 = std::chrono::steady_clock::now();
  TrainHooks hooks;
  hooks.eval_exec = exec_for(a.workers);
  hooks.on_metrics = [&](const MetricsRecord& r) {
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << to_json(r).dump() << "  (" << static_cast<long>(elapsed) << " s)\n";
  };
  hooks.on_log = [](long step, const std::string& msg) { std::cerr << "step " << step << ": " << msg << '\n'; };
  try {
    train(state, a.out, hooks);
  } catch (const TrainingAborted& e) {
    std::cerr << e.what() << '\n';
    return kDomainFailure;
  }
  std::cerr << "wrote " << ckpt.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string corpus;
  std::size_t count = 1000;
  std::optional<std::uint64_t> seed;
  std::string method = "fixer";
  int steps = 10;
  int inner_beam = 10;
  std::string traces;
  int workers = 1;
};

int cmd_eval(const EvalArgs& a) {
  const TrainState state = load_checkpoint(a.checkpoint);
  std::vector<Task> tasks;
  if (!a.corpus.empty()) {
    try {
      tasks = read_corpus(a.corpus);
    } catch (const CorpusError& e) {
      throw UsageError(a.corpus + ":" + std::to_string(e.line()) + ": " + e.what());
    }
  } else {
    GenConfig gc = state.config.seeded_gen();
    if (a.seed) gc.seed = *a.seed;
    tasks = generate_tasks(gc, SeedDomain::Corpus, 0, a.count, exec_for(a.workers));
  }
  std::vector<SearchMethod> methods;
  if (a.method == "all") {
    methods = {SearchMethod::Greedy, SearchMethod::Beam, SearchMethod::Fixer};
  } else {
    methods = {*parse_method(a.method)};
  }
  SearchConfig sc;
  sc.budget = a.steps;
  sc.inner_beam = a.inner_beam;
  sc.validate();
  const NeuralSynthesizer model(state.params, state.config.seeded_model());
  json results = json::array();
  std::vector<TraceRecord> records;
  for (SearchMethod m : methods) {
    const EvalResult r = evaluate(model, tasks, sc, m, exec_for(a.workers));
    json j = to_json(r);
    j["budget"] = sc.budget;
    j["parameters"] = state.params.scalar_count();
    j["length_trend"] = length_trend(r.by_length);
    results.push_back(std::move(j));
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      auto rs = trace_records(r.traces[i], i, program_length(tasks[i].program));
      records.insert(records.end(), rs.begin(), rs.end());
    }
  }
  if (!a.traces.empty()) write_traces(a.traces, records);
  std::cout << (results.size() == 1 ? results[0] : results).dump(2) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string traces;
  std::string report;
  int length = 0;
};

int cmd_analyze(const AnalyzeArgs& a) {
  std::vector<TraceRecord> records;
  try {
    records = read_trace_records(a.traces);
  } catch (const std::runtime_error& e) {
    throw UsageError(e.what());
  }
  write_report(records, a.report, a.length);
  std::cout << read_file(fs::path(a.report) / "report.txt");
  return kOk;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 0;
  int hidden = 8;
  double tolerance = kGradCheckTolerance;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  if (a.hidden < 1 || a.hidden > 16) throw UsageError("--hidden must be in [1, 16]");
  auto cases = op_gradchecks(a.seed);
  cases.push_back(task_loss_gradcheck(a.seed, a.hidden));
  bool ok = true;
  for (const auto& c : cases) {
    const bool pass = c.report.passed(a.tolerance);
    ok = ok && pass;
    std::printf("%-20s %s  worst rel err %.3e  (%zu scalars", c.name.c_str(), pass ? "ok  " : "FAIL",
                c.report.worst_rel_error, c.report.checked);
    if (!c.report.worst.param.empty()) std::printf(", worst at %s[%ld]", c.report.worst.param.c_str(),
                                                   static_cast<long>(c.report.worst.index));
    std::printf(")\n");
  }
  return ok ? kOk : kDomainFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural program synthesis by example with an execution-guided fixer"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Execute a DSL program on input strings");
  run->add_option("--program,-p", run_args.program, "Program text or a file containing it")->required();
  run->add_option("--input,-i", run_args.inputs, "Input string (repeatable)")->required();

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Synthesize a program from examples");
  synth->add_option("--checkpoint,-c", synth_args.checkpoint, "Checkpoint directory")->required();
  synth->add_option("--examples,-e", synth_args.examples, "JSONL file of {\"i\", \"o\"} pairs")->required();
  synth->add_option("--method,-m", synth_args.method, "greedy, beam or fixer")->capture_default_str();
  synth->add_option("--steps,-S", synth_args.steps, "Execution budget S")->capture_default_str();
  synth->add_option("--inner-beam", synth_args.inner_beam, "Beam width inside fixer steps")->capture_default_str();
  synth->add_option("--trace", synth_args.trace, "Write the search trace (JSONL) here");

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen", "Generate a task corpus (JSONL)");
  gen->add_option("--seed", gen_args.seed)->capture_default_str();
  gen->add_option("--count,-n", gen_args.count)->capture_default_str();
  gen->add_option("--first", gen_args.first, "Index of the first task in the stream")->capture_default_str();
  gen->add_option("--max-expressions", gen_args.max_expressions)->capture_default_str();
  gen->add_option("--max-io-len", gen_args.max_io_len)->capture_default_str();
  gen->add_option("--domain", gen_args.domain, "corpus, train or train-eval")->capture_default_str();
  gen->add_option("--out,-o", gen_args.out, "Output file (stdout if omitted)");
  gen->add_option("--workers", gen_args.workers, "Worker threads (0: all cores)")->capture_default_str();

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "Train a model");
  auto* config_opt = tr->add_option("--config", train_args.config, "Train config (JSON)");
  tr->add_option("--out,-o", train_args.out, "Output directory")->required();
  auto* resume_flag = tr->add_flag("--resume", train_args.resume, "Continue from <out>/checkpoint");
  config_opt->excludes(resume_flag);
  tr->add_option("--steps", train_args.steps, "Override the step count");
  tr->add_option("--seed", train_args.seed, "Override the seed");
  tr->add_option("--workers", train_args.workers, "Worker threads for evaluation")->capture_default_str();

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint,-c", eval_args.checkpoint)->required();
  auto* corpus_opt = ev->add_option("--corpus", eval_args.corpus, "Task corpus (JSONL)");
  ev->add_option("--count,-n", eval_args.count, "Held-out tasks to generate without --corpus")
      ->capture_default_str()
      ->excludes(corpus_opt);
  ev->add_option("--seed", eval_args.seed, "Held-out corpus seed (default: the training seed)")->excludes(corpus_opt);
  ev->add_option("--method,-m", eval_args.method, "greedy, beam, fixer or all")->capture_default_str();
  ev->add_option("--steps,-S", eval_args.steps, "Execution budget S")->capture_default_str();
  ev->add_option("--inner-beam", eval_args.inner_beam)->capture_default_str();
  ev->add_option("--traces", eval_args.traces, "Write search traces (JSONL) here");
  ev->add_option("--workers", eval_args.workers, "Worker threads (0: all cores)")->capture_default_str();

  AnalyzeArgs analyze_args;
  auto* an = app.add_subcommand("analyze", "Accuracy by length and step-2 correction study");
  an->add_option("--traces", analyze_args.traces)->required();
  an->add_option("--report", analyze_args.report, "Report directory")->required();
  an->add_option("--length", analyze_args.length, "Restrict the study to one ground-truth length");

  GradcheckArgs gc_args;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every op and the task loss");
  gc->add_option("--seed", gc_args.seed)->capture_default_str();
  gc->add_option("--hidden", gc_args.hidden, "Hidden size of the task-loss check")->capture_default_str();
  gc->add_option("--tolerance", gc_args.tolerance)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (*tr && !train_args.resume && train_args.config.empty()) {
    std::cerr << "train: --config is required unless --resume is given\n";
    return kUsage;
  }

  try {
    if (*run) return cmd_run(run_args);
    if (*synth) return cmd_synth(synth_args);
    if (*gen) return cmd_gen(gen_args);
    if (*tr) return cmd_train(train_args);
    if (*ev) return cmd_eval(eval_args);
    if (*an) return cmd_analyze(analyze_args);
    if (*gc) return cmd_gradcheck(gc_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kDomainFailure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDomainFailure;
  }
  return kUsage;
}
