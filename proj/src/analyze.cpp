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

#include "pbe/analyze.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace pbe {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Diffs

ExprEditScript expr_diff(std::span<const Expression> a, std::span<const Expression> b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const int diag = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      d[i][j] = std::min({diag, d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }
  ExprEditScript script;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && a[i - 1] == b[j - 1] && d[i][j] == d[i - 1][j - 1]) {
      --i, --j;
    } else if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1) {
      script.push_back(SubstituteEdit{static_cast<int>(i - 1), b[j - 1]});
      --i, --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      script.push_back(DeleteEdit{static_cast<int>(i - 1)});
      --i;
    } else {
      script.push_back(InsertEdit{static_cast<int>(i) - 1, b[j - 1]});
      --j;
    }
  }
  std::reverse(script.begin(), script.end());
  return script;
}

ExprEditScript expr_diff(const Program& initial, const Program& corrected) {
  return expr_diff(std::span<const Expression>(initial.expressions), std::span<const Expression>(corrected.expressions));
}

std::vector<Expression> apply_script(std::span<const Expression> initial, const ExprEditScript& script) {
  const int n = static_cast<int>(initial.size());
  std::vector<std::optional<Expression>> replaced(initial.begin(), initial.end());
  std::vector<std::vector<Expression>> inserted(initial.size() + 1);  // slot k holds inserts after k - 1
  for (const auto& edit : script) {
    if (const auto* s = std::get_if<SubstituteEdit>(&edit)) {
      if (s->index < 0 || s->index >= n) throw std::out_of_range("substitute index out of range");
      replaced[static_cast<std::size_t>(s->index)] = s->expr;
    } else if (const auto* del = std::get_if<DeleteEdit>(&edit)) {
      if (del->index < 0 || del->index >= n) throw std::out_of_range("delete index out of range");
      replaced[static_cast<std::size_t>(del->index)].reset();
    } else {
      const auto& ins = std::get<InsertEdit>(edit);
      if (ins.after < -1 || ins.after >= n) throw std::out_of_range("insert position out of range");
      inserted[static_cast<std::size_t>(ins.after + 1)].push_back(ins.expr);
    }
  }
  std::vector<Expression> out(inserted[0]);
  for (std::size_t k = 0; k < initial.size(); ++k) {
    if (replaced[k]) out.push_back(*replaced[k]);
    out.insert(out.end(), inserted[k + 1].begin(), inserted[k + 1].end());
  }
  return out;
}

int expressions_changed(const ExprEditScript& script) { return static_cast<int>(script.size()); }

int furthest_distance_from_end(const ExprEditScript& script, int initial_length) {
  int furthest = 0;
  for (const auto& edit : script) {
    if (const auto* s = std::get_if<SubstituteEdit>(&edit)) furthest = std::max(furthest, initial_length - s->index);
    if (const auto* del = std::get_if<DeleteEdit>(&edit)) furthest = std::max(furthest, initial_length - del->index);
  }
  return furthest;
}

std::string render_edit(const ExprEdit& edit) {
  if (const auto* s = std::get_if<SubstituteEdit>(&edit)) {
    return "Substitute(" + std::to_string(s->index) + ", " + render(s->expr) + ")";
  }
  if (const auto* del = std::get_if<DeleteEdit>(&edit)) return "Delete(" + std::to_string(del->index) + ")";
  const auto& ins = std::get<InsertEdit>(edit);
  return "Insert(" + std::to_string(ins.after) + ", " + render(ins.expr) + ")";
}

// ---------------------------------------------------------------------------
// Step-2 study

namespace {

struct TaskTrace {
  int target_length = 0;
  int solved_at = 0;
  std::map<int, const TraceRecord*> steps;
};

std::map<std::pair<SearchMethod, std::size_t>, TaskTrace> group(std::span<const TraceRecord> records) {
  std::map<std::pair<SearchMethod, std::size_t>, TaskTrace> out;
  for (const auto& r : records) {
    TaskTrace& t = out[{r.method, r.task}];
    t.target_length = r.target_length;
    t.solved_at = r.solved_at;
    t.steps[r.step] = &r;
  }
  return out;
}

}  // namespace

Step2Study step2_study(std::span<const TraceRecord> records, int target_length) {
  Step2Study study;
  for (const auto& [key, t] : group(records)) {
    const auto [method, task] = key;
    if (method == SearchMethod::Greedy) continue;
    Step2Histograms& h = study.by_method[method];
    if (target_length > 0 && t.target_length != target_length) continue;
    if (t.solved_at != 2 || !t.steps.contains(1) || !t.steps.contains(2)) continue;
    const TraceRecord& first = *t.steps.at(1);
    const TraceRecord& second = *t.steps.at(2);
    if (!first.candidate) {
      ++h.unparseable_initial;
      continue;
    }
    if (!second.candidate) throw std::invalid_argument("step-2 success without a parsed candidate");
    Step2Record r;
    r.method = method;
    r.task = task;
    r.initial = parse_or_throw(*first.candidate);
    r.corrected = parse_or_throw(*second.candidate);
    r.initial_length = program_length(r.initial);
    const ExprEditScript script = expr_diff(r.initial, r.corrected);
    r.expressions_changed = expressions_changed(script);
    r.furthest_distance_from_end = furthest_distance_from_end(script, r.initial_length);
    ++h.corrections;
    ++h.initial_length[r.initial_length];
    ++h.expressions_changed[r.expressions_changed];
    ++h.distance_from_end[r.furthest_distance_from_end];
    study.records.push_back(std::move(r));
  }
  return study;
}

Step2Study step2_study(const Synthesizer& model, std::span<const Task> tasks, const SearchConfig& config,
                       int target_length, Exec exec) {
  std::vector<TraceRecord> records;
  for (SearchMethod method : {SearchMethod::Beam, SearchMethod::Fixer}) {
    const EvalResult r = evaluate(model, tasks, config, method, exec);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      auto rs = trace_records(r.traces[i], i, program_length(tasks[i].program));
      records.insert(records.end(), rs.begin(), rs.end());
    }
  }
  return step2_study(records, target_length);
}

std::map<int, double> normalized(const Histogram& h) {
  int total = 0;
  for (const auto& [k, v] : h) total += v;
  std::map<int, double> out;
  for (const auto& [k, v] : h) out[k] = total ? static_cast<double>(v) / total : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Accuracy by length

LengthTable accuracy_by_length(const Synthesizer& model, std::span<const Task> tasks, SearchMethod method,
                               const SearchConfig& config, Exec exec) {
  return evaluate(model, tasks, config, method, exec).by_length;
}

LengthTable accuracy_by_length(std::span<const TraceRecord> records, SearchMethod method) {
  LengthTable table;
  for (const auto& [key, t] : group(records)) {
    if (key.first != method) continue;
    LengthBucket& b = table[t.target_length];
    ++b.total;
    if (t.solved_at > 0) ++b.solved;
  }
  return table;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: size mismatch");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (x.size() < 2) return nan;
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return nan;
  return sxy / std::sqrt(sxx * syy);
}

double length_trend(const LengthTable& table) {
  std::vector<double> lengths, accuracies;
  for (const auto& [len, b] : table) {
    lengths.push_back(len);
    accuracies.push_back(b.accuracy());
  }
  return spearman(lengths, accuracies);
}

// ---------------------------------------------------------------------------
// Reports

std::string histogram_table(const std::string& title, const std::map<SearchMethod, Step2Histograms>& by_method,
                            Histogram Step2Histograms::*field) {
  std::set<int> keys;
  for (const auto& [m, h] : by_method) {
    for (const auto& [k, v] : h.*field) keys.insert(k);
  }
  std::ostringstream out;
  out << title << '\n';
  char buf[64];
  out << "  value";
  for (const auto& [m, h] : by_method) {
    std::snprintf(buf, sizeof buf, " %8s %8s", std::string(method_name(m)).c_str(), "norm");
    out << buf;
  }
  out << '\n';
  for (int k : keys) {
    std::snprintf(buf, sizeof buf, "  %5d", k);
    out << buf;
    for (const auto& [m, h] : by_method) {
      const auto& hist = h.*field;
      const auto norm = normalized(hist);
      const int count = hist.contains(k) ? hist.at(k) : 0;
      std::snprintf(buf, sizeof buf, " %8d %8.4f", count, norm.contains(k) ? norm.at(k) : 0.0);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::string length_table_text(const std::map<SearchMethod, LengthTable>& tables) {
  std::ostringstream out;
  char buf[96];
  for (const auto& [m, table] : tables) {
    out << "accuracy by ground-truth length (" << method_name(m) << ")\n";
    for (const auto& [len, b] : table) {
      std::snprintf(buf, sizeof buf, "  %3d %6d/%-6d %7.4f\n", len, b.solved, b.total, b.accuracy());
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "  spearman(length, accuracy) = %.4f\n", length_trend(table));
    out << buf;
  }
  return out.str();
}

namespace {

void write_histogram_csv(const fs::path& path, const std::map<SearchMethod, Step2Histograms>& by_method,
                         Histogram Step2Histograms::*field) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "method,value,count,normalized\n";
  for (const auto& [m, h] : by_method) {
    const auto norm = normalized(h.*field);
    for (const auto& [k, v] : h.*field) out << method_name(m) << ',' << k << ',' << v << ',' << norm.at(k) << '\n';
  }
}

}  // namespace

void write_report(std::span<const TraceRecord> records, const fs::path& dir, int target_length) {
  fs::create_directories(dir);
  const Step2Study study = step2_study(records, target_length);
  std::map<SearchMethod, LengthTable> tables;
  for (const auto& r : records) tables.try_emplace(r.method);
  for (auto& [m, table] : tables) table = accuracy_by_length(records, m);

  std::ofstream out(dir / "report.txt");
  if (!out) throw std::runtime_error("cannot write " + (dir / "report.txt").string());
  out << length_table_text(tables) << '\n';
  out << "step-2 corrections";
  if (target_length > 0) out << " (ground-truth length " << target_length << ")";
  out << '\n';
  for (const auto& [m, h] : study.by_method) {
    out << "  " << method_name(m) << ": " << h.corrections << " (unparseable initial: " << h.unparseable_initial
        << ")\n";
  }
  out << '\n' << histogram_table("initial prediction length", study.by_method, &Step2Histograms::initial_length);
  out << '\n' << histogram_table("expressions changed", study.by_method, &Step2Histograms::expressions_changed);
  out << '\n' << histogram_table("furthest distance from end", study.by_method, &Step2Histograms::distance_from_end);

  write_histogram_csv(dir / "initial_length.csv", study.by_method, &Step2Histograms::initial_length);
  write_histogram_csv(dir / "expressions_changed.csv", study.by_method, &Step2Histograms::expressions_changed);
  write_histogram_csv(dir / "distance_from_end.csv", study.by_method, &Step2Histograms::distance_from_end);
  std::ofstream csv(dir / "accuracy_by_length.csv");
  csv << "method,length,solved,total,accuracy\n";
  for (const auto& [m, table] : tables) {
    for (const auto& [len, b] : table) {
      csv << method_name(m) << ',' << len << ',' << b.solved << ',' << b.total << ',' << b.accuracy() << '\n';
    }
  }
}

}  // namespace pbe
