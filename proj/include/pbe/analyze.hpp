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

// Post-processing of search traces: expression-level diffs between the first
// and second candidate, step-2 correction histograms and accuracy by
// ground-truth length.

#ifndef PBE_ANALYZE_HPP
#define PBE_ANALYZE_HPP

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pbe/dsl.hpp"
#include "pbe/search.hpp"
#include "pbe/train.hpp"

namespace pbe {

struct SubstituteEdit {
  int index = 0;
  Expression expr;
  friend bool operator==(const SubstituteEdit&, const SubstituteEdit&) = default;
};
struct DeleteEdit {
  int index = 0;
  friend bool operator==(const DeleteEdit&, const DeleteEdit&) = default;
};
struct InsertEdit {
  int after = -1;  // -1 inserts before the first expression
  Expression expr;
  friend bool operator==(const InsertEdit&, const InsertEdit&) = default;
};
using ExprEdit = std::variant<SubstituteEdit, DeleteEdit, InsertEdit>;
using ExprEditScript = std::vector<ExprEdit>;

// Unit-cost alignment of the expression lists. Among minimal scripts the
// backtrace from the end prefers match, then substitute, delete, insert.
// Edits are listed in increasing position order.
ExprEditScript expr_diff(const Program& initial, const Program& corrected);
ExprEditScript expr_diff(std::span<const Expression> initial, std::span<const Expression> corrected);

// Applies a script whose indices refer to `initial`.
std::vector<Expression> apply_script(std::span<const Expression> initial, const ExprEditScript& script);

int expressions_changed(const ExprEditScript& script);
// Max over substitutions and deletions of (initial_length - index); 0 if there
// are none.
int furthest_distance_from_end(const ExprEditScript& script, int initial_length);

std::string render_edit(const ExprEdit& edit);

// ---------------------------------------------------------------------------
// Step-2 study

struct Step2Record {
  SearchMethod method = SearchMethod::Beam;
  std::size_t task = 0;
  Program initial;
  Program corrected;
  int initial_length = 0;
  int expressions_changed = 0;
  int furthest_distance_from_end = 0;
};

using Histogram = std::map<int, int>;

struct Step2Histograms {
  int corrections = 0;
  int unparseable_initial = 0;  // solved at step 2 after a decode error; not in the histograms
  Histogram initial_length;
  Histogram expressions_changed;
  Histogram distance_from_end;
};

struct Step2Study {
  std::vector<Step2Record> records;
  std::map<SearchMethod, Step2Histograms> by_method;
};

// Tasks whose trace failed at step 1 and solved at step 2. Trace records are
// grouped by (method, task); `target_length`, when non-zero, keeps only tasks
// with that ground-truth length.
Step2Study step2_study(std::span<const TraceRecord> records, int target_length = 0);

// Runs beam and fixer search over the corpus, then the study.
Step2Study step2_study(const Synthesizer& model, std::span<const Task> tasks, const SearchConfig& config,
                       int target_length = 0, Exec exec = Exec::serial());

std::map<int, double> normalized(const Histogram& h);

// ---------------------------------------------------------------------------
// Accuracy by length

using LengthTable = std::map<int, LengthBucket>;  // empty buckets absent

LengthTable accuracy_by_length(const Synthesizer& model, std::span<const Task> tasks, SearchMethod method,
                               const SearchConfig& config, Exec exec = Exec::serial());
// From serialized traces: one entry per (method, task) for the given method.
LengthTable accuracy_by_length(std::span<const TraceRecord> records, SearchMethod method);

// Spearman rank correlation with average ranks for ties; NaN when either
// side is constant or fewer than two points are given.
double spearman(std::span<const double> x, std::span<const double> y);
double length_trend(const LengthTable& table);  // Spearman of (length, accuracy)

// ---------------------------------------------------------------------------
// Reports

std::string histogram_table(const std::string& title, const std::map<SearchMethod, Step2Histograms>& by_method,
                            Histogram Step2Histograms::*field);
std::string length_table_text(const std::map<SearchMethod, LengthTable>& tables);

// Writes report.txt plus one CSV per histogram and accuracy_by_length.csv.
void write_report(std::span<const TraceRecord> records, const std::filesystem::path& dir, int target_length = 0);

}  // namespace pbe

#endif  // PBE_ANALYZE_HPP
