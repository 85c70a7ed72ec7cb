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

// Small tape-based reverse-mode autodiff over row-major matrices. Rows are
// batch entries; every op below works on whole batches. Instantiated for
// float (training) and double (gradient checks).

#ifndef PBE_AUTODIFF_HPP
#define PBE_AUTODIFF_HPP

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pbe::ad {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_string(Eigen::Index rows, Eigen::Index cols);

template <class T>
struct Param {
  Mat<T> value;
  Mat<T> grad;
  Mat<T> adam_m;
  Mat<T> adam_v;
};

// Named parameters, iterated in lexicographic name order.
template <class T>
class ParamStore {
 public:
  using Map = std::map<std::string, Param<T>, std::less<>>;

  Param<T>& add(const std::string& name, Mat<T> value);
  Param<T>& at(std::string_view name);
  const Param<T>& at(std::string_view name) const;
  bool contains(std::string_view name) const { return params_.find(name) != params_.end(); }

  Map& params() { return params_; }
  const Map& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();

  long adam_steps() const { return adam_steps_; }
  void set_adam_steps(long steps) { adam_steps_ = steps; }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, p] : params_) {
      Param<U>& q = out.add(name, p.value.template cast<U>());
      q.adam_m = p.adam_m.template cast<U>();
      q.adam_v = p.adam_v.template cast<U>();
    }
    out.set_adam_steps(adam_steps_);
    return out;
  }

 private:
  Map params_;
  long adam_steps_ = 0;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <class T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf bound to a parameter; backward() accumulates into Param::grad.
  Var param(Param<T>& p);
  // Leaf without gradient.
  Var constant(Mat<T> value);

  const Mat<T>& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  // Zero-sized until backward() reaches the node.
  const Mat<T>& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }
  std::size_t size() const { return nodes_.size(); }

  // x[r x n] * w[n x m]
  Var matmul(Var x, Var w);
  // x[r x m] + b[1 x m] broadcast over rows
  Var add_bias(Var x, Var b);
  Var add(Var a, Var b);
  Var scale(Var a, T factor);
  Var relu(Var x);
  Var tanh(Var x);
  Var sigmoid(Var x);
  // Column-wise concatenation of equal-row inputs.
  Var concat(std::span<const Var> parts);
  Var columns(Var x, Eigen::Index start, Eigen::Index count);
  // ids has rows * ids_per_row entries; row r of the result is the
  // concatenation of table rows ids[r * ids_per_row + j], j = 0..ids_per_row-1.
  Var embedding_lookup(Var table, std::span<const int> ids, Eigen::Index ids_per_row);
  // Groups of `set_size` consecutive rows reduce to their elementwise max.
  // Gradient goes to the first maximizing row of each group.
  Var maxpool_over_set(Var x, Eigen::Index set_size);
  // state = [h | c]; w[(in + H) x 4H] with gate blocks (input, forget, cell,
  // output); b[1 x 4H]. Returns the next [h | c].
  Var lstm_cell(Var x, Var state, Var w, Var b);
  // Sum over rows of -log softmax(logits[r])[targets[r]]; targets < 0 are
  // skipped. Result is 1 x 1.
  Var softmax_xent(Var logits, std::span<const int> targets);

  // Reverse pass from a 1 x 1 node.
  void backward(Var root);

 private:
  struct Node {
    Mat<T> value;
    Mat<T> grad;
    bool needs_grad = false;
    Param<T>* param = nullptr;
    std::function<void(Graph&, Node&)> backprop;
  };

  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
  Var push(Mat<T> value, bool needs_grad, std::function<void(Graph&, Node&)> backprop);
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  Mat<T>& grad_ref(Var v);

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Forward kernels shared by graph ops and graph-free inference.

template <class T>
struct LstmCache {
  Mat<T> xh;     // [x | h_prev]
  Mat<T> gates;  // activated i, f, g, o
  Mat<T> c_prev;
  Mat<T> tanh_c;
};

// Computes next state [h | c] for rows of x and state.
template <class T>
Mat<T> lstm_forward(const Mat<T>& x, const Mat<T>& state, const Mat<T>& w, const Mat<T>& b,
                    LstmCache<T>* cache = nullptr);

// Row-wise log-softmax.
template <class T>
Mat<T> log_softmax_rows(const Mat<T>& logits);

template <class T>
void xavier_uniform(Mat<T>& m, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Optimizer.

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // global-norm clip; <= 0 disables
};

struct AdamReport {
  bool applied = false;  // false when a gradient was non-finite
  double grad_norm = 0;
  double clip_scale = 1;
};

template <class T>
AdamReport adam_step(ParamStore<T>& params, const AdamConfig& config);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking (use T = double).

struct GradCheckEntry {
  std::string param;
  Eigen::Index index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradCheckReport {
  double worst_rel_error = 0;
  double floor = 0;  // denominator floor used for this check
  GradCheckEntry worst;
  std::size_t checked = 0;
  bool passed(double tolerance) const { return worst_rel_error < tolerance; }
};

// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps gradients
// that are zero in exact arithmetic from reporting noise as relative error.
double relative_error(double analytic, double numeric, double floor = 1e-6);

// The relative-error floor is the larger of kMinGradFloor and
// kResolutionMultiple * eps * |loss| / h. Gradients smaller than that sit too
// close to the roundoff limit of the stencil to be resolved relatively.
inline constexpr double kMinGradFloor = 1e-6;
inline constexpr double kResolutionMultiple = 1e5;

// build(graph, params) must construct a graph whose returned node is a 1 x 1
// loss. Every parameter scalar is checked with central differences of step h.
// `max_per_param` > 0 limits how many scalars are checked per tensor (chosen
// deterministically, evenly spaced).
GradCheckReport grad_check(ParamStore<double>& params,
                           const std::function<Var(Graph<double>&, ParamStore<double>&)>& build, double h = 1e-5,
                           std::size_t max_per_param = 0);

}  // namespace pbe::ad

#endif  // PBE_AUTODIFF_HPP
