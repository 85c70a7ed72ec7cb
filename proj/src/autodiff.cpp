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

#include "pbe/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "pbe/rng.hpp"

namespace pbe::ad {

std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return "[" + std::to_string(rows) + " x " + std::to_string(cols) + "]";
}

namespace {

template <class T>
void require(bool ok, const char* op, const Mat<T>& a, const Mat<T>& b) {
  if (!ok) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.rows(), a.cols()) + " vs " +
                     shape_string(b.rows(), b.cols()));
  }
}

template <class T>
T sigmoid_scalar(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

// ---------------------------------------------------------------------------
// ParamStore

template <class T>
Param<T>& ParamStore<T>::add(const std::string& name, Mat<T> value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Param<T> p;
  p.grad = Mat<T>::Zero(value.rows(), value.cols());
  p.adam_m = Mat<T>::Zero(value.rows(), value.cols());
  p.adam_v = Mat<T>::Zero(value.rows(), value.cols());
  p.value = std::move(value);
  return params_.emplace(name, std::move(p)).first->second;
}

template <class T>
Param<T>& ParamStore<T>::at(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return it->second;
}

template <class T>
const Param<T>& ParamStore<T>::at(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return it->second;
}

template <class T>
std::size_t ParamStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

template <class T>
void ParamStore<T>::zero_grad() {
  for (auto& [name, p] : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

// ---------------------------------------------------------------------------
// Kernels

template <class T>
Mat<T> lstm_forward(const Mat<T>& x, const Mat<T>& state, const Mat<T>& w, const Mat<T>& b, LstmCache<T>* cache) {
  const Eigen::Index hidden = state.cols() / 2;
  const Eigen::Index rows = x.rows();
  if (state.rows() != rows || state.cols() != 2 * hidden) {
    throw ShapeError("lstm_cell: input " + shape_string(x.rows(), x.cols()) + " vs state " +
                     shape_string(state.rows(), state.cols()));
  }
  if (w.rows() != x.cols() + hidden || w.cols() != 4 * hidden || b.rows() != 1 || b.cols() != 4 * hidden) {
    throw ShapeError("lstm_cell: weights " + shape_string(w.rows(), w.cols()) + " / bias " +
                     shape_string(b.rows(), b.cols()) + " do not fit input " + shape_string(x.rows(), x.cols()) +
                     " and hidden " + std::to_string(hidden));
  }
  Mat<T> xh(rows, x.cols() + hidden);
  xh.leftCols(x.cols()) = x;
  xh.rightCols(hidden) = state.leftCols(hidden);
  Mat<T> gates(rows, 4 * hidden);
  gates.noalias() = xh * w;
  gates.rowwise() += b.row(0);
  const Eigen::Index H = hidden;
  gates.leftCols(2 * H) = gates.leftCols(2 * H).unaryExpr([](T v) { return sigmoid_scalar(v); });
  gates.middleCols(2 * H, H) = gates.middleCols(2 * H, H).array().tanh();
  gates.rightCols(H) = gates.rightCols(H).unaryExpr([](T v) { return sigmoid_scalar(v); });

  Mat<T> next(rows, 2 * H);
  auto c = next.rightCols(H);
  c = gates.middleCols(H, H).cwiseProduct(state.rightCols(H)) + gates.leftCols(H).cwiseProduct(gates.middleCols(2 * H, H));
  Mat<T> tanh_c = c.array().tanh();
  next.leftCols(H) = gates.rightCols(H).cwiseProduct(tanh_c);
  if (cache) {
    cache->xh = std::move(xh);
    cache->gates = std::move(gates);
    cache->c_prev = state.rightCols(H);
    cache->tanh_c = std::move(tanh_c);
  }
  return next;
}

template <class T>
Mat<T> log_softmax_rows(const Mat<T>& logits) {
  Mat<T> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const T mx = logits.row(r).maxCoeff();
    const T lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

template <class T>
void xavier_uniform(Mat<T>& m, std::uint64_t seed) {
  Rng rng(seed);
  const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>((2 * rng.unit() - 1) * a);
}

// ---------------------------------------------------------------------------
// Graph

template <class T>
Var Graph<T>::push(Mat<T> value, bool needs_grad, std::function<void(Graph&, Node&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <class T>
Mat<T>& Graph<T>::grad_ref(Var v) {
  Node& n = node(v);
  if (n.grad.size() == 0) n.grad = Mat<T>::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

template <class T>
Var Graph<T>::param(Param<T>& p) {
  Var v = push(p.value, true, nullptr);
  node(v).param = &p;
  return v;
}

template <class T>
Var Graph<T>::constant(Mat<T> value) {
  return push(std::move(value), false, nullptr);
}

template <class T>
Var Graph<T>::matmul(Var x, Var w) {
  const Mat<T>& xv = value(x);
  const Mat<T>& wv = value(w);
  require(xv.cols() == wv.rows(), "matmul", xv, wv);
  Mat<T> out(xv.rows(), wv.cols());
  out.noalias() = xv * wv;
  return push(std::move(out), needs(x) || needs(w), [x, w](Graph& g, Node& n) {
    if (g.needs(x)) g.grad_ref(x).noalias() += n.grad * g.value(w).transpose();
    if (g.needs(w)) g.grad_ref(w).noalias() += g.value(x).transpose() * n.grad;
  });
}

template <class T>
Var Graph<T>::add_bias(Var x, Var b) {
  const Mat<T>& xv = value(x);
  const Mat<T>& bv = value(b);
  require(bv.rows() == 1 && bv.cols() == xv.cols(), "add_bias", xv, bv);
  Mat<T> out = xv;
  out.rowwise() += bv.row(0);
  return push(std::move(out), needs(x) || needs(b), [x, b](Graph& g, Node& n) {
    if (g.needs(x)) g.grad_ref(x) += n.grad;
    if (g.needs(b)) g.grad_ref(b) += n.grad.colwise().sum();
  });
}

template <class T>
Var Graph<T>::add(Var a, Var b) {
  const Mat<T>& av = value(a);
  const Mat<T>& bv = value(b);
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "add", av, bv);
  Mat<T> out = av + bv;
  return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, Node& n) {
    if (g.needs(a)) g.grad_ref(a) += n.grad;
    if (g.needs(b)) g.grad_ref(b) += n.grad;
  });
}

template <class T>
Var Graph<T>::scale(Var a, T factor) {
  Mat<T> out = value(a) * factor;
  return push(std::move(out), needs(a), [a, factor](Graph& g, Node& n) { g.grad_ref(a) += n.grad * factor; });
}

template <class T>
Var Graph<T>::relu(Var x) {
  Mat<T> out = value(x).cwiseMax(T(0));
  return push(std::move(out), needs(x), [x](Graph& g, Node& n) {
    g.grad_ref(x).array() += (n.value.array() > T(0)).select(n.grad.array(), T(0));
  });
}

template <class T>
Var Graph<T>::tanh(Var x) {
  Mat<T> out = value(x).array().tanh();
  return push(std::move(out), needs(x), [x](Graph& g, Node& n) {
    g.grad_ref(x).array() += n.grad.array() * (T(1) - n.value.array().square());
  });
}

template <class T>
Var Graph<T>::sigmoid(Var x) {
  Mat<T> out = value(x).unaryExpr([](T v) { return sigmoid_scalar(v); });
  return push(std::move(out), needs(x), [x](Graph& g, Node& n) {
    g.grad_ref(x).array() += n.grad.array() * n.value.array() * (T(1) - n.value.array());
  });
}

template <class T>
Var Graph<T>::concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Eigen::Index rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool any_grad = false;
  for (Var p : parts) {
    require(value(p).rows() == rows, "concat", value(parts[0]), value(p));
    cols += value(p).cols();
    any_grad = any_grad || needs(p);
  }
  Mat<T> out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, value(p).cols()) = value(p);
    at += value(p).cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return push(std::move(out), any_grad, [inputs](Graph& g, Node& n) {
    Eigen::Index at = 0;
    for (Var p : inputs) {
      const Eigen::Index c = g.value(p).cols();
      if (g.needs(p)) g.grad_ref(p) += n.grad.middleCols(at, c);
      at += c;
    }
  });
}

template <class T>
Var Graph<T>::columns(Var x, Eigen::Index start, Eigen::Index count) {
  const Mat<T>& xv = value(x);
  if (start < 0 || count < 0 || start + count > xv.cols()) {
    throw ShapeError("columns: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside " + shape_string(xv.rows(), xv.cols()));
  }
  Mat<T> out = xv.middleCols(start, count);
  return push(std::move(out), needs(x), [x, start, count](Graph& g, Node& n) {
    g.grad_ref(x).middleCols(start, count) += n.grad;
  });
}

template <class T>
Var Graph<T>::embedding_lookup(Var table, std::span<const int> ids, Eigen::Index ids_per_row) {
  const Mat<T>& tv = value(table);
  if (ids_per_row <= 0 || static_cast<Eigen::Index>(ids.size()) % ids_per_row != 0) {
    throw ShapeError("embedding_lookup: " + std::to_string(ids.size()) + " ids do not split into rows of " +
                     std::to_string(ids_per_row));
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(ids.size()) / ids_per_row;
  const Eigen::Index dim = tv.cols();
  Mat<T> out(rows, ids_per_row * dim);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index j = 0; j < ids_per_row; ++j) {
      const int id = ids[static_cast<std::size_t>(r * ids_per_row + j)];
      if (id < 0 || id >= tv.rows()) {
        throw ShapeError("embedding_lookup: id " + std::to_string(id) + " outside table " +
                         shape_string(tv.rows(), tv.cols()));
      }
      out.block(r, j * dim, 1, dim) = tv.row(id);
    }
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return push(std::move(out), needs(table), [table, saved = std::move(saved), ids_per_row](Graph& g, Node& n) {
    Mat<T>& tg = g.grad_ref(table);
    const Eigen::Index dim = tg.cols();
    const Eigen::Index rows = n.grad.rows();
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index j = 0; j < ids_per_row; ++j) {
        tg.row(saved[static_cast<std::size_t>(r * ids_per_row + j)]) += n.grad.block(r, j * dim, 1, dim);
      }
    }
  });
}

template <class T>
Var Graph<T>::maxpool_over_set(Var x, Eigen::Index set_size) {
  const Mat<T>& xv = value(x);
  if (set_size <= 0 || xv.rows() % set_size != 0) {
    throw ShapeError("maxpool_over_set: " + shape_string(xv.rows(), xv.cols()) + " does not split into sets of " +
                     std::to_string(set_size));
  }
  const Eigen::Index groups = xv.rows() / set_size;
  Mat<T> out(groups, xv.cols());
  std::vector<Eigen::Index> argmax(static_cast<std::size_t>(groups * xv.cols()));
  for (Eigen::Index gi = 0; gi < groups; ++gi) {
    for (Eigen::Index c = 0; c < xv.cols(); ++c) {
      Eigen::Index best = gi * set_size;
      for (Eigen::Index r = best + 1; r < (gi + 1) * set_size; ++r) {
        if (xv(r, c) > xv(best, c)) best = r;  // strict: first index wins ties
      }
      out(gi, c) = xv(best, c);
      argmax[static_cast<std::size_t>(gi * xv.cols() + c)] = best;
    }
  }
  return push(std::move(out), needs(x), [x, argmax = std::move(argmax)](Graph& g, Node& n) {
    Mat<T>& xg = g.grad_ref(x);
    const Eigen::Index cols = n.grad.cols();
    for (Eigen::Index gi = 0; gi < n.grad.rows(); ++gi) {
      for (Eigen::Index c = 0; c < cols; ++c) xg(argmax[static_cast<std::size_t>(gi * cols + c)], c) += n.grad(gi, c);
    }
  });
}

template <class T>
Var Graph<T>::lstm_cell(Var x, Var state, Var w, Var b) {
  auto cache = std::make_shared<LstmCache<T>>();
  Mat<T> next = lstm_forward(value(x), value(state), value(w), value(b), cache.get());
  const bool any = needs(x) || needs(state) || needs(w) || needs(b);
  return push(std::move(next), any, [x, state, w, b, cache](Graph& g, Node& n) {
    const Eigen::Index H = n.value.cols() / 2;
    const auto& gates = cache->gates;
    auto i = gates.leftCols(H).array();
    auto f = gates.middleCols(H, H).array();
    auto gg = gates.middleCols(2 * H, H).array();
    auto o = gates.rightCols(H).array();
    auto tc = cache->tanh_c.array();
    auto dh = n.grad.leftCols(H).array();

    Mat<T> dc = n.grad.rightCols(H);
    dc.array() += dh * o * (T(1) - tc.square());
    Mat<T> dgates(gates.rows(), 4 * H);
    dgates.leftCols(H).array() = dc.array() * gg * i * (T(1) - i);
    dgates.middleCols(H, H).array() = dc.array() * cache->c_prev.array() * f * (T(1) - f);
    dgates.middleCols(2 * H, H).array() = dc.array() * i * (T(1) - gg.square());
    dgates.rightCols(H).array() = dh * tc * o * (T(1) - o);

    if (g.needs(w)) g.grad_ref(w).noalias() += cache->xh.transpose() * dgates;
    if (g.needs(b)) g.grad_ref(b) += dgates.colwise().sum();
    if (g.needs(x) || g.needs(state)) {
      Mat<T> dxh(dgates.rows(), g.value(w).rows());
      dxh.noalias() = dgates * g.value(w).transpose();
      const Eigen::Index in = g.value(x).cols();
      if (g.needs(x)) g.grad_ref(x) += dxh.leftCols(in);
      if (g.needs(state)) {
        Mat<T>& sg = g.grad_ref(state);
        sg.leftCols(H) += dxh.rightCols(H);
        sg.rightCols(H).array() += dc.array() * f;
      }
    }
  });
}

template <class T>
Var Graph<T>::softmax_xent(Var logits, std::span<const int> targets) {
  const Mat<T>& lv = value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != lv.rows()) {
    throw ShapeError("softmax_xent: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_string(lv.rows(), lv.cols()));
  }
  Mat<T> logp = log_softmax_rows(lv);
  T loss = 0;
  for (Eigen::Index r = 0; r < lv.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0) continue;
    if (t >= lv.cols()) throw ShapeError("softmax_xent: target " + std::to_string(t) + " out of range");
    loss -= logp(r, t);
  }
  Mat<T> out(1, 1);
  out(0, 0) = loss;
  std::vector<int> saved(targets.begin(), targets.end());
  return push(std::move(out), needs(logits),
              [logits, logp = std::move(logp), saved = std::move(saved)](Graph& g, Node& n) {
                Mat<T>& lg = g.grad_ref(logits);
                const T seed = n.grad(0, 0);
                for (Eigen::Index r = 0; r < logp.rows(); ++r) {
                  const int t = saved[static_cast<std::size_t>(r)];
                  if (t < 0) continue;
                  lg.row(r).array() += seed * logp.row(r).array().exp();
                  lg(r, t) -= seed;
                }
              });
}

template <class T>
void Graph<T>::backward(Var root) {
  Node& r = node(root);
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw ShapeError("backward: root must be 1 x 1, got " + shape_string(r.value.rows(), r.value.cols()));
  }
  grad_ref(root)(0, 0) = T(1);
  for (std::size_t k = nodes_.size(); k-- > 0;) {
    Node& n = nodes_[k];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.param) {
      n.param->grad += n.grad;
    } else if (n.backprop) {
      n.backprop(*this, n);
    }
  }
}

// ---------------------------------------------------------------------------
// Adam

template <class T>
AdamReport adam_step(ParamStore<T>& params, const AdamConfig& config) {
  AdamReport report;
  double sq = 0;
  for (const auto& [name, p] : params.params()) sq += p.grad.template cast<double>().squaredNorm();
  report.grad_norm = std::sqrt(sq);
  if (!std::isfinite(report.grad_norm)) return report;
  if (config.clip_norm > 0 && report.grad_norm > config.clip_norm) {
    report.clip_scale = config.clip_norm / report.grad_norm;
  }
  const long t = params.adam_steps() + 1;
  const double bc1 = 1 - std::pow(config.beta1, static_cast<double>(t));
  const double bc2 = 1 - std::pow(config.beta2, static_cast<double>(t));
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T scale = static_cast<T>(report.clip_scale);
  const T lr = static_cast<T>(config.lr);
  const T eps = static_cast<T>(config.eps);
  const T inv_bc1 = static_cast<T>(1 / bc1);
  const T inv_bc2 = static_cast<T>(1 / bc2);
  for (auto& [name, p] : params.params()) {
    auto g = (p.grad.array() * scale).eval();
    p.adam_m.array() = b1 * p.adam_m.array() + (T(1) - b1) * g;
    p.adam_v.array() = b2 * p.adam_v.array() + (T(1) - b2) * g.square();
    p.value.array() -= lr * (p.adam_m.array() * inv_bc1) / ((p.adam_v.array() * inv_bc2).sqrt() + eps);
  }
  params.set_adam_steps(t);
  report.applied = true;
  return report;
}

// ---------------------------------------------------------------------------
// Gradient checking

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(ParamStore<double>& params,
                           const std::function<Var(Graph<double>&, ParamStore<double>&)>& build, double h,
                           std::size_t max_per_param) {
  params.zero_grad();
  {
    Graph<double> g;
    Var loss = build(g, params);
    g.backward(loss);
  }
  auto eval = [&]() {
    Graph<double> g;
    Var loss = build(g, params);
    return g.value(loss)(0, 0);
  };
  GradCheckReport report;
  const double resolution = std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(eval())) / h;
  report.floor = std::max(kMinGradFloor, kResolutionMultiple * resolution);
  for (auto& [name, p] : params.params()) {
    const Eigen::Index n = p.value.size();
    Eigen::Index stride = 1;
    if (max_per_param > 0 && static_cast<std::size_t>(n) > max_per_param) {
      stride = n / static_cast<Eigen::Index>(max_per_param);
    }
    for (Eigen::Index i = 0; i < n; i += stride) {
      double& x = p.value.data()[i];
      const double saved = x;
      x = saved + h;
      const double up = eval();
      x = saved - h;
      const double down = eval();
      x = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p.grad.data()[i];
      const double err = relative_error(analytic, numeric, report.floor);
      ++report.checked;
      if (report.worst.param.empty() || err > report.worst_rel_error) {
        report.worst_rel_error = err;
        report.worst = {name, i, analytic, numeric, err};
      }
    }
  }
  return report;
}

#define PBE_INSTANTIATE(T)                                                                              \
  template class ParamStore<T>;                                                                         \
  template class Graph<T>;                                                                              \
  template Mat<T> lstm_forward<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, const Mat<T>&, LstmCache<T>*); \
  template Mat<T> log_softmax_rows<T>(const Mat<T>&);                                                   \
  template void xavier_uniform<T>(Mat<T>&, std::uint64_t);                                              \
  template AdamReport adam_step<T>(ParamStore<T>&, const AdamConfig&);

PBE_INSTANTIATE(float)
PBE_INSTANTIATE(double)

#undef PBE_INSTANTIATE

}  // namespace pbe::ad
