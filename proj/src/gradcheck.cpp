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

#include "pbe/gradcheck.hpp"

#include <algorithm>
#include <numeric>

#include "pbe/model.hpp"
#include "pbe/rng.hpp"
#include "pbe/taskgen.hpp"

namespace pbe {

using ad::Graph;
using ad::Mat;
using ad::ParamStore;
using ad::Var;
using DMat = Mat<double>;

namespace {

DMat random_mat(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1, double hi = 1) {
  DMat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = lo + (hi - lo) * rng.unit();
  return m;
}

// Entries with magnitude in [0.1, 1] so kinks stay far from the stencil.
DMat away_from_zero(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  DMat m = random_mat(rng, rows, cols, 0.1, 1.0);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (rng.bernoulli(0.5)) m.data()[i] = -m.data()[i];
  }
  return m;
}

// Column-wise distinct values spaced 0.05 apart so the argmax is stable.
DMat separated(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  DMat m(rows, cols);
  std::vector<int> order(static_cast<std::size_t>(rows));
  for (Eigen::Index c = 0; c < cols; ++c) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform(i)]);
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = 0.05 * order[static_cast<std::size_t>(r)] - 0.3;
  }
  return m;
}

// Fixed random projection to 1 x 1; same constants on every rebuild.
Var project(Graph<double>& g, Var y, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, SeedDomain::Init, 999);
  const Eigen::Index rows = g.value(y).rows(), cols = g.value(y).cols();
  const Var p = g.constant(random_mat(rng, cols, 1));
  const Var q = g.constant(random_mat(rng, 1, rows));
  return g.matmul(q, g.matmul(y, p));
}

using Build = std::function<Var(Graph<double>&, ParamStore<double>&)>;

GradCheckCase run(const std::string& name, ParamStore<double> params, const Build& build) {
  return {name, ad::grad_check(params, build)};
}

}  // namespace

std::vector<GradCheckCase> op_gradchecks(std::uint64_t seed) {
  Rng rng = Rng::stream(seed, SeedDomain::Init, 1000);
  std::vector<GradCheckCase> out;
  auto store = [](std::initializer_list<std::pair<const char*, DMat>> tensors) {
    ParamStore<double> s;
    for (const auto& [name, m] : tensors) s.add(name, m);
    return s;
  };

  out.push_back(run("matmul", store({{"x", random_mat(rng, 3, 4)}, {"w", random_mat(rng, 4, 5)}}),
                    [seed](Graph<double>& g, ParamStore<double>& p) {
                      return project(g, g.matmul(g.param(p.at("x")), g.param(p.at("w"))), seed);
                    }));
  out.push_back(run("add_bias", store({{"x", random_mat(rng, 3, 4)}, {"b", random_mat(rng, 1, 4)}}),
                    [seed](Graph<double>& g, ParamStore<double>& p) {
                      return project(g, g.add_bias(g.param(p.at("x")), g.param(p.at("b"))), seed);
                    }));
  out.push_back(run("add", store({{"a", random_mat(rng, 3, 4)}, {"b", random_mat(rng, 3, 4)}}),
                    [seed](Graph<double>& g, ParamStore<double>& p) {
                      return project(g, g.add(g.param(p.at("a")), g.param(p.at("b"))), seed);
                    }));
  out.push_back(run("scale", store({{"x", random_mat(rng, 3, 4)}}), [seed](Graph<double>& g, ParamStore<double>& p) {
    return project(g, g.scale(g.param(p.at("x")), -1.7), seed);
  }));
  out.push_back(run("relu", store({{"x", away_from_zero(rng, 3, 4)}}), [seed](Graph<double>& g, ParamStore<double>& p) {
    return project(g, g.relu(g.param(p.at("x"))), seed);
  }));
  out.push_back(run("tanh", store({{"x", random_mat(rng, 3, 4, -2, 2)}}),
                    [seed](Graph<double>& g, ParamStore<double>& p) {
                      return project(g, g.tanh(g.param(p.at("x"))), seed);
                    }));
  out.push_back(run("sigmoid", store({{"x", random_mat(rng, 3, 4, -3, 3)}}),
                    [seed](Graph<double>& g, ParamStore<double>& p) {
                      return project(g, g.sigmoid(g.param(p.at("x"))), seed);
                    }));
  out.push_back(run("concat", store({{"a", random_mat(rng, 3, 2)}, {"b", random_mat(rng, 3, 4)}}),
                    [seed](Graph<double>& g, ParamStore<double>& p) {
                      const std::array<Var, 3> parts = {g.param(p.at("a")), g.param(p.at("b")), g.param(p.at("a"))};
                      return project(g, g.concat(parts), seed);
                    }));
  out.push_back(run("columns", store({{"x", random_mat(rng, 3, 6)}}), [seed](Graph<double>& g, ParamStore<double>& p) {
    return project(g, g.columns(g.param(p.at("x")), 1, 3), seed);
  }));
  out.push_back(run("embedding_lookup", store({{"table", random_mat(rng, 5, 3)}}),
                    [seed](Graph<double>& g, ParamStore<double>& p) {
                      static const std::vector<int> ids = {0, 3, 3, 1, 4, 0};
                      return project(g, g.embedding_lookup(g.param(p.at("table")), ids, 2), seed);
                    }));
  out.push_back(run("maxpool_over_set", store({{"x", separated(rng, 6, 4)}}),
                    [seed](Graph<double>& g, ParamStore<double>& p) {
                      return project(g, g.maxpool_over_set(g.param(p.at("x")), 3), seed);
                    }));
  {
    const int in = 3, h = 4;
    out.push_back(run("lstm_cell",
                      store({{"x", random_mat(rng, 2, in)},
                             {"state", random_mat(rng, 2, 2 * h)},
                             {"w", random_mat(rng, in + h, 4 * h, -0.5, 0.5)},
                             {"b", random_mat(rng, 1, 4 * h, -0.5, 0.5)}}),
                      [seed](Graph<double>& g, ParamStore<double>& p) {
                        return project(g,
                                       g.lstm_cell(g.param(p.at("x")), g.param(p.at("state")), g.param(p.at("w")),
                                                   g.param(p.at("b"))),
                                       seed);
                      }));
  }
  out.push_back(run("softmax_xent", store({{"logits", random_mat(rng, 4, 6, -2, 2)}}),
                    [](Graph<double>& g, ParamStore<double>& p) {
                      static const std::vector<int> targets = {2, -1, 0, 5};
                      return g.softmax_xent(g.param(p.at("logits")), targets);
                    }));
  return out;
}

GradCheckCase task_loss_gradcheck(std::uint64_t seed, int hidden, std::size_t max_per_param) {
  ModelConfig mc;
  mc.hidden = hidden;
  mc.char_embed = 4;
  mc.token_embed = 4;
  mc.io_width = 12;
  mc.init_seed = seed;
  GenConfig gc;
  gc.max_expressions = 2;
  gc.max_io_len = 12;
  gc.seed = seed;
  const std::vector<Task> tasks = generate_tasks(gc, SeedDomain::Train, 0, 2);
  ParamStore<double> params = init_params<double>(mc);
  // Zero biases put dead relu rows exactly on the kink; move off init.
  Rng rng = Rng::stream(seed, SeedDomain::Init, 1001);
  for (auto& [name, p] : params.params()) p.value += random_mat(rng, p.value.rows(), p.value.cols(), -0.1, 0.1);

  std::vector<Intermediate> frozen;
  {
    Graph<double> g;
    const BoundParams bp = bind_params(g, params);
    task_loss(g, bp, params, mc, tasks, nullptr, &frozen);
  }
  const auto build = [&](Graph<double>& g, ParamStore<double>& p) {
    const BoundParams bp = bind_params(g, p);
    return task_loss(g, bp, p, mc, tasks, &frozen).total;
  };
  return {"task_loss(H=" + std::to_string(hidden) + ")", ad::grad_check(params, build, 1e-5, max_per_param)};
}

}  // namespace pbe
