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

#include <cmath>
#include <limits>

#include "doctest.h"
#include "pbe/autodiff.hpp"
#include "pbe/gradcheck.hpp"
#include "pbe/rng.hpp"

using namespace pbe;
using ad::Graph;
using ad::Mat;
using ad::ParamStore;
using ad::Var;
using DMat = Mat<double>;

namespace {

DMat random_mat(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  DMat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 2 * rng.unit() - 1;
  return m;
}

double sig(double x) { return 1 / (1 + std::exp(-x)); }

// Scalar-loop LSTM, gate order i, f, g, o; state is [h | c].
DMat lstm_oracle(const DMat& x, const DMat& state, const DMat& w, const DMat& b) {
  const Eigen::Index H = state.cols() / 2, in = x.cols();
  DMat out(x.rows(), 2 * H);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::vector<double> z(static_cast<std::size_t>(4 * H));
    for (Eigen::Index j = 0; j < 4 * H; ++j) {
      double s = b(0, j);
      for (Eigen::Index k = 0; k < in; ++k) s += x(r, k) * w(k, j);
      for (Eigen::Index k = 0; k < H; ++k) s += state(r, k) * w(in + k, j);
      z[static_cast<std::size_t>(j)] = s;
    }
    for (Eigen::Index j = 0; j < H; ++j) {
      const double i = sig(z[static_cast<std::size_t>(j)]);
      const double f = sig(z[static_cast<std::size_t>(H + j)]);
      const double g = std::tanh(z[static_cast<std::size_t>(2 * H + j)]);
      const double o = sig(z[static_cast<std::size_t>(3 * H + j)]);
      const double c = f * state(r, H + j) + i * g;
      out(r, H + j) = c;
      out(r, j) = o * std::tanh(c);
    }
  }
  return out;
}

ParamStore<double> scalar_store(double value, double grad) {
  ParamStore<double> s;
  s.add("x", DMat::Constant(1, 1, value)).grad(0, 0) = grad;
  return s;
}

}  // namespace

TEST_CASE("every op passes the finite-difference check") {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    for (const auto& c : op_gradchecks(seed)) {
      CHECK_MESSAGE(c.report.passed(kGradCheckTolerance), c.name, " rel error ", c.report.worst_rel_error);
      CHECK(c.report.checked > 0);
      if (c.name == "matmul" || c.name == "add_bias") CHECK(c.report.worst_rel_error < 1e-6);
      if (c.name == "lstm_cell") CHECK(c.report.worst_rel_error < 1e-5);
    }
  }
}

TEST_CASE("task loss passes the finite-difference check") {
  const auto c = task_loss_gradcheck(0, 8);
  CHECK_MESSAGE(c.report.passed(kGradCheckTolerance), c.report.worst.param, " rel error ", c.report.worst_rel_error);
  CHECK(c.report.checked > 1000);
}

TEST_CASE("lstm_forward matches the scalar oracle") {
  Rng rng = Rng::stream(3, SeedDomain::Init, 0);
  const DMat x = random_mat(rng, 3, 5), state = random_mat(rng, 3, 8), w = random_mat(rng, 9, 16),
             b = random_mat(rng, 1, 16);
  CHECK((ad::lstm_forward(x, state, w, b) - lstm_oracle(x, state, w, b)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(ad::lstm_forward(x, state, random_mat(rng, 8, 16), b), ad::ShapeError);
}

TEST_CASE("maxpool_over_set") {
  SUBCASE("set size one is the identity") {
    ParamStore<double> s;
    Rng rng = Rng::stream(4, SeedDomain::Init, 0);
    s.add("x", random_mat(rng, 3, 2));
    Graph<double> g;
    const Var x = g.param(s.at("x"));
    const Var y = g.maxpool_over_set(x, 1);
    CHECK(g.value(y) == s.at("x").value);
    const Var loss = g.matmul(g.constant(DMat::Ones(1, 3)), g.matmul(y, g.constant(DMat::Ones(2, 1))));
    g.backward(loss);
    CHECK(s.at("x").grad == DMat::Ones(3, 2));
  }
  SUBCASE("ties route the gradient to the first row") {
    ParamStore<double> s;
    s.add("x", (DMat(4, 1) << 0.5, 0.5, 2.0, 1.0).finished());
    Graph<double> g;
    const Var y = g.maxpool_over_set(g.param(s.at("x")), 2);
    CHECK(g.value(y) == (DMat(2, 1) << 0.5, 2.0).finished());
    g.backward(g.matmul(g.constant(DMat::Ones(1, 2)), y));
    CHECK(s.at("x").grad == (DMat(4, 1) << 1, 0, 1, 0).finished());
  }
  SUBCASE("indivisible rows are a shape error") {
    Graph<double> g;
    CHECK_THROWS_AS(g.maxpool_over_set(g.constant(DMat::Zero(5, 2)), 2), ad::ShapeError);
  }
}

TEST_CASE("tanh derivative at zero is one") {
  ParamStore<double> s = scalar_store(0.0, 0.0);
  Graph<double> g;
  g.backward(g.tanh(g.param(s.at("x"))));
  CHECK(s.at("x").grad(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("softmax_xent") {
  Rng rng = Rng::stream(5, SeedDomain::Init, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const DMat logits = random_mat(rng, 3, 7) * 5;
    const std::vector<int> targets = {rng.uniform_int(0, 6), -1, rng.uniform_int(0, 6)};
    Graph<double> g;
    const double loss = g.value(g.softmax_xent(g.constant(logits), targets))(0, 0);
    double want = 0;
    for (int r : {0, 2}) {
      double z = 0;
      for (Eigen::Index c = 0; c < 7; ++c) z += std::exp(logits(r, c));
      want += std::log(z) - logits(r, targets[static_cast<std::size_t>(r)]);
    }
    CHECK(loss >= 0);
    CHECK(loss == doctest::Approx(want).epsilon(1e-12));
  }
  Graph<double> g;
  const std::vector<int> bad = {9};
  CHECK_THROWS_AS(g.softmax_xent(g.constant(DMat::Zero(1, 3)), bad), ad::ShapeError);
}

TEST_CASE("adam matches hand arithmetic") {
  ad::AdamConfig config;
  config.lr = 0.1;
  config.clip_norm = 0;
  ParamStore<double> s = scalar_store(1.0, 0.5);
  auto r = ad::adam_step(s, config);
  CHECK(r.applied);
  // m = 0.05, v = 0.00025; corrected to 0.5 and 0.25.
  CHECK(s.at("x").adam_m(0, 0) == doctest::Approx(0.05));
  CHECK(s.at("x").adam_v(0, 0) == doctest::Approx(0.00025));
  CHECK(s.at("x").value(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));

  s.at("x").grad(0, 0) = -1.0;
  const double before = s.at("x").value(0, 0);
  ad::adam_step(s, config);
  const double m = 0.9 * 0.05 - 0.1, v = 0.999 * 0.00025 + 0.001;
  const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.998001);
  CHECK(s.at("x").value(0, 0) == doctest::Approx(before - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)).epsilon(1e-12));
  CHECK(s.adam_steps() == 2);
}

TEST_CASE("adam with zero gradient leaves fresh parameters unchanged") {
  ParamStore<double> s;
  Rng rng = Rng::stream(6, SeedDomain::Init, 0);
  s.add("w", random_mat(rng, 3, 3));
  const DMat before = s.at("w").value;
  ad::adam_step(s, ad::AdamConfig{});
  CHECK(s.at("w").value == before);
}

TEST_CASE("adam clips by global norm") {
  ad::AdamConfig config;
  config.clip_norm = 1.0;
  ParamStore<double> s;
  s.add("a", DMat::Zero(1, 1)).grad(0, 0) = 2.0 * 0.6;
  s.add("b", DMat::Zero(1, 1)).grad(0, 0) = 2.0 * 0.8;
  const auto r = ad::adam_step(s, config);
  CHECK(r.grad_norm == doctest::Approx(2.0));
  CHECK(r.clip_scale == doctest::Approx(0.5));
  CHECK(s.at("a").adam_m(0, 0) == doctest::Approx(0.1 * 0.6));
  CHECK(s.at("b").adam_m(0, 0) == doctest::Approx(0.1 * 0.8));
}

TEST_CASE("adam skips non-finite gradients") {
  ParamStore<double> s = scalar_store(1.0, std::numeric_limits<double>::quiet_NaN());
  s.add("y", DMat::Ones(2, 2)).grad.setConstant(0.3);
  const auto r = ad::adam_step(s, ad::AdamConfig{});
  CHECK_FALSE(r.applied);
  CHECK(s.at("x").value(0, 0) == 1.0);
  CHECK(s.at("y").value == DMat::Ones(2, 2));
  CHECK(s.at("y").adam_m == DMat::Zero(2, 2));
  CHECK(s.adam_steps() == 0);
}

TEST_CASE("param store") {
  ParamStore<double> s;
  s.add("a", DMat::Ones(2, 3));
  CHECK_THROWS_AS(s.add("a", DMat::Ones(1, 1)), std::invalid_argument);
  CHECK(s.scalar_count() == 6);
  const ParamStore<float> f = s.cast<float>();
  CHECK(f.at("a").value == Mat<float>::Ones(2, 3));
  CHECK(f.at("a").grad.size() == 6);
}

TEST_CASE("shape errors name both shapes") {
  Graph<double> g;
  const Var a = g.constant(DMat::Zero(2, 3));
  const Var b = g.constant(DMat::Zero(2, 3));
  try {
    g.matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ad::ShapeError& e) {
    CHECK(std::string(e.what()).find("2 x 3") != std::string::npos);
  }
  CHECK_THROWS_AS(g.backward(a), ad::ShapeError);
}
