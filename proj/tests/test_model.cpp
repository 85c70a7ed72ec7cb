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

#include <algorithm>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "pbe/model.hpp"
#include "pbe/search.hpp"

using namespace pbe;
using ad::Graph;
using ad::Mat;
using ad::ParamStore;

namespace {

ModelConfig small_config(int hidden = 16) {
  ModelConfig c;
  c.hidden = hidden;
  c.char_embed = 4;
  c.token_embed = 8;
  c.io_width = 40;
  c.init_seed = 3;
  return c;
}

std::vector<Example> name_phone_examples() {
  std::vector<Example> out;
  for (const auto& [in, o] : testing::kNamePhoneRows) out.push_back({in, o});
  return out;
}

template <class T>
Mat<T> latent_of(const ParamStore<T>& params, const ModelConfig& c, std::span<const Example> examples,
                 std::span<const ExecutedSlot> executed) {
  return encode_values(params, c, encode_examples(examples, executed, c.io_width));
}

const std::vector<ExecutedSlot> kDummies(kNumExamples, ExecutedSlot::dummy());

}  // namespace

TEST_CASE("parameter layout") {
  const ModelConfig c = small_config();
  const auto params = init_params<float>(c);
  validate_params(params, c);
  int char_tables = 0, encoder_weights = 0;
  for (const auto& [name, p] : params.params()) {
    if (name.find("char_embedding") != std::string::npos) ++char_tables;
    if (name.rfind("enc.", 0) == 0 && name.find("weight") != std::string::npos) ++encoder_weights;
  }
  CHECK(char_tables == 1);
  CHECK(encoder_weights == kEncoderLayers);
  CHECK(params.at(param_names::kCharEmbedding).value.rows() == chr::kVocabSize);
  CHECK(params.at(param_names::kOutWeight).value.cols() == tok::kVocabSize);

  auto extra = params;
  extra.add("enc.char_embedding_fix", Mat<float>::Zero(chr::kVocabSize, c.char_embed));
  CHECK_THROWS_AS(validate_params(extra, c), std::invalid_argument);
  CHECK_THROWS_AS(validate_params(params, small_config(32)), std::invalid_argument);

  const auto again = init_params<float>(c);
  for (const auto& [name, p] : params.params()) CHECK(again.at(name).value == p.value);
}

TEST_CASE("encoder is invariant to example order") {
  const ModelConfig c = small_config();
  const auto params = init_params<double>(c);
  auto ex = name_phone_examples();
  const auto z = latent_of(params, c, ex, kDummies);
  std::sort(ex.begin(), ex.end(), [](const Example& a, const Example& b) { return a.input < b.input; });
  do {
    CHECK((latent_of(params, c, ex, kDummies) - z).cwiseAbs().maxCoeff() == 0.0);
  } while (std::next_permutation(ex.begin(), ex.end(),
                                 [](const Example& a, const Example& b) { return a.input < b.input; }));
}

TEST_CASE("encoder pools as a set") {
  const ModelConfig c = small_config();
  const auto params = init_params<double>(c);
  const auto ex = name_phone_examples();
  const std::vector<Example> a = {ex[0], ex[0], ex[0], ex[1]};
  const std::vector<Example> b = {ex[1], ex[0], ex[1], ex[1]};
  CHECK((latent_of(params, c, a, kDummies) - latent_of(params, c, b, kDummies)).cwiseAbs().maxCoeff() == 0.0);
  const std::vector<Example> same = {ex[2], ex[2], ex[2], ex[2]};
  const auto z = latent_of(params, c, same, kDummies);
  CHECK(z.rows() == 1);
  CHECK(z.cols() == c.hidden);
}

TEST_CASE("executed outputs change the latent") {
  const ModelConfig c = small_config();
  const auto params = init_params<double>(c);
  const auto ex = name_phone_examples();
  const auto z_e = latent_of(params, c, ex, kDummies);
  std::vector<ExecutedSlot> executed;
  for (const auto& e : ex) executed.push_back(ExecutedSlot::output(e.output.substr(0, 3)));
  CHECK((latent_of(params, c, ex, executed) - z_e).cwiseAbs().maxCoeff() > 0.0);
  const std::vector<ExecutedSlot> fails(kNumExamples, ExecutedSlot::fail());
  CHECK((latent_of(params, c, ex, fails) - z_e).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("greedy decoding") {
  const ModelConfig c = small_config();
  const auto params = init_params<float>(c);
  const auto ex = name_phone_examples();
  const auto z = latent_of(params, c, ex, kDummies);
  const auto a = decode_greedy(params, c, z, c.max_tokens);
  const auto b = decode_greedy(params, c, z, c.max_tokens);
  REQUIRE(a.size() == 1);
  CHECK(a[0].tokens == b[0].tokens);
  CHECK(a[0].log_prob == b[0].log_prob);
  CHECK(a[0].tokens.size() <= static_cast<std::size_t>(c.max_tokens));

  const NeuralSynthesizer model(params, c);
  const Hypothesis h = greedy_search(model, model.encode(ex, kDummies), c.max_tokens);
  CHECK(h.tokens == a[0].tokens);
  CHECK(h.log_prob == doctest::Approx(a[0].log_prob).epsilon(1e-5));
}

TEST_CASE("decoded log-prob equals the teacher-forced log-likelihood") {
  const ModelConfig c = small_config();
  auto params = init_params<double>(c);
  const auto ex = name_phone_examples();
  const auto z = latent_of(params, c, ex, kDummies);
  const auto greedy = decode_greedy(params, c, z, 12);
  std::vector<TokenSeq> targets = {greedy[0].tokens};
  CHECK(sequence_log_prob(params, c, z, targets)[0] == doctest::Approx(greedy[0].log_prob).epsilon(1e-10));

  targets = {program_to_tokens(parse_or_throw(testing::kNamePhoneProgram))};
  Graph<double> g;
  const BoundParams bp = bind_params(g, params);
  const auto zv = encode(g, bp, c, encode_examples(ex, kDummies, c.io_width));
  CHECK((g.value(zv) - z).cwiseAbs().maxCoeff() < 1e-12);
  const double nll = g.value(decode_nll(g, bp, c, zv, targets))(0, 0);
  CHECK(-nll == doctest::Approx(sequence_log_prob(params, c, z, targets)[0]).epsilon(1e-10));
}

// Training never masks, so PAD and BOS keep a little mass that is dropped here.
TEST_CASE("decoder step excludes PAD and BOS") {
  const ModelConfig c = small_config();
  const auto params = init_params<float>(c);
  Mat<float> state = Mat<float>::Zero(2, 2 * c.hidden), next, logp;
  const std::vector<int> tokens = {tok::kBos, tok::kSubStr};
  decoder_step(params, state, tokens, next, logp);
  for (int r = 0; r < 2; ++r) {
    CHECK(std::isinf(logp(r, tok::kPad)));
    CHECK(std::isinf(logp(r, tok::kBos)));
    const float mass = logp.row(r).array().exp().sum();
    CHECK(mass <= 1.0f + 1e-5f);
    CHECK(mass > 0.5f);
  }
}

TEST_CASE("decode_nll overfits a single program") {
  const ModelConfig c = small_config(32);
  auto params = init_params<double>(c);
  const auto ex = name_phone_examples();
  const auto batch = encode_examples(ex, kDummies, c.io_width);
  const std::vector<TokenSeq> targets = {program_to_tokens(parse_or_throw(testing::kNamePhoneProgram))};
  ad::AdamConfig opt;
  opt.lr = 1e-2;
  double nll = 0;
  for (int step = 0; step < 2000; ++step) {
    params.zero_grad();
    Graph<double> g;
    const BoundParams bp = bind_params(g, params);
    const auto loss = decode_nll(g, bp, c, encode(g, bp, c, batch), targets);
    nll = g.value(loss)(0, 0);
    if (nll < 0.01) break;
    g.backward(loss);
    ad::adam_step(params, opt);
  }
  CHECK(nll < 0.01);
  const auto decoded = decode_greedy(params, c, encode_values(params, c, batch), c.max_tokens);
  CHECK(decoded[0].tokens == targets[0]);
}

TEST_CASE("fix term sees intermediates only through executed outputs") {
  const ModelConfig c = small_config(8);
  auto params = init_params<double>(c);
  GenConfig gc;
  gc.max_expressions = 2;
  const auto tasks = generate_tasks(gc, SeedDomain::Train, 0, 3);

  auto grads = [&](const std::vector<Intermediate>* frozen, std::vector<Intermediate>* out) {
    params.zero_grad();
    Graph<double> g;
    const BoundParams bp = bind_params(g, params);
    const LossTerms terms = task_loss(g, bp, params, c, tasks, frozen, out);
    g.backward(terms.total);
    std::map<std::string, Mat<double>> out_grads;
    for (const auto& [name, p] : params.params()) out_grads[name] = p.grad;
    return std::make_pair(g.value(terms.total)(0, 0), out_grads);
  };
  std::vector<Intermediate> inter;
  const auto live = grads(nullptr, &inter);
  REQUIRE(inter.size() == tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    CHECK(inter[i].executed == execute_candidate(inter[i].tokens, tasks[i].examples));
  }
  const auto frozen = grads(&inter, nullptr);
  CHECK(live.first == frozen.first);
  for (const auto& [name, gr] : live.second) CHECK(gr == frozen.second.at(name));

  // Replacing the executed outputs moves the fix term only.
  std::vector<Intermediate> failed = inter;
  for (auto& it : failed) it.executed.assign(it.executed.size(), ExecutedSlot::fail());
  Graph<double> g1, g2;
  const BoundParams b1 = bind_params(g1, params), b2 = bind_params(g2, params);
  const LossTerms t1 = task_loss(g1, b1, params, c, tasks, &inter);
  const LossTerms t2 = task_loss(g2, b2, params, c, tasks, &failed);
  CHECK(g1.value(t1.examples)(0, 0) == g2.value(t2.examples)(0, 0));
  const bool any_change = !std::all_of(inter.begin(), inter.end(), [](const Intermediate& it) {
    return std::all_of(it.executed.begin(), it.executed.end(),
                       [](const ExecutedSlot& s) { return s.kind == ExecutedSlot::Kind::Fail; });
  });
  if (any_change) CHECK(g1.value(t1.fix)(0, 0) != g2.value(t2.fix)(0, 0));
}

TEST_CASE("execute_candidate turns every failure into FAIL") {
  const auto ex = name_phone_examples();
  const TokenSeq broken = {tok::kSubStr, tok::kEos};
  for (const auto& s : execute_candidate(broken, ex)) CHECK(s.kind == ExecutedSlot::Kind::Fail);
  const TokenSeq program = program_to_tokens(parse_or_throw("Concat(SubStr(Regex(Num, 4, Start), ConstPos(-1)))"));
  for (const auto& s : execute_candidate(program, ex)) CHECK(s.kind == ExecutedSlot::Kind::Fail);
  const TokenSeq good = program_to_tokens(parse_or_throw(testing::kNamePhoneProgram));
  const auto out = execute_candidate(good, ex);
  for (std::size_t i = 0; i < ex.size(); ++i) {
    CHECK(out[i].kind == ExecutedSlot::Kind::Output);
    CHECK(out[i].text == ex[i].output);
  }
}
