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

#include "pbe/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "pbe/rng.hpp"

namespace pbe {

using ad::Mat;
using ad::Var;

void ModelConfig::validate() const {
  if (hidden < 1 || char_embed < 1 || token_embed < 1) throw std::invalid_argument("model dimensions must be >= 1");
  if (io_width < 1 || io_width > kMaxStringLength) throw std::invalid_argument("io_width must be in [1, 80]");
  if (num_examples != kNumExamples) throw std::invalid_argument("num_examples must be 4");
  if (encoder_layers != kEncoderLayers) throw std::invalid_argument("encoder_layers must be 5");
  if (max_tokens < 1 || max_tokens > kMaxTokens) throw std::invalid_argument("max_tokens must be in [1, 128]");
  if (char_vocab != chr::kVocabSize) throw std::invalid_argument("char_vocab does not match the character vocabulary");
  if (token_vocab != tok::kVocabSize) throw std::invalid_argument("token_vocab does not match the token vocabulary");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"hidden", c.hidden},         {"char_embed", c.char_embed},
       {"token_embed", c.token_embed}, {"io_width", c.io_width},
       {"num_examples", c.num_examples}, {"encoder_layers", c.encoder_layers},
       {"max_tokens", c.max_tokens},   {"char_vocab", c.char_vocab},
       {"token_vocab", c.token_vocab}, {"init_seed", c.init_seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.hidden = j.value("hidden", d.hidden);
  c.char_embed = j.value("char_embed", d.char_embed);
  c.token_embed = j.value("token_embed", d.token_embed);
  c.io_width = j.value("io_width", d.io_width);
  c.num_examples = j.value("num_examples", d.num_examples);
  c.encoder_layers = j.value("encoder_layers", d.encoder_layers);
  c.max_tokens = j.value("max_tokens", d.max_tokens);
  c.char_vocab = j.value("char_vocab", d.char_vocab);
  c.token_vocab = j.value("token_vocab", d.token_vocab);
  c.init_seed = j.value("init_seed", d.init_seed);
}

namespace param_names {
std::string encoder_weight(int layer) { return "enc.layer" + std::to_string(layer) + ".weight"; }
std::string encoder_bias(int layer) { return "enc.layer" + std::to_string(layer) + ".bias"; }
}  // namespace param_names

namespace {

struct TensorSpec {
  std::string name;
  Eigen::Index rows;
  Eigen::Index cols;
  enum class Init { Xavier, Zero, LstmBias } init;
};

std::vector<TensorSpec> tensor_specs(const ModelConfig& c) {
  using I = TensorSpec::Init;
  std::vector<TensorSpec> specs;
  specs.push_back({param_names::kCharEmbedding, c.char_vocab, c.char_embed, I::Xavier});
  Eigen::Index in = static_cast<Eigen::Index>(3) * c.io_width * c.char_embed;
  for (int l = 0; l < kEncoderLayers; ++l) {
    specs.push_back({param_names::encoder_weight(l), in, c.hidden, I::Xavier});
    specs.push_back({param_names::encoder_bias(l), 1, c.hidden, I::Zero});
    in = c.hidden;
  }
  specs.push_back({param_names::kTokenEmbedding, c.token_vocab, c.token_embed, I::Xavier});
  specs.push_back({param_names::kLstmWeight, c.token_embed + c.hidden, 4 * c.hidden, I::Xavier});
  specs.push_back({param_names::kLstmBias, 1, 4 * c.hidden, I::LstmBias});
  specs.push_back({param_names::kOutWeight, c.hidden, c.token_vocab, I::Xavier});
  specs.push_back({param_names::kOutBias, 1, c.token_vocab, I::Zero});
  return specs;
}

template <class T>
const Mat<T>& value_of(const ad::ParamStore<T>& params, std::string_view name) {
  return params.at(name).value;
}

template <class T>
void mask_unemittable(Mat<T>& log_probs) {
  const T ninf = -std::numeric_limits<T>::infinity();
  log_probs.col(tok::kPad).setConstant(ninf);
  log_probs.col(tok::kBos).setConstant(ninf);
}

}  // namespace

template <class T>
ad::ParamStore<T> init_params(const ModelConfig& config) {
  config.validate();
  ad::ParamStore<T> params;
  std::uint64_t ordinal = 0;
  for (const auto& spec : tensor_specs(config)) {
    Mat<T> m = Mat<T>::Zero(spec.rows, spec.cols);
    switch (spec.init) {
      case TensorSpec::Init::Xavier:
        ad::xavier_uniform(m, Rng::stream(config.init_seed, SeedDomain::Init, ordinal).next());
        break;
      case TensorSpec::Init::Zero:
        break;
      case TensorSpec::Init::LstmBias:
        m.middleCols(config.hidden, config.hidden).setOnes();  // forget gate
        break;
    }
    ++ordinal;
    params.add(spec.name, std::move(m));
  }
  return params;
}

template <class T>
void validate_params(const ad::ParamStore<T>& params, const ModelConfig& config) {
  const auto specs = tensor_specs(config);
  if (params.size() != specs.size()) {
    throw std::invalid_argument("expected " + std::to_string(specs.size()) + " tensors, found " +
                                std::to_string(params.size()));
  }
  for (const auto& spec : specs) {
    if (!params.contains(spec.name)) throw std::invalid_argument("missing tensor " + spec.name);
    const auto& v = params.at(spec.name).value;
    if (v.rows() != spec.rows || v.cols() != spec.cols) {
      throw std::invalid_argument("tensor " + spec.name + " has shape " + ad::shape_string(v.rows(), v.cols()) +
                                  ", expected " + ad::shape_string(spec.rows, spec.cols));
    }
  }
}

template <class T>
BoundParams bind_params(ad::Graph<T>& g, ad::ParamStore<T>& params) {
  BoundParams b;
  b.char_embedding = g.param(params.at(param_names::kCharEmbedding));
  for (int l = 0; l < kEncoderLayers; ++l) {
    b.enc_weight[static_cast<std::size_t>(l)] = g.param(params.at(param_names::encoder_weight(l)));
    b.enc_bias[static_cast<std::size_t>(l)] = g.param(params.at(param_names::encoder_bias(l)));
  }
  b.token_embedding = g.param(params.at(param_names::kTokenEmbedding));
  b.lstm_weight = g.param(params.at(param_names::kLstmWeight));
  b.lstm_bias = g.param(params.at(param_names::kLstmBias));
  b.out_weight = g.param(params.at(param_names::kOutWeight));
  b.out_bias = g.param(params.at(param_names::kOutBias));
  return b;
}

TripletBatch encode_examples(std::span<const Example> examples, std::span<const ExecutedSlot> executed,
                             int io_width) {
  if (executed.size() != examples.size()) {
    throw std::invalid_argument("one executed slot per example required");
  }
  TripletBatch batch;
  batch.ids.reserve(examples.size() * static_cast<std::size_t>(3 * io_width));
  for (std::size_t i = 0; i < examples.size(); ++i) {
    encode_triplet_into(batch.ids, examples[i].input, examples[i].output, executed[i], io_width);
  }
  batch.rows = static_cast<int>(examples.size());
  return batch;
}

std::vector<ExecutedSlot> execute_candidate(std::span<const int> tokens, std::span<const Example> examples) {
  std::vector<ExecutedSlot> out;
  out.reserve(examples.size());
  auto decoded = tokens_to_program(tokens);
  const Program* program = std::get_if<Program>(&decoded);
  for (const auto& ex : examples) {
    if (!program) {
      out.push_back(ExecutedSlot::fail());
      continue;
    }
    auto result = execute(*program, ex.input);
    if (auto* s = std::get_if<std::string>(&result)) {
      out.push_back(ExecutedSlot::output(std::move(*s)));
    } else {
      out.push_back(ExecutedSlot::fail());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Graph construction

template <class T>
Var encode(ad::Graph<T>& g, const BoundParams& p, const ModelConfig& config, const TripletBatch& batch) {
  if (batch.rows % config.num_examples != 0) {
    throw ad::ShapeError("encode: " + std::to_string(batch.rows) + " triplets are not sets of " +
                         std::to_string(config.num_examples));
  }
  Var h = g.embedding_lookup(p.char_embedding, batch.ids, 3 * config.io_width);
  for (int l = 0; l < kEncoderLayers; ++l) {
    h = g.add_bias(g.matmul(h, p.enc_weight[static_cast<std::size_t>(l)]), p.enc_bias[static_cast<std::size_t>(l)]);
    if (l + 1 < kEncoderLayers) h = g.relu(h);
  }
  return g.maxpool_over_set(h, config.num_examples);
}

template <class T>
Var decode_nll(ad::Graph<T>& g, const BoundParams& p, const ModelConfig& config, Var latent,
               std::span<const TokenSeq> targets) {
  const Eigen::Index rows = g.value(latent).rows();
  if (static_cast<Eigen::Index>(targets.size()) != rows) {
    throw ad::ShapeError("decode_nll: " + std::to_string(targets.size()) + " targets for " + std::to_string(rows) +
                         " latent rows");
  }
  std::size_t steps = 0;
  for (const auto& t : targets) {
    if (t.empty()) throw std::invalid_argument("decode_nll: empty target");
    steps = std::max(steps, t.size());
  }
  Var zeros = g.constant(Mat<T>::Zero(rows, config.hidden));
  const std::array<Var, 2> init = {latent, zeros};
  Var state = g.concat(init);
  Var total;
  std::vector<int> inputs(static_cast<std::size_t>(rows));
  std::vector<int> labels(static_cast<std::size_t>(rows));
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t r = 0; r < targets.size(); ++r) {
      const auto& seq = targets[r];
      inputs[r] = t == 0 ? tok::kBos : (t - 1 < seq.size() ? seq[t - 1] : tok::kPad);
      labels[r] = t < seq.size() ? seq[t] : -1;
    }
    Var x = g.embedding_lookup(p.token_embedding, inputs, 1);
    state = g.lstm_cell(x, state, p.lstm_weight, p.lstm_bias);
    Var h = g.columns(state, 0, config.hidden);
    Var logits = g.add_bias(g.matmul(h, p.out_weight), p.out_bias);
    Var loss = g.softmax_xent(logits, labels);
    total = total.valid() ? g.add(total, loss) : loss;
  }
  return total;
}

template <class T>
LossTerms task_loss(ad::Graph<T>& g, const BoundParams& p, const ad::ParamStore<T>& params, const ModelConfig& config,
                    std::span<const Task> tasks, const std::vector<Intermediate>* frozen,
                    std::vector<Intermediate>* intermediates_out) {
  if (tasks.empty()) throw std::invalid_argument("task_loss: empty batch");
  if (frozen && frozen->size() != tasks.size()) throw std::invalid_argument("task_loss: frozen size mismatch");
  const std::vector<ExecutedSlot> dummies(static_cast<std::size_t>(config.num_examples), ExecutedSlot::dummy());

  TripletBatch first;
  for (const auto& task : tasks) {
    for (std::size_t n = 0; n < task.examples.size(); ++n) {
      encode_triplet_into(first.ids, task.examples[n].input, task.examples[n].output, dummies[n], config.io_width);
    }
    first.rows += static_cast<int>(task.examples.size());
  }
  Var z_examples = encode(g, p, config, first);

  std::vector<Intermediate> inter;
  if (frozen) {
    inter = *frozen;
  } else {
    auto decoded = decode_greedy(params, config, g.value(z_examples), config.max_tokens);
    inter.resize(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      inter[i].tokens = std::move(decoded[i].tokens);
      inter[i].executed = execute_candidate(inter[i].tokens, tasks[i].examples);
    }
  }

  TripletBatch second;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& task = tasks[i];
    for (std::size_t n = 0; n < task.examples.size(); ++n) {
      encode_triplet_into(second.ids, task.examples[n].input, task.examples[n].output, inter[i].executed[n],
                          config.io_width);
    }
    second.rows += static_cast<int>(task.examples.size());
  }
  Var z_fix = encode(g, p, config, second);

  std::vector<TokenSeq> targets;
  targets.reserve(tasks.size());
  for (const auto& task : tasks) targets.push_back(program_to_tokens(task.program));

  const T inv = T(1) / static_cast<T>(tasks.size());
  LossTerms terms;
  terms.examples = g.scale(decode_nll(g, p, config, z_examples, targets), inv);
  terms.fix = g.scale(decode_nll(g, p, config, z_fix, targets), inv);
  terms.total = g.add(terms.examples, terms.fix);
  if (intermediates_out) *intermediates_out = std::move(inter);
  return terms;
}

// ---------------------------------------------------------------------------
// Inference

template <class T>
Mat<T> encode_values(const ad::ParamStore<T>& params, const ModelConfig& config, const TripletBatch& batch) {
  const Mat<T>& table = value_of(params, param_names::kCharEmbedding);
  const Eigen::Index width = 3 * config.io_width;
  const Eigen::Index dim = table.cols();
  if (batch.rows % config.num_examples != 0 ||
      static_cast<Eigen::Index>(batch.ids.size()) != batch.rows * width) {
    throw ad::ShapeError("encode_values: malformed triplet batch");
  }
  Mat<T> h(batch.rows, width * dim);
  for (Eigen::Index r = 0; r < batch.rows; ++r) {
    for (Eigen::Index j = 0; j < width; ++j) {
      h.block(r, j * dim, 1, dim) = table.row(batch.ids[static_cast<std::size_t>(r * width + j)]);
    }
  }
  for (int l = 0; l < kEncoderLayers; ++l) {
    const Mat<T>& w = value_of(params, param_names::encoder_weight(l));
    const Mat<T>& b = value_of(params, param_names::encoder_bias(l));
    Mat<T> next(h.rows(), w.cols());
    next.noalias() = h * w;
    next.rowwise() += b.row(0);
    if (l + 1 < kEncoderLayers) next = next.cwiseMax(T(0));
    h = std::move(next);
  }
  const Eigen::Index sets = h.rows() / config.num_examples;
  Mat<T> z(sets, h.cols());
  for (Eigen::Index s = 0; s < sets; ++s) {
    z.row(s) = h.middleRows(s * config.num_examples, config.num_examples).colwise().maxCoeff();
  }
  return z;
}

template <class T>
void decoder_step(const ad::ParamStore<T>& params, const Mat<T>& state, std::span<const int> tokens,
                  Mat<T>& next_state, Mat<T>& log_probs) {
  const Mat<T>& emb = value_of(params, param_names::kTokenEmbedding);
  Mat<T> x(state.rows(), emb.cols());
  for (Eigen::Index r = 0; r < state.rows(); ++r) x.row(r) = emb.row(tokens[static_cast<std::size_t>(r)]);
  next_state = ad::lstm_forward(x, state, value_of(params, param_names::kLstmWeight),
                                value_of(params, param_names::kLstmBias));
  const Eigen::Index hidden = state.cols() / 2;
  Mat<T> logits(state.rows(), value_of(params, param_names::kOutWeight).cols());
  logits.noalias() = next_state.leftCols(hidden) * value_of(params, param_names::kOutWeight);
  logits.rowwise() += value_of(params, param_names::kOutBias).row(0);
  log_probs = ad::log_softmax_rows(logits);
  mask_unemittable(log_probs);
}

template <class T>
std::vector<Decoded> decode_greedy(const ad::ParamStore<T>& params, const ModelConfig& config, const Mat<T>& latent,
                                   int max_tokens) {
  const Eigen::Index rows = latent.rows();
  std::vector<Decoded> out(static_cast<std::size_t>(rows));
  std::vector<int> active(static_cast<std::size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r) active[static_cast<std::size_t>(r)] = static_cast<int>(r);
  Mat<T> state(rows, 2 * config.hidden);
  state.leftCols(config.hidden) = latent;
  state.rightCols(config.hidden).setZero();
  std::vector<int> inputs(static_cast<std::size_t>(rows), tok::kBos);
  Mat<T> next, logp;
  for (int t = 0; t < max_tokens && !active.empty(); ++t) {
    decoder_step(params, state, inputs, next, logp);
    std::vector<int> still;
    std::vector<Eigen::Index> keep;
    for (std::size_t a = 0; a < active.size(); ++a) {
      Eigen::Index best = 0;
      const auto row = logp.row(static_cast<Eigen::Index>(a));
      for (Eigen::Index v = 1; v < row.size(); ++v) {
        if (row(v) > row(best)) best = v;
      }
      Decoded& d = out[static_cast<std::size_t>(active[a])];
      d.tokens.push_back(static_cast<int>(best));
      d.log_prob += static_cast<double>(row(best));
      if (best == tok::kEos) {
        d.finished = true;
      } else {
        still.push_back(active[a]);
        keep.push_back(static_cast<Eigen::Index>(a));
      }
    }
    if (keep.size() != active.size()) {
      Mat<T> compact(static_cast<Eigen::Index>(keep.size()), next.cols());
      for (std::size_t k = 0; k < keep.size(); ++k) compact.row(static_cast<Eigen::Index>(k)) = next.row(keep[k]);
      next = std::move(compact);
    }
    inputs.clear();
    for (int r : still) inputs.push_back(out[static_cast<std::size_t>(r)].tokens.back());
    active = std::move(still);
    state = std::move(next);
  }
  return out;
}

template <class T>
std::vector<double> sequence_log_prob(const ad::ParamStore<T>& params, const ModelConfig& config,
                                      const Mat<T>& latent, std::span<const TokenSeq> targets) {
  const Eigen::Index rows = latent.rows();
  if (static_cast<Eigen::Index>(targets.size()) != rows) throw ad::ShapeError("sequence_log_prob: row mismatch");
  std::size_t steps = 0;
  for (const auto& t : targets) steps = std::max(steps, t.size());
  std::vector<double> out(targets.size(), 0.0);
  Mat<T> state(rows, 2 * config.hidden);
  state.leftCols(config.hidden) = latent;
  state.rightCols(config.hidden).setZero();
  std::vector<int> inputs(targets.size(), tok::kBos);
  Mat<T> next, logp;
  for (std::size_t t = 0; t < steps; ++t) {
    decoder_step(params, state, inputs, next, logp);
    for (std::size_t r = 0; r < targets.size(); ++r) {
      if (t < targets[r].size()) {
        out[r] += static_cast<double>(logp(static_cast<Eigen::Index>(r), targets[r][t]));
        inputs[r] = targets[r][t];
      } else {
        inputs[r] = tok::kPad;
      }
    }
    state = std::move(next);
  }
  return out;
}

#define PBE_INSTANTIATE(T)                                                                                      \
  template ad::ParamStore<T> init_params<T>(const ModelConfig&);                                                \
  template void validate_params<T>(const ad::ParamStore<T>&, const ModelConfig&);                               \
  template BoundParams bind_params<T>(ad::Graph<T>&, ad::ParamStore<T>&);                                       \
  template Var encode<T>(ad::Graph<T>&, const BoundParams&, const ModelConfig&, const TripletBatch&);           \
  template Var decode_nll<T>(ad::Graph<T>&, const BoundParams&, const ModelConfig&, Var,                        \
                             std::span<const TokenSeq>);                                                        \
  template LossTerms task_loss<T>(ad::Graph<T>&, const BoundParams&, const ad::ParamStore<T>&,                  \
                                  const ModelConfig&, std::span<const Task>, const std::vector<Intermediate>*,  \
                                  std::vector<Intermediate>*);                                                  \
  template Mat<T> encode_values<T>(const ad::ParamStore<T>&, const ModelConfig&, const TripletBatch&);          \
  template std::vector<Decoded> decode_greedy<T>(const ad::ParamStore<T>&, const ModelConfig&, const Mat<T>&,   \
                                                 int);                                                          \
  template std::vector<double> sequence_log_prob<T>(const ad::ParamStore<T>&, const ModelConfig&,               \
                                                    const Mat<T>&, std::span<const TokenSeq>);                  \
  template void decoder_step<T>(const ad::ParamStore<T>&, const Mat<T>&, std::span<const int>, Mat<T>&, Mat<T>&);

PBE_INSTANTIATE(float)
PBE_INSTANTIATE(double)

#undef PBE_INSTANTIATE

}  // namespace pbe
