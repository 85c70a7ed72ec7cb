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

// The synthesis network.
//
// One example encoder serves both roles: with the third triplet slot filled
// by DUMMY it produces z_E from the IO examples, and with the executed
// outputs of a candidate it produces z_fix. The encoder is a character
// embedding, concatenated over the 3 * io_width positions, followed by five
// dense layers (relu on the first four) and an elementwise max over the N
// examples. One LSTM decoder (h0 = z, c0 = 0) decodes from either latent.

#ifndef PBE_MODEL_HPP
#define PBE_MODEL_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pbe/autodiff.hpp"
#include "pbe/taskgen.hpp"
#include "pbe/vocab.hpp"

namespace pbe {

inline constexpr int kEncoderLayers = 5;

struct ModelConfig {
  int hidden = 64;
  int char_embed = 16;
  int token_embed = 32;
  int io_width = kMaxStringLength;
  int num_examples = kNumExamples;
  int encoder_layers = kEncoderLayers;
  int max_tokens = kMaxTokens;
  int char_vocab = chr::kVocabSize;
  int token_vocab = tok::kVocabSize;
  std::uint64_t init_seed = 0;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

namespace param_names {
inline constexpr const char* kCharEmbedding = "enc.char_embedding";
inline constexpr const char* kTokenEmbedding = "dec.token_embedding";
inline constexpr const char* kLstmWeight = "dec.lstm.weight";
inline constexpr const char* kLstmBias = "dec.lstm.bias";
inline constexpr const char* kOutWeight = "dec.out.weight";
inline constexpr const char* kOutBias = "dec.out.bias";
std::string encoder_weight(int layer);
std::string encoder_bias(int layer);
}  // namespace param_names

template <class T>
ad::ParamStore<T> init_params(const ModelConfig& config);

// Checks that `params` has exactly the tensors `config` implies.
template <class T>
void validate_params(const ad::ParamStore<T>& params, const ModelConfig& config);

// Parameters bound once into a graph.
struct BoundParams {
  ad::Var char_embedding;
  std::array<ad::Var, kEncoderLayers> enc_weight;
  std::array<ad::Var, kEncoderLayers> enc_bias;
  ad::Var token_embedding;
  ad::Var lstm_weight;
  ad::Var lstm_bias;
  ad::Var out_weight;
  ad::Var out_bias;
};

template <class T>
BoundParams bind_params(ad::Graph<T>& g, ad::ParamStore<T>& params);

// Encoded triplets for a batch: rows of 3 * io_width char ids, grouped into
// consecutive sets of num_examples.
struct TripletBatch {
  std::vector<int> ids;
  int rows = 0;
};

TripletBatch encode_examples(std::span<const Example> examples, std::span<const ExecutedSlot> executed,
                             int io_width);

// ---------------------------------------------------------------------------
// Graph construction.

// [rows / num_examples x H]
template <class T>
ad::Var encode(ad::Graph<T>& g, const BoundParams& p, const ModelConfig& config, const TripletBatch& batch);

// Teacher-forced sum over rows of the target negative log-likelihood,
// EOS included. targets[r] must be non-empty.
template <class T>
ad::Var decode_nll(ad::Graph<T>& g, const BoundParams& p, const ModelConfig& config, ad::Var latent,
                   std::span<const TokenSeq> targets);

struct LossTerms {
  ad::Var total;     // examples + fix
  ad::Var examples;  // batch mean NLL of P* decoded from z_E
  ad::Var fix;       // batch mean NLL of P* decoded from z_fix
};

// Intermediate program of one task and its executed outputs.
struct Intermediate {
  TokenSeq tokens;
  std::vector<ExecutedSlot> executed;
};

// Executes a candidate on the example inputs; decode errors and execution
// errors both become FAIL.
std::vector<ExecutedSlot> execute_candidate(std::span<const int> tokens, std::span<const Example> examples);

// Mean over tasks of the two-term loss. The intermediate program is decoded
// greedily from z_E outside the graph and executed; nothing upstream of the
// executed outputs receives gradient from the fix term through that path.
// When `frozen` is given its entries replace the greedy decode.
template <class T>
LossTerms task_loss(ad::Graph<T>& g, const BoundParams& p, const ad::ParamStore<T>& params,
                    const ModelConfig& config, std::span<const Task> tasks,
                    const std::vector<Intermediate>* frozen = nullptr,
                    std::vector<Intermediate>* intermediates_out = nullptr);

// ---------------------------------------------------------------------------
// Graph-free inference.

// [rows / num_examples x H]
template <class T>
ad::Mat<T> encode_values(const ad::ParamStore<T>& params, const ModelConfig& config, const TripletBatch& batch);

struct Decoded {
  TokenSeq tokens;  // ends with EOS unless max_tokens was reached
  double log_prob = 0;
  bool finished = false;
};

// Greedy decoding of every latent row; ties go to the lowest token id.
template <class T>
std::vector<Decoded> decode_greedy(const ad::ParamStore<T>& params, const ModelConfig& config,
                                   const ad::Mat<T>& latent, int max_tokens);

// Per-row teacher-forced log-likelihood (inference path).
template <class T>
std::vector<double> sequence_log_prob(const ad::ParamStore<T>& params, const ModelConfig& config,
                                      const ad::Mat<T>& latent, std::span<const TokenSeq> targets);

// One decoder step for a batch of states [h | c]: feeds `tokens` and returns
// the next states and next-token log-probs. PAD and BOS get -inf.
template <class T>
void decoder_step(const ad::ParamStore<T>& params, const ad::Mat<T>& state, std::span<const int> tokens,
                  ad::Mat<T>& next_state, ad::Mat<T>& log_probs);

}  // namespace pbe

#endif  // PBE_MODEL_HPP
