// include/hia/model.hpp

// Copyright 2026  HIA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// The scoring network.  A shared Transformer encoder turns GOP features,
// phone embeddings, and positional embeddings into acoustic embeddings X.
// An interactive attention block derives one query per granularity from
// pooled X, lets the three queries attend to each other and back into the
// sequence, and emits per-granularity context vectors.  Scores are then
// produced in turn, each level reusing the one below it:
//
//   s_phn  = head(conv(X + h_phn))                    per position
//   s_word = aspect_attn(X + s_phn + h_word)          span-averaged per word
//   s_utt  = decoder(queries, X + proj(s_word) + h_utt)
//
// The ablation flags zero these paths without changing any parameter
// shape, so checkpoints remain loadable across flag settings.

#ifndef HIA_MODEL_HPP_
#define HIA_MODEL_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hia/data.hpp"
#include "hia/nn.hpp"
#include "hia/tensor.hpp"
#include "json.hpp"

namespace hia {

struct ModelConfig {
  int embed_dim = 48;
  int enc_layers = 3;
  int dec_layers = 3;
  int n_heads = 1;
  int conv_kernel = 5;
  int conv_layers_per_level = 1;
  double dropout = 0.1;
  int max_len = kMaxLenDefault;
  int n_phones = kNumPhones;  // pad id n_phones is appended to the embedding table
  int gop_dim = kGopDim;
  int word_aspects = kWordAspects;
  int utt_aspects = kUttAspects;
  int ffn_mult = 4;  // feed-forward hidden width = ffn_mult * embed_dim
  bool use_iam_phn = true;
  bool use_iam_word = true;
  bool use_iam_utt = true;
  bool use_residual = true;   // keep the "+ X" term at word and utterance level
  bool use_hierarchy = true;  // pass scores upward between levels
  bool phn_score_proj = false;  // learned 1->D map for s_phn instead of broadcast
  std::uint64_t init_seed = 0;

  void validate() const;
};

nlohmann::ordered_json config_to_json(const ModelConfig& cfg);
// Starts from defaults; unknown keys are a config error.
ModelConfig config_from_json(const nlohmann::ordered_json& j);

enum class Mode { train, eval };

struct InteractionHeads {
  TensorPtr phn;   // [B, D]
  TensorPtr word;  // [B, D]
  TensorPtr utt;   // [B, D]
};

struct ScoreSet {
  TensorPtr s_phn;   // [B, T], zeroed at padded positions
  TensorPtr s_word;  // [B, W, 3]
  TensorPtr s_utt;   // [B, 5]
};

struct HiaModel {
  explicit HiaModel(const ModelConfig& cfg);

  ModelConfig cfg;
  ParamRegistry reg;

  Linear gop_proj;
  TensorPtr phone_emb;  // [n_phones + 1, D]
  TensorPtr pos_emb;    // [max_len, D]
  std::vector<EncoderLayer> enc;
  Norm enc_final;

  // Interactive attention block.
  Linear q_phn, q_word, q_utt;
  Norm iam_ln_self, iam_ln_cross, iam_ln_ffn, iam_final;
  Attention iam_self, iam_cross;
  FeedForward iam_ffn;
  Linear out_phn, out_word, out_utt;

  // Phoneme branch.
  ConvStack phn_conv;
  ScoreHead phn_head;

  // Word branch.
  Linear word_sproj;  // only when cfg.phn_score_proj
  std::array<Linear, kWordAspects> word_aspect;
  Norm word_ln_attn;
  Attention word_attn;
  std::array<ConvStack, kWordAspects> word_conv;
  std::array<ScoreHead, kWordAspects> word_head;

  // Utterance branch.
  Linear utt_wproj;     // 3 -> D
  TensorPtr utt_queries;  // [5, D]
  std::vector<DecoderLayer> dec;
  Norm dec_final;
  ConvStack utt_conv;
  std::array<ScoreHead, kUttAspects> utt_head;

  // Pipeline stages.  `drop_rng` is consulted only in train mode with a
  // nonzero dropout rate.
  TensorPtr encode(const Batch& batch, Mode mode, Rng* drop_rng) const;
  InteractionHeads interactive_attention(const TensorPtr& x, const Batch& batch, Mode mode,
                                         Rng* drop_rng) const;
  TensorPtr score_phoneme(const TensorPtr& x, const InteractionHeads& heads,
                          const Batch& batch) const;
  TensorPtr score_word(const TensorPtr& x, const TensorPtr& s_phn, const InteractionHeads& heads,
                       const Batch& batch, Mode mode, Rng* drop_rng) const;
  TensorPtr score_utterance(const TensorPtr& x, const TensorPtr& s_word,
                            const InteractionHeads& heads, const Batch& batch, Mode mode,
                            Rng* drop_rng) const;
  ScoreSet forward(const Batch& batch, Mode mode, Rng* drop_rng = nullptr) const;

  std::size_t param_count() const { return reg.scalar_count(); }
  void zero_grad() const { reg.zero_grad(); }
};

// Versioned parameter map; loading validates every shape.
struct Checkpoint {
  int format_version = 1;
  ModelConfig config;
  int epoch = 0;
  double best_metric = 0.0;
  std::vector<std::pair<std::string, std::pair<Shape, std::vector<double>>>> params;
};

Checkpoint snapshot(const HiaModel& model, int epoch, double best_metric);
void restore(HiaModel& model, const Checkpoint& ck);
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hia

#endif  // HIA_MODEL_HPP_
