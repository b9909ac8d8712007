// src/model.cpp

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

#include "hia/model.hpp"

#include <fstream>

#include "hia/error.hpp"

namespace hia {

void ModelConfig::validate() const {
  if (embed_dim < 1) fail(ErrorKind::config, "model: embed_dim must be >= 1");
  if (n_heads < 1 || embed_dim % n_heads != 0)
    fail(ErrorKind::config, "model: embed_dim " + std::to_string(embed_dim) +
                                " not divisible by n_heads " + std::to_string(n_heads));
  if (enc_layers < 1) fail(ErrorKind::config, "model: enc_layers must be >= 1");
  if (dec_layers < 1) fail(ErrorKind::config, "model: dec_layers must be >= 1");
  if (conv_kernel < 1 || conv_kernel % 2 == 0)
    fail(ErrorKind::config, "model: conv_kernel must be odd, got " + std::to_string(conv_kernel));
  if (conv_layers_per_level < 0)
    fail(ErrorKind::config, "model: conv_layers_per_level must be >= 0");
  if (!(dropout >= 0.0) || dropout >= 1.0)
    fail(ErrorKind::config, "model: dropout must be in [0, 1), got " + std::to_string(dropout));
  if (max_len < 1) fail(ErrorKind::config, "model: max_len must be >= 1");
  if (n_phones < 1) fail(ErrorKind::config, "model: n_phones must be >= 1");
  if (gop_dim < 1) fail(ErrorKind::config, "model: gop_dim must be >= 1");
  if (word_aspects != kWordAspects)
    fail(ErrorKind::config, "model: word_aspects must be " + std::to_string(kWordAspects));
  if (utt_aspects != kUttAspects)
    fail(ErrorKind::config, "model: utt_aspects must be " + std::to_string(kUttAspects));
  if (ffn_mult < 1) fail(ErrorKind::config, "model: ffn_mult must be >= 1");
}

nlohmann::ordered_json config_to_json(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["embed_dim"] = cfg.embed_dim;
  j["enc_layers"] = cfg.enc_layers;
  j["dec_layers"] = cfg.dec_layers;
  j["n_heads"] = cfg.n_heads;
  j["conv_kernel"] = cfg.conv_kernel;
  j["conv_layers_per_level"] = cfg.conv_layers_per_level;
  j["dropout"] = cfg.dropout;
  j["max_len"] = cfg.max_len;
  j["n_phones"] = cfg.n_phones;
  j["gop_dim"] = cfg.gop_dim;
  j["word_aspects"] = cfg.word_aspects;
  j["utt_aspects"] = cfg.utt_aspects;
  j["ffn_mult"] = cfg.ffn_mult;
  j["use_iam_phn"] = cfg.use_iam_phn;
  j["use_iam_word"] = cfg.use_iam_word;
  j["use_iam_utt"] = cfg.use_iam_utt;
  j["use_residual"] = cfg.use_residual;
  j["use_hierarchy"] = cfg.use_hierarchy;
  j["phn_score_proj"] = cfg.phn_score_proj;
  j["init_seed"] = cfg.init_seed;
  return j;
}

ModelConfig config_from_json(const nlohmann::ordered_json& j) {
  ModelConfig cfg;
  if (!j.is_object()) fail(ErrorKind::config, "model config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "embed_dim") cfg.embed_dim = value.get<int>();
      else if (key == "enc_layers") cfg.enc_layers = value.get<int>();
      else if (key == "dec_layers") cfg.dec_layers = value.get<int>();
      else if (key == "n_heads") cfg.n_heads = value.get<int>();
      else if (key == "conv_kernel") cfg.conv_kernel = value.get<int>();
      else if (key == "conv_layers_per_level") cfg.conv_layers_per_level = value.get<int>();
      else if (key == "dropout") cfg.dropout = value.get<double>();
      else if (key == "max_len") cfg.max_len = value.get<int>();
      else if (key == "n_phones") cfg.n_phones = value.get<int>();
      else if (key == "gop_dim") cfg.gop_dim = value.get<int>();
      else if (key == "word_aspects") cfg.word_aspects = value.get<int>();
      else if (key == "utt_aspects") cfg.utt_aspects = value.get<int>();
      else if (key == "ffn_mult") cfg.ffn_mult = value.get<int>();
      else if (key == "use_iam_phn") cfg.use_iam_phn = value.get<bool>();
      else if (key == "use_iam_word") cfg.use_iam_word = value.get<bool>();
      else if (key == "use_iam_utt") cfg.use_iam_utt = value.get<bool>();
      else if (key == "use_residual") cfg.use_residual = value.get<bool>();
      else if (key == "use_hierarchy") cfg.use_hierarchy = value.get<bool>();
      else if (key == "phn_score_proj") cfg.phn_score_proj = value.get<bool>();
      else if (key == "init_seed") cfg.init_seed = value.get<std::uint64_t>();
      else fail(ErrorKind::config, "model config: unknown key \"" + key + "\"");
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::config, "model config: bad value for \"" + key + "\": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

namespace {

ModelConfig validated(const ModelConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

HiaModel::HiaModel(const ModelConfig& cfg_in) : cfg(validated(cfg_in)), reg(cfg_in.init_seed) {
  const int d = cfg.embed_dim;
  const int hidden = cfg.ffn_mult * d;

  gop_proj = Linear(reg, "gop_proj", cfg.gop_dim, d);
  phone_emb = reg.gaussian("phone_emb", {cfg.n_phones + 1, d}, 0.02);
  pos_emb = reg.gaussian("pos_emb", {cfg.max_len, d}, 0.02);
  for (int l = 0; l < cfg.enc_layers; ++l)
    enc.emplace_back(reg, "enc." + std::to_string(l), d, cfg.n_heads, hidden);
  enc_final = Norm(reg, "enc.final", d);

  q_phn = Linear(reg, "iam.q_phn", d, d);
  q_word = Linear(reg, "iam.q_word", d, d);
  q_utt = Linear(reg, "iam.q_utt", d, d);
  iam_ln_self = Norm(reg, "iam.ln_self", d);
  iam_self = Attention(reg, "iam.self", d, cfg.n_heads);
  iam_ln_cross = Norm(reg, "iam.ln_cross", d);
  iam_cross = Attention(reg, "iam.cross", d, cfg.n_heads);
  iam_ln_ffn = Norm(reg, "iam.ln_ffn", d);
  iam_ffn = FeedForward(reg, "iam.ffn", d, hidden);
  iam_final = Norm(reg, "iam.final", d);
  out_phn = Linear(reg, "iam.out_phn", d, d);
  out_word = Linear(reg, "iam.out_word", d, d);
  out_utt = Linear(reg, "iam.out_utt", d, d);

  phn_conv = ConvStack(reg, "phn.conv", cfg.conv_layers_per_level, cfg.conv_kernel, d);
  phn_head = ScoreHead(reg, "phn.head", d, 1);

  if (cfg.phn_score_proj) word_sproj = Linear(reg, "word.sproj", 1, d);
  for (int a = 0; a < kWordAspects; ++a) {
    const std::string base = "word." + std::to_string(a);
    word_aspect[static_cast<std::size_t>(a)] = Linear(reg, base + ".aspect", d, d);
  }
  word_ln_attn = Norm(reg, "word.ln_attn", d);
  word_attn = Attention(reg, "word.attn", d, cfg.n_heads);
  for (int a = 0; a < kWordAspects; ++a) {
    const std::string base = "word." + std::to_string(a);
    word_conv[static_cast<std::size_t>(a)] =
        ConvStack(reg, base + ".conv", cfg.conv_layers_per_level, cfg.conv_kernel, d);
    word_head[static_cast<std::size_t>(a)] = ScoreHead(reg, base + ".head", d, 1);
  }

  utt_wproj = Linear(reg, "utt.wproj", kWordAspects, d);
  // Queries meet a layer norm first, so give each row a healthy variance;
  // near-zero rows sit where the normalization is most sharply curved.
  utt_queries = reg.gaussian("utt.queries", {kUttAspects, d}, 0.5);
  for (int l = 0; l < cfg.dec_layers; ++l)
    dec.emplace_back(reg, "utt.dec." + std::to_string(l), d, cfg.n_heads, hidden);
  dec_final = Norm(reg, "utt.dec.final", d);
  utt_conv = ConvStack(reg, "utt.conv", cfg.conv_layers_per_level, cfg.conv_kernel, d);
  for (int k = 0; k < kUttAspects; ++k)
    utt_head[static_cast<std::size_t>(k)] =
        ScoreHead(reg, "utt.head" + std::to_string(k), d, 1);
}

TensorPtr HiaModel::encode(const Batch& batch, Mode mode, Rng* drop_rng) const {
  if (batch.t > cfg.max_len)
    fail(ErrorKind::contract, "encode: batch length " + std::to_string(batch.t) +
                                  " exceeds max_len " + std::to_string(cfg.max_len));
  if (batch.gop->dim(2) != cfg.gop_dim)
    fail(ErrorKind::dimension, "encode: gop width " + std::to_string(batch.gop->dim(2)) +
                                   " != " + std::to_string(cfg.gop_dim));
  const DropCtx drop{cfg.dropout, mode == Mode::train, drop_rng};
  const int b = batch.b, t = batch.t;

  const auto emb = embedding(phone_emb, batch.phones, {b, t});
  const auto pos = expand_axis0(slice(pos_emb, 0, 0, t), b);
  auto x = add(add(gop_proj(batch.gop), emb), pos);
  for (const auto& layer : enc) x = layer(x, batch.phone_mask, drop);
  x = enc_final(x);
  // Zero the padded rows so downstream convolutions and residual sums see
  // exact zeros there, not leftover embeddings.
  return mask_rows(x, batch.phone_mask);
}

InteractionHeads HiaModel::interactive_attention(const TensorPtr& x, const Batch& batch,
                                                 Mode mode, Rng* drop_rng) const {
  const DropCtx drop{cfg.dropout, mode == Mode::train, drop_rng};
  const int b = batch.b, d = cfg.embed_dim;

  const auto pooled = masked_mean_pool(x, batch.phone_mask);  // [B, D]
  const auto qp = reshape(q_phn(pooled), {b, 1, d});
  const auto qw = reshape(q_word(pooled), {b, 1, d});
  const auto qu = reshape(q_utt(pooled), {b, 1, d});
  auto q = concat({qp, qw, qu}, 1);  // [B, 3, D]

  const auto n1 = iam_ln_self(q);
  q = add(q, drop(iam_self(n1, n1, nullptr)));
  q = add(q, drop(iam_cross(iam_ln_cross(q), x, batch.phone_mask)));
  q = add(q, drop(iam_ffn(iam_ln_ffn(q))));
  const auto h = iam_final(q);

  InteractionHeads heads;
  heads.phn = out_phn(reshape(slice(h, 1, 0, 1), {b, d}));
  heads.word = out_word(reshape(slice(h, 1, 1, 1), {b, d}));
  heads.utt = out_utt(reshape(slice(h, 1, 2, 1), {b, d}));
  return heads;
}

TensorPtr HiaModel::score_phoneme(const TensorPtr& x, const InteractionHeads& heads,
                                  const Batch& batch) const {
  const int b = batch.b, t = batch.t, d = cfg.embed_dim;
  auto f = x;
  if (cfg.use_iam_phn) f = add(f, expand_mid(heads.phn, t));
  f = mask_rows(f, batch.phone_mask);
  f = phn_conv(f);
  const auto s = reshape(phn_head(reshape(f, {b * t, d})), {b, t});
  return mul(s, batch.phone_mask);  // padded positions score exactly 0
}

TensorPtr HiaModel::score_word(const TensorPtr& x, const TensorPtr& s_phn,
                               const InteractionHeads& heads, const Batch& batch, Mode mode,
                               Rng* drop_rng) const {
  const DropCtx drop{cfg.dropout, mode == Mode::train, drop_rng};
  const int b = batch.b, t = batch.t, d = cfg.embed_dim;

  auto xw = cfg.use_residual ? x : zeros({b, t, d});
  if (cfg.use_hierarchy) {
    const auto sterm = cfg.phn_score_proj
                           ? reshape(word_sproj(reshape(s_phn, {b * t, 1})), {b, t, d})
                           : expand_last(s_phn, d);
    xw = add(xw, sterm);
  }
  if (cfg.use_iam_word) xw = add(xw, expand_mid(heads.word, t));
  xw = mask_rows(xw, batch.phone_mask);

  // Aspect channels: one projection per aspect, then attention across the
  // three aspect slots at every position.
  std::vector<TensorPtr> chans;
  chans.reserve(kWordAspects);
  for (int a = 0; a < kWordAspects; ++a)
    chans.push_back(reshape(word_aspect[static_cast<std::size_t>(a)](xw), {b * t, 1, d}));
  auto aspects = concat(chans, 1);  // [B*T, 3, D]
  const auto na = word_ln_attn(aspects);
  aspects = add(aspects, drop(word_attn(na, na, nullptr)));

  std::vector<TensorPtr> scores;
  scores.reserve(kWordAspects);
  for (int a = 0; a < kWordAspects; ++a) {
    auto fa = reshape(slice(aspects, 1, a, 1), {b, t, d});
    fa = mask_rows(fa, batch.phone_mask);
    fa = word_conv[static_cast<std::size_t>(a)](fa);
    auto sa = reshape(word_head[static_cast<std::size_t>(a)](reshape(fa, {b * t, d})), {b, t});
    sa = mul(sa, batch.phone_mask);
    scores.push_back(reshape(sa, {b, t, 1}));
  }
  const auto per_position = concat(scores, 2);        // [B, T, 3]
  return segment_mean(per_position, batch.spans);     // [B, W, 3]
}

TensorPtr HiaModel::score_utterance(const TensorPtr& x, const TensorPtr& s_word,
                                    const InteractionHeads& heads, const Batch& batch, Mode mode,
                                    Rng* drop_rng) const {
  const DropCtx drop{cfg.dropout, mode == Mode::train, drop_rng};
  const int b = batch.b, t = batch.t, d = cfg.embed_dim;

  auto xu = cfg.use_residual ? x : zeros({b, t, d});
  if (cfg.use_hierarchy) {
    const auto expanded = expand_segments(s_word, batch.spans, t);  // [B, T, 3]
    xu = add(xu, reshape(utt_wproj(reshape(expanded, {b * t, kWordAspects})), {b, t, d}));
  }
  if (cfg.use_iam_utt) xu = add(xu, expand_mid(heads.utt, t));
  xu = mask_rows(xu, batch.phone_mask);

  auto q = expand_axis0(utt_queries, b);  // [B, 5, D]
  for (const auto& layer : dec) q = layer(q, xu, batch.phone_mask, drop);
  q = dec_final(q);
  q = utt_conv(q);  // convolution runs over the five query slots

  std::vector<TensorPtr> outs;
  outs.reserve(kUttAspects);
  for (int k = 0; k < kUttAspects; ++k)
    outs.push_back(utt_head[static_cast<std::size_t>(k)](reshape(slice(q, 1, k, 1), {b, d})));
  return concat(outs, 1);  // [B, 5]
}

ScoreSet HiaModel::forward(const Batch& batch, Mode mode, Rng* drop_rng) const {
  const auto x = encode(batch, mode, drop_rng);
  const auto heads = interactive_attention(x, batch, mode, drop_rng);
  ScoreSet s;
  s.s_phn = score_phoneme(x, heads, batch);
  s.s_word = score_word(x, s.s_phn, heads, batch, mode, drop_rng);
  s.s_utt = score_utterance(x, s.s_word, heads, batch, mode, drop_rng);
  return s;
}

Checkpoint snapshot(const HiaModel& model, int epoch, double best_metric) {
  Checkpoint ck;
  ck.config = model.cfg;
  ck.epoch = epoch;
  ck.best_metric = best_metric;
  for (const auto& [name, t] : model.reg.params())
    ck.params.emplace_back(name, std::make_pair(t->shape, t->data));
  return ck;
}

void restore(HiaModel& model, const Checkpoint& ck) {
  if (ck.format_version != 1)
    fail(ErrorKind::validation,
         "checkpoint: unsupported format_version " + std::to_string(ck.format_version));
  for (const auto& [name, t] : model.reg.params()) {
    const std::pair<Shape, std::vector<double>>* found = nullptr;
    for (const auto& [ck_name, payload] : ck.params)
      if (ck_name == name) {
        found = &payload;
        break;
      }
    if (!found) fail(ErrorKind::validation, "checkpoint: missing parameter " + name);
    if (found->first != t->shape)
      fail(ErrorKind::dimension, "checkpoint: parameter " + name + " has shape " +
                                     shape_str(found->first) + ", model expects " +
                                     shape_str(t->shape));
    t->data = found->second;
  }
  if (ck.params.size() != model.reg.params().size())
    for (const auto& [ck_name, payload] : ck.params)
      if (!model.reg.find(ck_name))
        fail(ErrorKind::validation, "checkpoint: unknown parameter " + ck_name);
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::ordered_json j;
  j["format_version"] = ck.format_version;
  j["config"] = config_to_json(ck.config);
  j["epoch"] = ck.epoch;
  j["best_metric"] = ck.best_metric;
  nlohmann::ordered_json params;
  for (const auto& [name, payload] : ck.params) {
    nlohmann::ordered_json p;
    p["shape"] = payload.first;
    p["data"] = payload.second;
    params[name] = std::move(p);
  }
  j["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "checkpoint: cannot open " + path + " for writing");
  out << j.dump() << "\n";
  if (!out) fail(ErrorKind::io, "checkpoint: write to " + path + " failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::validation, "checkpoint: cannot open " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, "checkpoint: " + path + ": " + e.what());
  }
  Checkpoint ck;
  try {
    ck.format_version = j.at("format_version").get<int>();
    ck.config = config_from_json(j.at("config"));
    ck.epoch = j.at("epoch").get<int>();
    ck.best_metric = j.at("best_metric").get<double>();
    for (const auto& [name, p] : j.at("params").items()) {
      const Shape shape = p.at("shape").get<Shape>();
      auto data = p.at("data").get<std::vector<double>>();
      if (numel(shape) != data.size())
        fail(ErrorKind::validation, "checkpoint: parameter " + name + " has " +
                                        std::to_string(data.size()) + " values for shape " +
                                        shape_str(shape));
      ck.params.emplace_back(name, std::make_pair(shape, std::move(data)));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, "checkpoint: " + path + ": " + e.what());
  }
  return ck;
}

}  // namespace hia
