// src/data.cpp

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

#include "hia/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hia/error.hpp"
#include "hia/metrics.hpp"
#include "hia/rng.hpp"
#include "json.hpp"

namespace hia {

const std::array<const char*, kCorrFields> kCorrLabels = {
    "p_acc", "w_avg", "u_com", "u_acc", "u_flu", "u_pros", "u_tot", "w_str"};

double rescale(double raw) {
  if (!std::isfinite(raw) || raw < 0.0 || raw > 10.0)
    fail(ErrorKind::validation,
         "rescale: raw score " + std::to_string(raw) + " outside [0, 10]");
  return raw / 5.0;
}

namespace {

std::string rec(int index) { return "utterance " + std::to_string(index); }

void check_score(double v, int index, const std::string& field) {
  if (!std::isfinite(v) || v < 0.0 || v > 2.0)
    fail(ErrorKind::validation, "dataset: " + rec(index) + ": " + field + " = " +
                                    std::to_string(v) + " outside [0, 2]");
}

}  // namespace

void validate_sample(const UtteranceSample& s, int index) {
  const std::size_t t = s.phones.size();
  if (t == 0) fail(ErrorKind::validation, "dataset: " + rec(index) + ": empty phone sequence");
  if (s.word_id.size() != t || s.gop.size() != t || s.phone_scores.size() != t)
    fail(ErrorKind::validation,
         "dataset: " + rec(index) + ": phones/word_id/gop/phone_scores lengths disagree (" +
             std::to_string(t) + "/" + std::to_string(s.word_id.size()) + "/" +
             std::to_string(s.gop.size()) + "/" + std::to_string(s.phone_scores.size()) + ")");
  for (std::size_t i = 0; i < t; ++i) {
    if (s.phones[i] < 0 || s.phones[i] >= kNumPhones)
      fail(ErrorKind::validation, "dataset: " + rec(index) + ": phones[" + std::to_string(i) +
                                      "] = " + std::to_string(s.phones[i]) +
                                      " outside [0, " + std::to_string(kNumPhones) + ")");
    if (s.gop[i].size() != static_cast<std::size_t>(kGopDim))
      fail(ErrorKind::validation, "dataset: " + rec(index) + ": gop[" + std::to_string(i) +
                                      "] has " + std::to_string(s.gop[i].size()) +
                                      " values, expected " + std::to_string(kGopDim));
    for (double v : s.gop[i])
      if (!std::isfinite(v))
        fail(ErrorKind::validation,
             "dataset: " + rec(index) + ": gop[" + std::to_string(i) + "] has non-finite value");
    check_score(s.phone_scores[i], index, "phone_scores[" + std::to_string(i) + "]");
  }
  if (s.word_id[0] != 0)
    fail(ErrorKind::validation, "dataset: " + rec(index) + ": word_id must start at 0, got " +
                                    std::to_string(s.word_id[0]));
  for (std::size_t i = 1; i < t; ++i) {
    const int step = s.word_id[i] - s.word_id[i - 1];
    if (step != 0 && step != 1)
      fail(ErrorKind::validation, "dataset: " + rec(index) + ": word_id[" + std::to_string(i) +
                                      "] jumps from " + std::to_string(s.word_id[i - 1]) +
                                      " to " + std::to_string(s.word_id[i]));
  }
  const int n_words = s.word_id[t - 1] + 1;
  if (s.n_words() != n_words)
    fail(ErrorKind::validation, "dataset: " + rec(index) + ": word_id covers " +
                                    std::to_string(n_words) + " words but word_scores has " +
                                    std::to_string(s.n_words()));
  for (int w = 0; w < n_words; ++w) {
    const auto& ws = s.word_scores[static_cast<std::size_t>(w)];
    const std::string f = "word_scores[" + std::to_string(w) + "]";
    check_score(ws.accuracy, index, f + ".accuracy");
    check_score(ws.stress, index, f + ".stress");
    check_score(ws.total, index, f + ".total");
  }
  check_score(s.utt_scores.accuracy, index, "utt_scores.accuracy");
  check_score(s.utt_scores.completeness, index, "utt_scores.completeness");
  check_score(s.utt_scores.fluency, index, "utt_scores.fluency");
  check_score(s.utt_scores.prosodic, index, "utt_scores.prosodic");
  check_score(s.utt_scores.total, index, "utt_scores.total");
}

namespace {

const nlohmann::ordered_json& need(const nlohmann::ordered_json& j, const char* key, int index) {
  if (!j.contains(key))
    fail(ErrorKind::parse, "dataset: " + rec(index) + ": missing field \"" + key + "\"");
  return j.at(key);
}

double raw_field(const nlohmann::ordered_json& j, const char* key, int index,
                 const std::string& ctx) {
  if (!j.contains(key))
    fail(ErrorKind::parse, "dataset: " + rec(index) + ": " + ctx + " missing \"" + key + "\"");
  const auto& v = j.at(key);
  if (!v.is_number())
    fail(ErrorKind::parse, "dataset: " + rec(index) + ": " + ctx + "." + key + " is not a number");
  const double raw = v.get<double>();
  if (!std::isfinite(raw) || raw < 0.0 || raw > 10.0)
    fail(ErrorKind::validation, "dataset: " + rec(index) + ": " + ctx + "." + key + " = " +
                                    std::to_string(raw) + " outside [0, 10]");
  return rescale(raw);
}

}  // namespace

std::vector<UtteranceSample> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::validation, "dataset: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return {};

  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, "dataset: " + path + ": " + e.what());
  }
  if (!j.contains("utterances") || !j.at("utterances").is_array())
    fail(ErrorKind::parse, "dataset: " + path + ": missing \"utterances\" array");

  std::vector<UtteranceSample> out;
  int index = 0;
  for (const auto& ju : j.at("utterances")) {
    UtteranceSample s;
    try {
      s.phones = need(ju, "phones", index).get<std::vector<int>>();
      s.word_id = need(ju, "word_id", index).get<std::vector<int>>();
      s.gop = need(ju, "gop", index).get<std::vector<std::vector<double>>>();
      s.phone_scores = need(ju, "phone_scores", index).get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::parse, "dataset: " + rec(index) + ": " + e.what());
    }
    const auto& jw = need(ju, "word_scores", index);
    if (!jw.is_array())
      fail(ErrorKind::parse, "dataset: " + rec(index) + ": word_scores is not an array");
    int w = 0;
    for (const auto& jws : jw) {
      const std::string ctx = "word_scores[" + std::to_string(w) + "]";
      WordScores ws;
      ws.accuracy = raw_field(jws, "accuracy", index, ctx);
      ws.stress = raw_field(jws, "stress", index, ctx);
      ws.total = raw_field(jws, "total", index, ctx);
      s.word_scores.push_back(ws);
      ++w;
    }
    const auto& js = need(ju, "utt_scores", index);
    s.utt_scores.accuracy = raw_field(js, "accuracy", index, "utt_scores");
    s.utt_scores.completeness = raw_field(js, "completeness", index, "utt_scores");
    s.utt_scores.fluency = raw_field(js, "fluency", index, "utt_scores");
    s.utt_scores.prosodic = raw_field(js, "prosodic", index, "utt_scores");
    s.utt_scores.total = raw_field(js, "total", index, "utt_scores");
    validate_sample(s, index);
    out.push_back(std::move(s));
    ++index;
  }
  return out;
}

void save_dataset(const std::string& path, const std::vector<UtteranceSample>& samples) {
  nlohmann::ordered_json j;
  j["utterances"] = nlohmann::ordered_json::array();
  for (const auto& s : samples) {
    nlohmann::ordered_json ju;
    ju["phones"] = s.phones;
    ju["word_id"] = s.word_id;
    ju["gop"] = s.gop;
    ju["phone_scores"] = s.phone_scores;
    auto words = nlohmann::ordered_json::array();
    for (const auto& w : s.word_scores)
      words.push_back({{"accuracy", 5.0 * w.accuracy},
                       {"stress", 5.0 * w.stress},
                       {"total", 5.0 * w.total}});
    ju["word_scores"] = std::move(words);
    ju["utt_scores"] = {{"accuracy", 5.0 * s.utt_scores.accuracy},
                        {"completeness", 5.0 * s.utt_scores.completeness},
                        {"fluency", 5.0 * s.utt_scores.fluency},
                        {"prosodic", 5.0 * s.utt_scores.prosodic},
                        {"total", 5.0 * s.utt_scores.total}};
    j["utterances"].push_back(std::move(ju));
  }
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "dataset: cannot open " + path + " for writing");
  out << j.dump(1) << "\n";
  if (!out) fail(ErrorKind::io, "dataset: write to " + path + " failed");
}

Batch make_batch(const std::vector<UtteranceSample>& samples, const std::vector<int>& idx,
                 int max_len) {
  if (idx.empty()) fail(ErrorKind::contract, "make_batch: empty index list");
  const int b = static_cast<int>(idx.size());
  const int t = max_len;
  int w = 0;
  for (int i : idx) {
    if (i < 0 || i >= static_cast<int>(samples.size()))
      fail(ErrorKind::contract, "make_batch: index " + std::to_string(i) + " out of range");
    w = std::max(w, samples[static_cast<std::size_t>(i)].n_words());
  }

  Batch batch;
  batch.b = b;
  batch.t = t;
  batch.w = w;
  batch.phones.assign(static_cast<std::size_t>(b) * t, kPadPhoneId);
  std::vector<double> gop(static_cast<std::size_t>(b) * t * kGopDim, 0.0);
  std::vector<double> pmask(static_cast<std::size_t>(b) * t, 0.0);
  std::vector<double> wmask(static_cast<std::size_t>(b) * w, 0.0);
  std::vector<double> ptgt(static_cast<std::size_t>(b) * t, 0.0);
  std::vector<double> wtgt(static_cast<std::size_t>(b) * w * kWordAspects, 0.0);
  std::vector<double> utgt(static_cast<std::size_t>(b) * kUttAspects, 0.0);
  batch.spans.batch = b;
  batch.spans.t_max = t;
  batch.spans.w_max = w;
  batch.spans.start.assign(static_cast<std::size_t>(b) * w, 0);
  batch.spans.end.assign(static_cast<std::size_t>(b) * w, -1);  // end < start: absent

  for (int r = 0; r < b; ++r) {
    const UtteranceSample& s = samples[static_cast<std::size_t>(idx[static_cast<std::size_t>(r)])];
    const int len = s.n_phones();
    if (len > max_len)
      fail(ErrorKind::contract, "make_batch: sample " + std::to_string(idx[static_cast<std::size_t>(r)]) +
                                    " longer than max_len");
    for (int i = 0; i < len; ++i) {
      const std::size_t pos = static_cast<std::size_t>(r) * t + i;
      batch.phones[pos] = s.phones[static_cast<std::size_t>(i)];
      pmask[pos] = 1.0;
      ptgt[pos] = s.phone_scores[static_cast<std::size_t>(i)];
      std::copy(s.gop[static_cast<std::size_t>(i)].begin(), s.gop[static_cast<std::size_t>(i)].end(),
                gop.begin() + static_cast<std::ptrdiff_t>(pos) * kGopDim);
      const int wi = s.word_id[static_cast<std::size_t>(i)];
      const std::size_t slot = static_cast<std::size_t>(r) * w + wi;
      if (batch.spans.end[slot] < batch.spans.start[slot]) batch.spans.start[slot] = i;
      batch.spans.end[slot] = i;
    }
    for (int wi = 0; wi < s.n_words(); ++wi) {
      const std::size_t slot = static_cast<std::size_t>(r) * w + wi;
      wmask[slot] = 1.0;
      const auto& ws = s.word_scores[static_cast<std::size_t>(wi)];
      wtgt[slot * kWordAspects + 0] = ws.accuracy;
      wtgt[slot * kWordAspects + 1] = ws.stress;
      wtgt[slot * kWordAspects + 2] = ws.total;
    }
    const std::size_t ur = static_cast<std::size_t>(r) * kUttAspects;
    utgt[ur + 0] = s.utt_scores.accuracy;
    utgt[ur + 1] = s.utt_scores.completeness;
    utgt[ur + 2] = s.utt_scores.fluency;
    utgt[ur + 3] = s.utt_scores.prosodic;
    utgt[ur + 4] = s.utt_scores.total;
    batch.sample_index.push_back(idx[static_cast<std::size_t>(r)]);
  }

  batch.gop = tensor({b, t, kGopDim}, std::move(gop));
  batch.phone_mask = tensor({b, t}, std::move(pmask));
  batch.word_mask = tensor({b, w}, std::move(wmask));
  batch.utt_mask = full({b, kUttAspects}, 1.0);
  batch.phone_targets = tensor({b, t}, std::move(ptgt));
  batch.word_targets = tensor({b, w, kWordAspects}, std::move(wtgt));
  batch.utt_targets = tensor({b, kUttAspects}, std::move(utgt));
  return batch;
}

std::vector<Batch> make_batches(const std::vector<UtteranceSample>& samples, int batch_size,
                                int max_len, std::uint64_t seed, bool shuffle) {
  if (batch_size < 1) fail(ErrorKind::config, "make_batches: batch_size must be >= 1");
  if (max_len < 1) fail(ErrorKind::config, "make_batches: max_len must be >= 1");

  std::string too_long;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].n_phones() > max_len) {
      if (!too_long.empty()) too_long += ", ";
      too_long += std::to_string(i) + " (" + std::to_string(samples[i].n_phones()) + " phones)";
    }
  }
  if (!too_long.empty())
    fail(ErrorKind::validation,
         "make_batches: samples exceed max_len " + std::to_string(max_len) + ": " + too_long);

  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    Rng rng(seed);
    rng.shuffle(order);
  }

  std::vector<Batch> out;
  for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(static_cast<std::size_t>(batch_size), order.size() - at);
    std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(at),
                         order.begin() + static_cast<std::ptrdiff_t>(at + n));
    out.push_back(make_batch(samples, idx, max_len));
  }
  return out;
}

SynthCoupling SynthCoupling::identity() {
  SynthCoupling c;
  c.word_acc_gain = 1.0;
  c.stress_acc = 1.0;
  c.stress_utt = 0.0;
  c.stress_word = 0.0;
  c.stress_interaction = 0.0;
  c.stress_bias = 0.0;
  c.utt_acc_gain = 1.0;
  c.utt_acc_bias = 0.0;
  c.utt_flu_gain = 1.0;
  c.utt_flu_bias = 0.0;
  c.utt_pros_gain = 1.0;
  c.utt_pros_bias = 0.0;
  c.utt_tot_gain = 1.0;
  c.utt_tot_bias = 0.0;
  return c;
}

void validate(const SynthConfig& cfg) {
  if (cfg.n_utterances < 0) fail(ErrorKind::config, "synth: n_utterances must be >= 0");
  if (cfg.max_words < 1) fail(ErrorKind::config, "synth: max_words must be >= 1");
  if (cfg.min_phones_per_word < 1 || cfg.max_phones_per_word < cfg.min_phones_per_word)
    fail(ErrorKind::config, "synth: phones_per_word range [" +
                                std::to_string(cfg.min_phones_per_word) + ", " +
                                std::to_string(cfg.max_phones_per_word) + "] invalid");
  for (double n : {cfg.noise_gop, cfg.noise_phone, cfg.noise_word, cfg.noise_utt})
    if (!(n >= 0.0)) fail(ErrorKind::config, "synth: noise_std must be >= 0");
  if (cfg.completeness_skew < 0.0 || cfg.completeness_skew > 1.0)
    fail(ErrorKind::config, "synth: completeness_skew must be in [0, 1]");
}

namespace {

double clip02(double x) { return std::min(2.0, std::max(0.0, x)); }

// Fixed phone tables shared by every dataset: a per-phone feature offset, a
// per-phone direction that encodes the realized phone score, and a scalar
// phone identity in (0, 1) whose per-word mean acts as the word context
// factor.  Salted with a constant so the tables never depend on cfg.seed.
struct PhoneTables {
  std::array<std::array<double, kGopDim>, kNumPhones> base;
  std::array<std::array<double, kGopDim>, kNumPhones> dir;
  std::array<double, kNumPhones> ident;
};

const PhoneTables& phone_tables() {
  static const PhoneTables tables = [] {
    PhoneTables t;
    constexpr std::uint64_t kSalt = 0xA5F0C3D1E2B49786ULL;
    for (int p = 0; p < kNumPhones; ++p) {
      Rng rb(Rng::derive(kSalt, "gop_base", static_cast<std::uint64_t>(p)));
      Rng rd(Rng::derive(kSalt, "gop_dir", static_cast<std::uint64_t>(p)));
      for (int d = 0; d < kGopDim; ++d) {
        t.base[static_cast<std::size_t>(p)][static_cast<std::size_t>(d)] = rb.normal();
        t.dir[static_cast<std::size_t>(p)][static_cast<std::size_t>(d)] = rd.normal(0.0, 0.6);
      }
      Rng ri(Rng::derive(kSalt, "ident", static_cast<std::uint64_t>(p)));
      t.ident[static_cast<std::size_t>(p)] = ri.uniform();
    }
    return t;
  }();
  return tables;
}

}  // namespace

std::vector<UtteranceSample> synth_generate(const SynthConfig& cfg) {
  validate(cfg);
  const PhoneTables& tab = phone_tables();
  const SynthCoupling& c = cfg.coupling;

  std::vector<UtteranceSample> out;
  out.reserve(static_cast<std::size_t>(cfg.n_utterances));
  for (int i = 0; i < cfg.n_utterances; ++i) {
    Rng rng(Rng::derive(cfg.seed, "utt", static_cast<std::uint64_t>(i)));
    UtteranceSample s;

    // Latent proficiency u of the speaker for this utterance.
    const double u = rng.uniform();
    const int n_words = rng.randint(1, cfg.max_words);
    std::vector<int> word_len(static_cast<std::size_t>(n_words));
    for (int w = 0; w < n_words; ++w) {
      const int len = rng.randint(cfg.min_phones_per_word, cfg.max_phones_per_word);
      word_len[static_cast<std::size_t>(w)] = len;
      for (int l = 0; l < len; ++l) {
        s.phones.push_back(rng.randint(0, kNumPhones - 1));
        s.word_id.push_back(w);
      }
    }
    const int t_len = s.n_phones();

    // phone score = clip(2u + noise): proficiency sets the level.
    for (int t = 0; t < t_len; ++t)
      s.phone_scores.push_back(clip02(2.0 * u + cfg.noise_phone * rng.normal()));

    // Word scores.  Stress mixes the utterance factor (2u - 1) with the
    // word identity factor (2v - 1) and their product, so it depends on
    // both the utterance context and the word itself.
    double m_acc = 0.0, m_str = 0.0, m_tot = 0.0;
    int pos = 0;
    for (int w = 0; w < n_words; ++w) {
      const int len = word_len[static_cast<std::size_t>(w)];
      double mean = 0.0, v = 0.0;
      for (int l = 0; l < len; ++l) {
        mean += s.phone_scores[static_cast<std::size_t>(pos + l)];
        v += tab.ident[static_cast<std::size_t>(s.phones[static_cast<std::size_t>(pos + l)])];
      }
      mean /= len;
      v /= len;
      pos += len;

      WordScores ws;
      ws.accuracy = clip02(c.word_acc_gain * mean + cfg.noise_word * rng.normal());
      const double cu = 2.0 * u - 1.0, cv = 2.0 * v - 1.0;
      ws.stress = clip02(c.stress_acc * ws.accuracy + c.stress_utt * cu + c.stress_word * cv +
                         c.stress_interaction * cu * cv + c.stress_bias +
                         cfg.noise_word * rng.normal());
      ws.total = clip02((ws.accuracy + ws.stress) / 2.0 + cfg.noise_word * rng.normal());
      s.word_scores.push_back(ws);
      m_acc += ws.accuracy;
      m_str += ws.stress;
      m_tot += ws.total;
    }
    m_acc /= n_words;
    m_str /= n_words;
    m_tot /= n_words;

    s.utt_scores.accuracy = clip02(c.utt_acc_gain * m_acc + c.utt_acc_bias +
                                   cfg.noise_utt * rng.normal());
    s.utt_scores.fluency = clip02(c.utt_flu_gain * m_tot + c.utt_flu_bias +
                                  cfg.noise_utt * rng.normal());
    s.utt_scores.prosodic = clip02(c.utt_pros_gain * (0.5 * m_str + 0.5 * m_acc) +
                                   c.utt_pros_bias + cfg.noise_utt * rng.normal());
    s.utt_scores.total = clip02(c.utt_tot_gain * ((m_acc + m_str + m_tot) / 3.0) +
                                c.utt_tot_bias + cfg.noise_utt * rng.normal());
    // Nearly every utterance is read to the end, so completeness sits at
    // the ceiling with a thin tail below it.
    s.utt_scores.completeness =
        (rng.uniform() < cfg.completeness_skew) ? 2.0 : rng.uniform(0.8, 1.8);

    // GOP features: per-phone offset plus score-aligned direction plus noise,
    // so the features carry (phone id, phone score).
    s.gop.resize(static_cast<std::size_t>(t_len));
    for (int t = 0; t < t_len; ++t) {
      const int p = s.phones[static_cast<std::size_t>(t)];
      auto& row = s.gop[static_cast<std::size_t>(t)];
      row.resize(kGopDim);
      const double level = s.phone_scores[static_cast<std::size_t>(t)] - 1.0;
      for (int d = 0; d < kGopDim; ++d)
        row[static_cast<std::size_t>(d)] =
            tab.base[static_cast<std::size_t>(p)][static_cast<std::size_t>(d)] +
            level * tab.dir[static_cast<std::size_t>(p)][static_cast<std::size_t>(d)] +
            cfg.noise_gop * rng.normal();
    }

    validate_sample(s, i);
    out.push_back(std::move(s));
  }
  return out;
}

CorrelationMatrix correlation_matrix(const std::vector<UtteranceSample>& samples) {
  if (samples.size() < 2)
    fail(ErrorKind::validation, "correlation_matrix: need at least 2 samples, got " +
                                    std::to_string(samples.size()));
  const std::size_t n = samples.size();
  std::array<std::vector<double>, kCorrFields> f;
  for (auto& v : f) v.reserve(n);
  for (const auto& s : samples) {
    double p_acc = 0.0;
    for (double v : s.phone_scores) p_acc += v;
    p_acc /= s.n_phones();
    double w_avg = 0.0, w_str = 0.0;
    for (const auto& w : s.word_scores) {
      w_avg += (w.accuracy + w.stress + w.total) / 3.0;
      w_str += w.stress;
    }
    w_avg /= s.n_words();
    w_str /= s.n_words();
    f[0].push_back(p_acc);
    f[1].push_back(w_avg);
    f[2].push_back(s.utt_scores.completeness);
    f[3].push_back(s.utt_scores.accuracy);
    f[4].push_back(s.utt_scores.fluency);
    f[5].push_back(s.utt_scores.prosodic);
    f[6].push_back(s.utt_scores.total);
    f[7].push_back(w_str);
  }

  CorrelationMatrix cm;
  for (int i = 0; i < kCorrFields; ++i)
    for (int j = i; j < kCorrFields; ++j) {
      const auto r = pcc(f[static_cast<std::size_t>(i)], f[static_cast<std::size_t>(j)]);
      cm.m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = r;
      cm.m[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = r;
    }
  return cm;
}

void save_correlation(const std::string& path, const CorrelationMatrix& cm) {
  nlohmann::ordered_json j;
  j["labels"] = kCorrLabels;
  auto rows = nlohmann::ordered_json::array();
  for (int i = 0; i < kCorrFields; ++i) {
    auto row = nlohmann::ordered_json::array();
    for (int k = 0; k < kCorrFields; ++k) {
      const auto& cell = cm.m[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      if (cell)
        row.push_back(*cell);
      else
        row.push_back(nullptr);
    }
    rows.push_back(std::move(row));
  }
  j["matrix"] = std::move(rows);
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "correlation: cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
  if (!out) fail(ErrorKind::io, "correlation: write to " + path + " failed");
}

}  // namespace hia
