// tests/test_data.cpp

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "hia/data.hpp"
#include "hia/error.hpp"
#include "hia/metrics.hpp"

using namespace hia;

namespace {

SynthConfig small_cfg(std::uint64_t seed, int n) {
  SynthConfig cfg;
  cfg.n_utterances = n;
  cfg.seed = seed;
  return cfg;
}

bool same_scores(const UtteranceSample& a, const UtteranceSample& b, double tol) {
  auto near = [tol](double x, double y) { return std::abs(x - y) <= tol; };
  if (a.phone_scores != b.phone_scores) return false;  // stored without rescale
  if (a.n_words() != b.n_words()) return false;
  for (int w = 0; w < a.n_words(); ++w) {
    const auto& wa = a.word_scores[static_cast<std::size_t>(w)];
    const auto& wb = b.word_scores[static_cast<std::size_t>(w)];
    if (!near(wa.accuracy, wb.accuracy) || !near(wa.stress, wb.stress) ||
        !near(wa.total, wb.total))
      return false;
  }
  return near(a.utt_scores.accuracy, b.utt_scores.accuracy) &&
         near(a.utt_scores.completeness, b.utt_scores.completeness) &&
         near(a.utt_scores.fluency, b.utt_scores.fluency) &&
         near(a.utt_scores.prosodic, b.utt_scores.prosodic) &&
         near(a.utt_scores.total, b.utt_scores.total);
}

bool identical(const UtteranceSample& a, const UtteranceSample& b) {
  return a.phones == b.phones && a.word_id == b.word_id && a.gop == b.gop &&
         same_scores(a, b, 0.0);
}

}  // namespace

TEST_CASE("rescale maps the 0-10 scale onto 0-2") {
  CHECK(rescale(0.0) == 0.0);
  CHECK(rescale(10.0) == 2.0);
  CHECK(rescale(5.0) == 1.0);
  CHECK(rescale(7.0) == doctest::Approx(1.4).epsilon(1e-12));
  double prev = -1.0;
  for (int i = 0; i <= 100; ++i) {
    const double v = rescale(i * 0.1);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK_THROWS_AS(rescale(-0.001), Error);
  CHECK_THROWS_AS(rescale(10.001), Error);
}

TEST_CASE("sample validation names the record and field") {
  auto data = synth_generate(small_cfg(5, 1));
  UtteranceSample good = data[0];
  CHECK_NOTHROW(validate_sample(good, 0));

  SUBCASE("word id gap") {
    UtteranceSample s = good;
    for (auto& w : s.word_id)
      if (w >= 1) w += 1;  // 0,0,2,... gap
    if (s.n_words() >= 2) {
      s.word_scores.push_back(s.word_scores.back());
      try {
        validate_sample(s, 3);
        CHECK(s.word_id.back() == 0);  // only reachable for 1-word samples
      } catch (const Error& e) {
        CHECK(std::string(e.what()).find("utterance 3") != std::string::npos);
        CHECK(std::string(e.what()).find("word_id") != std::string::npos);
      }
    }
  }
  SUBCASE("score out of range") {
    UtteranceSample s = good;
    s.word_scores[0].stress = 2.5;
    try {
      validate_sample(s, 7);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("utterance 7") != std::string::npos);
      CHECK(std::string(e.what()).find("stress") != std::string::npos);
    }
  }
  SUBCASE("length mismatch") {
    UtteranceSample s = good;
    s.phone_scores.pop_back();
    CHECK_THROWS_AS(validate_sample(s, 0), Error);
  }
  SUBCASE("bad gop width") {
    UtteranceSample s = good;
    s.gop[0].pop_back();
    CHECK_THROWS_AS(validate_sample(s, 0), Error);
  }
  SUBCASE("bad phone id") {
    UtteranceSample s = good;
    s.phones[0] = kNumPhones;
    CHECK_THROWS_AS(validate_sample(s, 0), Error);
  }
}

TEST_CASE("datasets survive a save/load round trip") {
  auto data = synth_generate(small_cfg(42, 12));
  const std::string p1 = "test_data_rt1.json", p2 = "test_data_rt2.json";
  save_dataset(p1, data);
  auto back = load_dataset(p1);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].phones == data[i].phones);
    CHECK(back[i].word_id == data[i].word_id);
    CHECK(back[i].gop == data[i].gop);             // serialized at full precision
    CHECK(back[i].phone_scores == data[i].phone_scores);
    // Word and utterance scores pass through the 0-10 disk scale; one
    // multiply-divide pair costs at most an ulp.
    CHECK(same_scores(back[i], data[i], 1e-15));
  }
  // A reloaded dataset is a fixed point: saving it again changes nothing.
  save_dataset(p2, back);
  auto again = load_dataset(p2);
  REQUIRE(again.size() == back.size());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(identical(again[i], back[i]));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("empty and malformed dataset files") {
  const std::string path = "test_data_file.json";
  {
    std::ofstream out(path);
    out << "   \n";
  }
  CHECK(load_dataset(path).empty());
  {
    std::ofstream out(path);
    out << R"({"utterances": []})";
  }
  CHECK(load_dataset(path).empty());
  {
    std::ofstream out(path);
    out << R"({"utterances": [{"phones": [1, 2]}]})";
  }
  try {
    load_dataset(path);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("utterance 0") != std::string::npos);
  }
  {
    // word_id gap 0,0,2 inside an otherwise complete record.
    std::ofstream out(path);
    out << R"({"utterances": [{
      "phones": [1, 2, 3], "word_id": [0, 0, 2],
      "gop": [)";
    for (int t = 0; t < 3; ++t) {
      out << "[";
      for (int d = 0; d < kGopDim; ++d) out << (d ? "," : "") << "0.0";
      out << "]" << (t < 2 ? "," : "");
    }
    out << R"(],
      "phone_scores": [1.0, 1.0, 1.0],
      "word_scores": [{"accuracy": 5, "stress": 5, "total": 5},
                      {"accuracy": 5, "stress": 5, "total": 5},
                      {"accuracy": 5, "stress": 5, "total": 5}],
      "utt_scores": {"accuracy": 5, "completeness": 10, "fluency": 5,
                     "prosodic": 5, "total": 5}}]})";
  }
  try {
    load_dataset(path);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("word_id") != std::string::npos);
  }
  CHECK_THROWS_AS(load_dataset("test_data_no_such_file.json"), Error);
  std::remove(path.c_str());
}

TEST_CASE("batches pad to max_len with masked zero rows") {
  auto data = synth_generate(small_cfg(7, 9));
  const int max_len = kMaxLenDefault;
  auto batches = make_batches(data, 4, max_len, 99);
  REQUIRE(batches.size() == 3);  // 4 + 4 + 1
  CHECK(batches.back().b == 1);

  int seen = 0;
  for (const auto& batch : batches) {
    CHECK(batch.t == max_len);
    for (int r = 0; r < batch.b; ++r) {
      const auto& s = data[static_cast<std::size_t>(batch.sample_index[static_cast<std::size_t>(r)])];
      const int len = s.n_phones();
      double mask_sum = 0.0;
      for (int t = 0; t < batch.t; ++t)
        mask_sum += batch.phone_mask->data[static_cast<std::size_t>(r) * batch.t + t];
      CHECK(mask_sum == static_cast<double>(len));
      for (int t = len; t < batch.t; ++t) {
        const std::size_t pos = static_cast<std::size_t>(r) * batch.t + t;
        CHECK(batch.phones[pos] == kPadPhoneId);
        for (int d = 0; d < kGopDim; ++d)
          CHECK(batch.gop->data[pos * kGopDim + d] == 0.0);
      }
      // Real positions carry the sample's own GOP row and target.
      for (int t = 0; t < len; ++t) {
        const std::size_t pos = static_cast<std::size_t>(r) * batch.t + t;
        CHECK(batch.phones[pos] == s.phones[static_cast<std::size_t>(t)]);
        CHECK(batch.phone_targets->data[pos] == s.phone_scores[static_cast<std::size_t>(t)]);
      }
      // Word spans tile the sequence in order.
      double wsum = 0.0;
      for (int w = 0; w < batch.w; ++w)
        wsum += batch.word_mask->data[static_cast<std::size_t>(r) * batch.w + w];
      CHECK(wsum == static_cast<double>(s.n_words()));
      int cursor = 0;
      for (int w = 0; w < s.n_words(); ++w) {
        CHECK(batch.spans.span_start(r, w) == cursor);
        cursor = batch.spans.span_end(r, w) + 1;
      }
      CHECK(cursor == len);
      for (int w = s.n_words(); w < batch.w; ++w)
        CHECK(batch.spans.span_end(r, w) < batch.spans.span_start(r, w));
      ++seen;
    }
  }
  CHECK(seen == 9);
}

TEST_CASE("batch shuffling is deterministic under the seed") {
  auto data = synth_generate(small_cfg(11, 20));
  auto a = make_batches(data, 6, kMaxLenDefault, 123);
  auto b = make_batches(data, 6, kMaxLenDefault, 123);
  auto c = make_batches(data, 6, kMaxLenDefault, 124);
  REQUIRE(a.size() == b.size());
  bool all_same = true, any_diff_c = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    all_same = all_same && a[i].sample_index == b[i].sample_index;
    any_diff_c = any_diff_c || a[i].sample_index != c[i].sample_index;
  }
  CHECK(all_same);
  CHECK(any_diff_c);

  // Unshuffled batches keep dataset order.
  auto plain = make_batches(data, 7, kMaxLenDefault, 0, false);
  CHECK(plain[0].sample_index == std::vector<int>{0, 1, 2, 3, 4, 5, 6});

  // batch_size >= n gives a single batch.
  CHECK(make_batches(data, 64, kMaxLenDefault, 5).size() == 1);
}

TEST_CASE("overlong samples are rejected with their indices") {
  auto data = synth_generate(small_cfg(3, 6));
  int longest = 0;
  for (const auto& s : data) longest = std::max(longest, s.n_phones());
  try {
    make_batches(data, 4, longest - 1, 1);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
    std::string msg = e.what();
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data[i].n_phones() > longest - 1)
        CHECK(msg.find(std::to_string(i) + " (") != std::string::npos);
  }
}

TEST_CASE("noiseless identity coupling collapses every level onto the phone scores") {
  SynthConfig cfg = small_cfg(77, 200);
  cfg.noise_gop = 0.0;
  cfg.noise_phone = 0.0;
  cfg.noise_word = 0.0;
  cfg.noise_utt = 0.0;
  cfg.coupling = SynthCoupling::identity();
  auto data = synth_generate(cfg);

  for (const auto& s : data) {
    int pos = 0;
    for (int w = 0; w < s.n_words(); ++w) {
      double mean = 0.0;
      int len = 0;
      while (pos + len < s.n_phones() && s.word_id[static_cast<std::size_t>(pos + len)] == w) ++len;
      for (int l = 0; l < len; ++l) mean += s.phone_scores[static_cast<std::size_t>(pos + l)];
      mean /= len;
      pos += len;
      // Word accuracy is the exact mean of its phone scores.
      CHECK(s.word_scores[static_cast<std::size_t>(w)].accuracy == mean);
      CHECK(s.word_scores[static_cast<std::size_t>(w)].stress ==
            s.word_scores[static_cast<std::size_t>(w)].accuracy);
      CHECK(s.word_scores[static_cast<std::size_t>(w)].total ==
            s.word_scores[static_cast<std::size_t>(w)].accuracy);
    }
  }

  const auto cm = correlation_matrix(data);
  // w_avg and utterance accuracy are the same quantity here.
  REQUIRE(cm.m[1][3].has_value());
  CHECK(*cm.m[1][3] > 1.0 - 1e-12);
}

TEST_CASE("generation is bit-identical under one seed and differs across seeds") {
  auto a = synth_generate(small_cfg(1234, 25));
  auto b = synth_generate(small_cfg(1234, 25));
  auto c = synth_generate(small_cfg(1235, 25));
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(identical(a[i], b[i]));
  bool any_diff = false;
  for (std::size_t i = 0; i < std::min(a.size(), c.size()); ++i)
    any_diff = any_diff || !identical(a[i], c[i]);
  CHECK(any_diff);

  // A prefix of a longer run matches a shorter run: per-utterance streams.
  auto longer = synth_generate(small_cfg(1234, 40));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(identical(a[i], longer[i]));
}

TEST_CASE("default generator plants strong cross-level correlations") {
  SynthConfig cfg = small_cfg(2024, 500);
  cfg.noise_gop = 0.1;
  cfg.noise_phone = 0.1;
  cfg.noise_word = 0.1;
  cfg.noise_utt = 0.1;
  auto data = synth_generate(cfg);
  const auto cm = correlation_matrix(data);

  // p_acc vs u_acc: the proficiency chain from phones to the utterance.
  REQUIRE(cm.m[0][3].has_value());
  CHECK(*cm.m[0][3] > 0.8);
  // w_avg tracks utterance total.
  REQUIRE(cm.m[1][6].has_value());
  CHECK(*cm.m[1][6] > 0.8);
  // Stress is planted to depend on the utterance factor too.
  REQUIRE(cm.m[7][3].has_value());
  CHECK(*cm.m[7][3] > 0.3);

  // Unit diagonal and symmetry on defined cells.
  for (int i = 0; i < kCorrFields; ++i)
    for (int j = 0; j < kCorrFields; ++j) {
      if (!cm.m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) continue;
      if (i == j) CHECK(*cm.m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] == 1.0);
      CHECK(*cm.m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] ==
            *cm.m[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("correlation structure is stable across generator seeds") {
  SynthConfig a = small_cfg(31, 500);
  SynthConfig b = small_cfg(32, 500);
  const auto ca = correlation_matrix(synth_generate(a));
  const auto cb = correlation_matrix(synth_generate(b));
  // Completeness (field 2) is nearly constant by design, so its
  // correlations are meaningless noise; every other pair must agree.
  for (int i = 0; i < kCorrFields; ++i)
    for (int j = 0; j < kCorrFields; ++j) {
      if (i == 2 || j == 2) continue;
      REQUIRE(ca.m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].has_value());
      REQUIRE(cb.m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].has_value());
      CHECK(std::abs(*ca.m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] -
                     *cb.m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) < 0.05);
    }
}

TEST_CASE("zero-variance fields are undefined, never zero") {
  SynthConfig cfg = small_cfg(8, 60);
  cfg.completeness_skew = 1.0;  // completeness constant at 2.0
  auto data = synth_generate(cfg);
  const auto cm = correlation_matrix(data);
  for (int j = 0; j < kCorrFields; ++j) {
    CHECK_FALSE(cm.m[2][static_cast<std::size_t>(j)].has_value());
    CHECK_FALSE(cm.m[static_cast<std::size_t>(j)][2].has_value());
  }
  REQUIRE(cm.m[0][3].has_value());

  CHECK_THROWS_AS(correlation_matrix({data[0]}), Error);

  const std::string path = "test_data_corr.json";
  save_correlation(path, cm);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("null") != std::string::npos);
  CHECK(text.find("p_acc") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("completeness skew produces the documented ceiling") {
  auto data = synth_generate(small_cfg(55, 2000));
  int at_two = 0;
  for (const auto& s : data)
    if (s.utt_scores.completeness == 2.0) ++at_two;
  // 0.995 of 2000, with slack for the binomial spread.
  CHECK(at_two > 1970);
  CHECK(at_two < 2000);
  for (const auto& s : data) {
    CHECK(s.utt_scores.completeness >= 0.8);
    CHECK(s.utt_scores.completeness <= 2.0);
  }
}

TEST_CASE("synth config validation") {
  SynthConfig cfg;
  cfg.n_utterances = -1;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = SynthConfig{};
  cfg.min_phones_per_word = 4;
  cfg.max_phones_per_word = 2;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = SynthConfig{};
  cfg.noise_word = -0.1;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = SynthConfig{};
  cfg.completeness_skew = 1.5;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = SynthConfig{};
  CHECK_NOTHROW(validate(cfg));
  CHECK(cfg.n_utterances == 5000);
}
