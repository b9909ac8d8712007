// tests/test_gop.cpp

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
#include <vector>

#include "hia/error.hpp"
#include "hia/gop.hpp"
#include "hia/rng.hpp"
#include "doctest.h"

using namespace hia;

namespace {

// Plain reference computation, written only from the feature definitions.
double ref_phone_post(const PosteriorGram& pg, int t, int p) {
  double a = 0.0;
  for (int s = 0; s < pg.n_states(); ++s)
    if (pg.state_to_phone[static_cast<std::size_t>(s)] == p)
      a += pg.frames[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)];
  return a;
}

double ref_lpp(const PosteriorGram& pg, const AlignmentSegment& seg, int p) {
  double a = 0.0;
  for (int t = seg.t_start; t <= seg.t_end; ++t) {
    double q = ref_phone_post(pg, t, p);
    if (q < 1e-10) q = 1e-10;
    a += std::log(q);
  }
  return a / (seg.t_end - seg.t_start + 1);
}

double ref_lpr(const PosteriorGram& pg, const AlignmentSegment& seg, int j, int i) {
  double aj = 0.0, ai = 0.0;
  for (int t = seg.t_start; t <= seg.t_end; ++t) {
    double qj = ref_phone_post(pg, t, j), qi = ref_phone_post(pg, t, i);
    if (qj < 1e-10) qj = 1e-10;
    if (qi < 1e-10) qi = 1e-10;
    aj += std::log(qj);
    ai += std::log(qi);
  }
  return aj - ai;
}

// Random gram: `states` states spread over `phones` phones, softmax rows.
PosteriorGram random_gram(Rng& rng, int phones, int states, int frames) {
  PosteriorGram pg;
  pg.n_phones = phones;
  pg.state_to_phone.resize(static_cast<std::size_t>(states));
  for (int s = 0; s < states; ++s)
    pg.state_to_phone[static_cast<std::size_t>(s)] = (s < phones) ? s : rng.randint(0, phones - 1);
  pg.frames.resize(static_cast<std::size_t>(frames));
  for (auto& row : pg.frames) {
    row.resize(static_cast<std::size_t>(states));
    double z = 0.0;
    for (auto& v : row) {
      v = std::exp(2.0 * rng.normal());
      z += v;
    }
    for (auto& v : row) v /= z;
  }
  return pg;
}

PosteriorGram uniform_gram(int phones, int frames) {
  PosteriorGram pg;
  pg.n_phones = phones;
  pg.state_to_phone.resize(static_cast<std::size_t>(phones));
  for (int s = 0; s < phones; ++s) pg.state_to_phone[static_cast<std::size_t>(s)] = s;
  pg.frames.assign(static_cast<std::size_t>(frames),
                   std::vector<double>(static_cast<std::size_t>(phones), 1.0 / phones));
  return pg;
}

}  // namespace

TEST_CASE("phone posterior sums the posteriors of the phone's states") {
  PosteriorGram pg;
  pg.n_phones = 2;
  pg.state_to_phone = {0, 0, 1};
  pg.frames = {{0.3, 0.2, 0.5}};
  validate(pg);
  CHECK(phone_posterior(pg, 0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(phone_posterior(pg, 0, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("uniform posteriors give lpp of log(1/42) and zero lpr") {
  PosteriorGram pg = uniform_gram(42, 7);
  validate(pg);
  AlignmentSegment seg{13, 1, 5};
  for (int p = 0; p < 42; ++p) {
    CHECK(lpp(pg, seg, p) == doctest::Approx(std::log(1.0 / 42.0)).epsilon(1e-12));
    CHECK(lpr(pg, seg, p, seg.phone) == 0.0);
  }
  CHECK(std::log(1.0 / 42.0) == doctest::Approx(-3.7376696182833684).epsilon(1e-12));
}

TEST_CASE("lpp averages the log posterior over the segment") {
  // Two frames with canonical-phone posterior e^-1 and e^-3: mean log = -2.
  const double a = std::exp(-1.0), b = std::exp(-3.0);
  PosteriorGram pg;
  pg.n_phones = 2;
  pg.state_to_phone = {0, 1};
  pg.frames = {{a, 1.0 - a}, {b, 1.0 - b}};
  validate(pg);
  AlignmentSegment seg{0, 0, 1};
  CHECK(lpp(pg, seg, 0) == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("lpr is the unnormalized log posterior difference") {
  const double a = std::exp(-1.0), b = std::exp(-2.0);
  PosteriorGram pg;
  pg.n_phones = 3;
  pg.state_to_phone = {0, 1, 2};
  pg.frames = {{a, b, 1.0 - a - b}};
  validate(pg);
  AlignmentSegment seg{1, 0, 0};
  CHECK(lpr(pg, seg, 0, 1) == doctest::Approx(1.0).epsilon(1e-12));

  // Repeating the same frame must scale lpr but not lpp.
  pg.frames = {{a, b, 1.0 - a - b}, {a, b, 1.0 - a - b}, {a, b, 1.0 - a - b}};
  AlignmentSegment seg3{1, 0, 2};
  CHECK(lpr(pg, seg3, 0, 1) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(lpp(pg, seg3, 0) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("zero posteriors are floored before the log") {
  PosteriorGram pg;
  pg.n_phones = 2;
  pg.state_to_phone = {0, 1};
  pg.frames = {{0.0, 1.0}};
  validate(pg);
  AlignmentSegment seg{1, 0, 0};
  CHECK(lpp(pg, seg, 0) == doctest::Approx(std::log(1e-10)).epsilon(1e-12));
  CHECK(std::isfinite(lpr(pg, seg, 0, 1)));
}

TEST_CASE("lpr is antisymmetric and zero against itself") {
  Rng rng(404);
  PosteriorGram pg = random_gram(rng, 6, 11, 9);
  validate(pg);
  AlignmentSegment seg{2, 1, 7};
  for (int j = 0; j < 6; ++j) {
    CHECK(lpr(pg, seg, j, j) == 0.0);
    for (int i = 0; i < 6; ++i) CHECK(lpr(pg, seg, j, i) == -lpr(pg, seg, i, j));
  }
}

TEST_CASE("gop vector stacks 42 lpps and 42 lprs against the canonical phone") {
  Rng rng(71);
  PosteriorGram pg = random_gram(rng, 42, 96, 14);
  validate(pg);
  AlignmentSegment seg{17, 3, 11};
  const auto v = gop_vector(pg, seg);
  REQUIRE(v.size() == 84);
  for (int p = 0; p < 42; ++p) {
    CHECK(v[static_cast<std::size_t>(p)] == lpp(pg, seg, p));
    CHECK(v[static_cast<std::size_t>(42 + p)] == lpr(pg, seg, p, seg.phone));
  }
  CHECK(v[static_cast<std::size_t>(42 + seg.phone)] == 0.0);
}

TEST_CASE("features match a reference computation on random posteriorgrams") {
  Rng rng(2026);
  for (int it = 0; it < 40; ++it) {
    const int phones = rng.randint(2, 12);
    const int states = phones + rng.randint(0, 10);
    const int frames = rng.randint(1, 10);
    PosteriorGram pg = random_gram(rng, phones, states, frames);
    validate(pg);
    AlignmentSegment seg;
    seg.phone = rng.randint(0, phones - 1);
    seg.t_start = rng.randint(0, frames - 1);
    seg.t_end = rng.randint(seg.t_start, frames - 1);
    const auto v = gop_vector(pg, seg);
    for (int p = 0; p < phones; ++p) {
      CHECK(v[static_cast<std::size_t>(p)] ==
            doctest::Approx(ref_lpp(pg, seg, p)).epsilon(1e-9));
      CHECK(v[static_cast<std::size_t>(phones + p)] ==
            doctest::Approx(ref_lpr(pg, seg, p, seg.phone)).epsilon(1e-9));
    }
  }
}

TEST_CASE("invalid posteriorgrams and segments are rejected") {
  PosteriorGram good = uniform_gram(4, 3);

  SUBCASE("row does not sum to one") {
    PosteriorGram pg = good;
    pg.frames[1][0] += 1e-6;
    CHECK_THROWS_AS(validate(pg), Error);
  }
  SUBCASE("row within tolerance passes") {
    PosteriorGram pg = good;
    pg.frames[1][0] += 5e-10;
    CHECK_NOTHROW(validate(pg));
  }
  SUBCASE("negative posterior") {
    PosteriorGram pg = good;
    pg.frames[0][0] = -0.25;
    pg.frames[0][1] = 0.75;
    CHECK_THROWS_AS(validate(pg), Error);
  }
  SUBCASE("state mapped to unknown phone") {
    PosteriorGram pg = good;
    pg.state_to_phone[2] = 9;
    CHECK_THROWS_AS(validate(pg), Error);
  }
  SUBCASE("ragged frame") {
    PosteriorGram pg = good;
    pg.frames[2].push_back(0.0);
    CHECK_THROWS_AS(validate(pg), Error);
  }
  SUBCASE("unknown phone id in queries") {
    AlignmentSegment seg{0, 0, 1};
    CHECK_THROWS_AS(lpp(good, seg, 4), Error);
    CHECK_THROWS_AS(lpr(good, seg, 0, -1), Error);
    CHECK_THROWS_AS(gop_vector(good, AlignmentSegment{4, 0, 1}), Error);
  }
  SUBCASE("segment out of range") {
    CHECK_THROWS_AS(lpp(good, AlignmentSegment{0, 0, 3}, 0), Error);
    CHECK_THROWS_AS(lpp(good, AlignmentSegment{0, -1, 1}, 0), Error);
    CHECK_THROWS_AS(lpp(good, AlignmentSegment{0, 2, 1}, 0), Error);
  }
  SUBCASE("error kinds") {
    try {
      lpp(good, AlignmentSegment{0, 0, 1}, 4);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::lookup);
    }
    try {
      validate_segment(good, AlignmentSegment{0, 0, 99});
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::validation);
    }
  }
}

TEST_CASE("posteriorgram and alignment files round-trip through json") {
  const std::string pg_path = "test_gop_pg.json";
  const std::string al_path = "test_gop_align.json";
  {
    std::ofstream out(pg_path);
    out << R"({"n_phones": 2, "state_to_phone": [0, 0, 1],
               "frames": [[0.25, 0.25, 0.5], [0.1, 0.1, 0.8]]})";
  }
  {
    std::ofstream out(al_path);
    out << R"({"segments": [{"phone": 0, "t_start": 0, "t_end": 1},
                            {"phone": 1, "t_start": 1, "t_end": 1}]})";
  }
  const PosteriorGram pg = load_posteriorgram(pg_path);
  CHECK(pg.n_phones == 2);
  CHECK(pg.n_states() == 3);
  CHECK(pg.n_frames() == 2);
  CHECK(phone_posterior(pg, 0, 0) == doctest::Approx(0.5).epsilon(1e-12));

  const auto segs = load_alignment(al_path);
  REQUIRE(segs.size() == 2);
  CHECK(segs[1].phone == 1);
  CHECK(segs[1].t_start == 1);

  std::vector<std::vector<double>> feats;
  for (const auto& s : segs) feats.push_back(gop_vector(pg, s));
  const std::string out_path = "test_gop_feats.json";
  save_gop_features(out_path, feats);
  std::ifstream back(out_path);
  REQUIRE(back.good());

  std::remove(pg_path.c_str());
  std::remove(al_path.c_str());
  std::remove(out_path.c_str());
}

TEST_CASE("malformed files are rejected with parse or validation errors") {
  const std::string path = "test_gop_bad.json";
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_posteriorgram(path), Error);
  {
    std::ofstream out(path);
    out << R"({"state_to_phone": [0], "frames": [[0.5]]})";
  }
  CHECK_THROWS_AS(load_posteriorgram(path), Error);  // row sums to 0.5
  {
    std::ofstream out(path);
    out << R"({"frames": [[1.0]]})";
  }
  CHECK_THROWS_AS(load_posteriorgram(path), Error);  // missing state map
  CHECK_THROWS_AS(load_posteriorgram("test_gop_missing_file.json"), Error);
  CHECK_THROWS_AS(load_alignment(path), Error);  // no "segments"
  std::remove(path.c_str());
}
