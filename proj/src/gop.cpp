// src/gop.cpp

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

#include "hia/gop.hpp"

#include <cmath>
#include <fstream>

#include "hia/error.hpp"
#include "json.hpp"

namespace hia {

void validate(const PosteriorGram& pg) {
  if (pg.n_phones <= 0)
    fail(ErrorKind::validation, "posteriorgram: n_phones must be positive, got " +
                                    std::to_string(pg.n_phones));
  if (pg.state_to_phone.empty())
    fail(ErrorKind::validation, "posteriorgram: state_to_phone is empty");
  for (std::size_t s = 0; s < pg.state_to_phone.size(); ++s) {
    const int p = pg.state_to_phone[s];
    if (p < 0 || p >= pg.n_phones)
      fail(ErrorKind::validation, "posteriorgram: state " + std::to_string(s) +
                                      " maps to phone " + std::to_string(p) +
                                      ", outside [0, " + std::to_string(pg.n_phones) + ")");
  }
  for (std::size_t t = 0; t < pg.frames.size(); ++t) {
    const auto& row = pg.frames[t];
    if (row.size() != pg.state_to_phone.size())
      fail(ErrorKind::validation, "posteriorgram: frame " + std::to_string(t) + " has " +
                                      std::to_string(row.size()) + " states, expected " +
                                      std::to_string(pg.state_to_phone.size()));
    double sum = 0.0;
    for (std::size_t s = 0; s < row.size(); ++s) {
      if (!std::isfinite(row[s]) || row[s] < 0.0)
        fail(ErrorKind::validation, "posteriorgram: frame " + std::to_string(t) + " state " +
                                        std::to_string(s) + " has invalid posterior " +
                                        std::to_string(row[s]));
      sum += row[s];
    }
    if (std::abs(sum - 1.0) > 1e-9)
      fail(ErrorKind::validation, "posteriorgram: frame " + std::to_string(t) +
                                      " posteriors sum to " + std::to_string(sum) +
                                      ", expected 1 within 1e-9");
  }
}

void validate_segment(const PosteriorGram& pg, const AlignmentSegment& seg) {
  if (seg.phone < 0 || seg.phone >= pg.n_phones)
    fail(ErrorKind::lookup, "segment: unknown phone id " + std::to_string(seg.phone));
  if (seg.t_start < 0 || seg.t_end < seg.t_start || seg.t_end >= pg.n_frames())
    fail(ErrorKind::validation, "segment: frame range [" + std::to_string(seg.t_start) + ", " +
                                    std::to_string(seg.t_end) + "] invalid for " +
                                    std::to_string(pg.n_frames()) + " frames");
}

double phone_posterior(const PosteriorGram& pg, int frame, int phone) {
  if (frame < 0 || frame >= pg.n_frames())
    fail(ErrorKind::validation, "phone_posterior: frame " + std::to_string(frame) +
                                    " out of range for " + std::to_string(pg.n_frames()) +
                                    " frames");
  if (phone < 0 || phone >= pg.n_phones)
    fail(ErrorKind::lookup, "phone_posterior: unknown phone id " + std::to_string(phone));
  const auto& row = pg.frames[frame];
  double acc = 0.0;
  for (std::size_t s = 0; s < row.size(); ++s)
    if (pg.state_to_phone[s] == phone) acc += row[s];
  return acc;
}

namespace {

// sum_{t=t_s}^{t_e} log max(p(phone|o_t), floor)
double segment_log_sum(const PosteriorGram& pg, const AlignmentSegment& seg, int phone) {
  double acc = 0.0;
  for (int t = seg.t_start; t <= seg.t_end; ++t)
    acc += std::log(std::max(phone_posterior(pg, t, phone), kPosteriorFloor));
  return acc;
}

}  // namespace

double lpp(const PosteriorGram& pg, const AlignmentSegment& seg, int phone) {
  validate_segment(pg, seg);
  if (phone < 0 || phone >= pg.n_phones)
    fail(ErrorKind::lookup, "lpp: unknown phone id " + std::to_string(phone));
  const double n = static_cast<double>(seg.t_end - seg.t_start + 1);
  return segment_log_sum(pg, seg, phone) / n;
}

double lpr(const PosteriorGram& pg, const AlignmentSegment& seg, int phone_j, int phone_i) {
  validate_segment(pg, seg);
  if (phone_j < 0 || phone_j >= pg.n_phones)
    fail(ErrorKind::lookup, "lpr: unknown phone id " + std::to_string(phone_j));
  if (phone_i < 0 || phone_i >= pg.n_phones)
    fail(ErrorKind::lookup, "lpr: unknown phone id " + std::to_string(phone_i));
  return segment_log_sum(pg, seg, phone_j) - segment_log_sum(pg, seg, phone_i);
}

std::vector<double> gop_vector(const PosteriorGram& pg, const AlignmentSegment& seg) {
  validate_segment(pg, seg);
  std::vector<double> out(2 * static_cast<std::size_t>(pg.n_phones));
  for (int p = 0; p < pg.n_phones; ++p) {
    out[static_cast<std::size_t>(p)] = lpp(pg, seg, p);
    out[static_cast<std::size_t>(pg.n_phones + p)] = lpr(pg, seg, p, seg.phone);
  }
  return out;
}

namespace {

nlohmann::ordered_json load_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::validation, std::string(what) + ": cannot open " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string(what) + ": " + path + ": " + e.what());
  }
  return j;
}

}  // namespace

PosteriorGram load_posteriorgram(const std::string& path) {
  const auto j = load_json_file(path, "posteriorgram");
  PosteriorGram pg;
  try {
    if (j.contains("n_phones")) pg.n_phones = j.at("n_phones").get<int>();
    pg.state_to_phone = j.at("state_to_phone").get<std::vector<int>>();
    pg.frames = j.at("frames").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, "posteriorgram: " + path + ": " + e.what());
  }
  validate(pg);
  return pg;
}

std::vector<AlignmentSegment> load_alignment(const std::string& path) {
  const auto j = load_json_file(path, "alignment");
  if (!j.contains("segments") || !j.at("segments").is_array())
    fail(ErrorKind::parse, "alignment: " + path + ": missing \"segments\" array");
  std::vector<AlignmentSegment> segs;
  try {
    for (const auto& js : j.at("segments")) {
      AlignmentSegment s;
      s.phone = js.at("phone").get<int>();
      s.t_start = js.at("t_start").get<int>();
      s.t_end = js.at("t_end").get<int>();
      segs.push_back(s);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, "alignment: " + path + ": " + e.what());
  }
  return segs;
}

void save_gop_features(const std::string& path, const std::vector<std::vector<double>>& features) {
  nlohmann::ordered_json j;
  j["features"] = features;
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "gop features: cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
  if (!out) fail(ErrorKind::io, "gop features: write to " + path + " failed");
}

}  // namespace hia
