// include/hia/gop.hpp

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

// Goodness-of-pronunciation features from frame-level acoustic posteriors.
//
// A posteriorgram holds per-frame probabilities over senone-like states,
// each state belonging to one phone.  For a canonical phone p aligned to
// frames [t_s, t_e]:
//
//   p(p|o_t)   = sum over states s of p: p(s|o_t)
//   LPP(p)     = 1/(t_e - t_s + 1) * sum_t log p(p|o_t)
//   LPR(p_j|p_i) = sum_t log p(p_j|o_t) - sum_t log p(p_i|o_t)
//
// LPP averages over the segment; LPR deliberately does not.  Posteriors are
// floored at 1e-10 before the log.  The per-segment feature vector is the
// 42 LPPs followed by the 42 LPRs of each phone against the canonical one.

#ifndef HIA_GOP_HPP_
#define HIA_GOP_HPP_

#include <string>
#include <vector>

namespace hia {

inline constexpr int kNumPhones = 42;
inline constexpr int kGopDim = 2 * kNumPhones;
inline constexpr double kPosteriorFloor = 1e-10;

struct PosteriorGram {
  int n_phones = kNumPhones;
  std::vector<int> state_to_phone;          // state id -> phone id
  std::vector<std::vector<double>> frames;  // [n_frames][n_states]

  int n_frames() const { return static_cast<int>(frames.size()); }
  int n_states() const { return static_cast<int>(state_to_phone.size()); }
};

struct AlignmentSegment {
  int phone = 0;    // canonical phone id
  int t_start = 0;  // inclusive
  int t_end = 0;    // inclusive
};

// Checks state map, row lengths, non-negativity, and unit row sums (1e-9).
void validate(const PosteriorGram& pg);
void validate_segment(const PosteriorGram& pg, const AlignmentSegment& seg);

double phone_posterior(const PosteriorGram& pg, int frame, int phone);
double lpp(const PosteriorGram& pg, const AlignmentSegment& seg, int phone);
double lpr(const PosteriorGram& pg, const AlignmentSegment& seg, int phone_j, int phone_i);

// [LPP(p_1)..LPP(p_42), LPR(p_1|p)..LPR(p_42|p)] for canonical phone p.
std::vector<double> gop_vector(const PosteriorGram& pg, const AlignmentSegment& seg);

PosteriorGram load_posteriorgram(const std::string& path);
std::vector<AlignmentSegment> load_alignment(const std::string& path);
void save_gop_features(const std::string& path, const std::vector<std::vector<double>>& features);

}  // namespace hia

#endif  // HIA_GOP_HPP_
