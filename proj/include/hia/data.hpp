// include/hia/data.hpp

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

// Dataset schema, score rescaling, batching with masks, synthetic data with
// planted cross-granularity structure, and score correlation analysis.
//
// Scores live in [0, 2] in memory.  On disk, word and utterance scores use
// the human 0-10 scale and are rescaled on load; phoneme scores are already
// on the [0, 2] scale and stored as-is.

#ifndef HIA_DATA_HPP_
#define HIA_DATA_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hia/gop.hpp"
#include "hia/tensor.hpp"

namespace hia {

inline constexpr int kWordAspects = 3;  // accuracy, stress, total
inline constexpr int kUttAspects = 5;   // accuracy, completeness, fluency, prosodic, total
inline constexpr int kMaxLenDefault = 50;
inline constexpr int kPadPhoneId = kNumPhones;  // reserved id for padding

struct WordScores {
  double accuracy = 0.0;
  double stress = 0.0;
  double total = 0.0;
};

struct UttScores {
  double accuracy = 0.0;
  double completeness = 0.0;
  double fluency = 0.0;
  double prosodic = 0.0;
  double total = 0.0;
};

struct UtteranceSample {
  std::vector<int> phones;                // canonical phone ids, length T
  std::vector<int> word_id;               // per-position word index, length T
  std::vector<std::vector<double>> gop;   // T x kGopDim
  std::vector<double> phone_scores;       // length T, in [0, 2]
  std::vector<WordScores> word_scores;    // one per word
  UttScores utt_scores;

  int n_phones() const { return static_cast<int>(phones.size()); }
  int n_words() const { return static_cast<int>(word_scores.size()); }
};

// raw / 5, with 0 <= raw <= 10 enforced.
double rescale(double raw);

// Enforces equal lengths, contiguous word ids starting at 0, score ranges,
// gop width, and finite values.  `index` names the record in errors.
void validate_sample(const UtteranceSample& s, int index);

std::vector<UtteranceSample> load_dataset(const std::string& path);
void save_dataset(const std::string& path, const std::vector<UtteranceSample>& samples);

// Sequences are padded to max_len with zero GOP rows, the reserved pad
// phone id, and zero mask.  Word slots are padded to the widest sample in
// the batch.  Targets at padded slots are zero and masked out.
struct Batch {
  int b = 0;
  int t = 0;
  int w = 0;
  std::vector<int> phones;   // b * t ids, pad = kPadPhoneId
  TensorPtr gop;             // [b, t, kGopDim]
  TensorPtr phone_mask;      // [b, t], 1 = real position
  TensorPtr word_mask;       // [b, w], 1 = real word
  TensorPtr utt_mask;        // [b, kUttAspects], all ones
  SegmentSpans spans;        // word spans inside the padded sequences
  TensorPtr phone_targets;   // [b, t]
  TensorPtr word_targets;    // [b, w, kWordAspects]
  TensorPtr utt_targets;     // [b, kUttAspects]
  std::vector<int> sample_index;  // position of each row in the source list
};

Batch make_batch(const std::vector<UtteranceSample>& samples, const std::vector<int>& idx,
                 int max_len);

// Deterministic shuffle under `seed`, then fixed-size chunks (the last may
// be short).  Samples longer than max_len are rejected in one error that
// lists every offending index.
std::vector<Batch> make_batches(const std::vector<UtteranceSample>& samples, int batch_size,
                                int max_len, std::uint64_t seed, bool shuffle = true);

// How strongly each level of the synthetic generator feeds the next.
// identity() wires word accuracy straight to phone-score means, stress
// straight to word accuracy, and utterance aspects straight to word-score
// means, with no cross terms.
struct SynthCoupling {
  double word_acc_gain = 1.0;      // word accuracy <- mean of phone scores
  double stress_acc = 0.35;        // stress <- word accuracy
  double stress_utt = 0.5;         // stress <- utterance factor (2u - 1)
  double stress_word = 0.5;        // stress <- word identity factor (2v - 1)
  double stress_interaction = 0.7; // stress <- (2u - 1)(2v - 1)
  double stress_bias = 0.65;
  double utt_acc_gain = 1.0, utt_acc_bias = 0.0;
  double utt_flu_gain = 0.9, utt_flu_bias = 0.1;
  double utt_pros_gain = 0.85, utt_pros_bias = 0.15;
  double utt_tot_gain = 1.0, utt_tot_bias = 0.0;

  static SynthCoupling identity();
};

struct SynthConfig {
  int n_utterances = 5000;
  int max_words = 6;           // words per utterance drawn from [1, max_words]
  int min_phones_per_word = 2;
  int max_phones_per_word = 5;
  double noise_gop = 0.25;
  double noise_phone = 0.15;
  double noise_word = 0.06;
  double noise_utt = 0.05;
  double completeness_skew = 0.995;  // P(completeness == 2.0)
  std::uint64_t seed = 1;
  SynthCoupling coupling;
};

void validate(const SynthConfig& cfg);

// Seed fully determines the output; utterance i uses an RNG stream derived
// from (seed, i), so generation order never matters.
std::vector<UtteranceSample> synth_generate(const SynthConfig& cfg);

// Per-utterance aggregates correlated pairwise: mean phoneme accuracy,
// mean word score, the five utterance aspects, and mean word stress.
inline constexpr int kCorrFields = 8;
extern const std::array<const char*, kCorrFields> kCorrLabels;
// {"p_acc", "w_avg", "u_com", "u_acc", "u_flu", "u_pros", "u_tot", "w_str"}

struct CorrelationMatrix {
  // m[i][j] undefined when field i or j has zero variance.
  std::array<std::array<std::optional<double>, kCorrFields>, kCorrFields> m;
};

CorrelationMatrix correlation_matrix(const std::vector<UtteranceSample>& samples);

// {"labels": [...], "matrix": [[...]]} with null for undefined cells.
void save_correlation(const std::string& path, const CorrelationMatrix& cm);

}  // namespace hia

#endif  // HIA_DATA_HPP_
