// include/hia/train.hpp

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

// Training: masked MSE losses summed across granularities, Adam, a step
// learning-rate schedule, and an epoch loop that keeps the checkpoint with
// the lowest dev phoneme MSE.

#ifndef HIA_TRAIN_HPP_
#define HIA_TRAIN_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hia/data.hpp"
#include "hia/metrics.hpp"
#include "hia/model.hpp"
#include "hia/tensor.hpp"
#include "json.hpp"

namespace hia {

struct TrainConfig {
  double lr0 = 1e-3;
  int epochs = 100;
  int halve_after = 20;  // epochs at the base rate before halving starts
  int halve_every = 5;
  int batch_size = 25;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg);
// Starts from defaults; unknown keys are a config error.
TrainConfig train_config_from_json(const nlohmann::ordered_json& j);

// lr0 * 0.5^max(0, floor((epoch - halve_after) / halve_every)); epoch 25 is
// the first halved epoch under the defaults.  Epochs start at 1.
double lr_at(int epoch, const TrainConfig& cfg);

// Masked mean of squared differences: sum(mask * (pred - target)^2) / sum(mask).
// Same shapes required; an all-zero mask is a contract error.
TensorPtr mse_loss(const TensorPtr& pred, const TensorPtr& target, const TensorPtr& mask);

struct LossReport {
  double phn_mse = 0.0;
  std::array<double, kWordAspects> word_mse{};
  std::array<double, kUttAspects> utt_mse{};
  double word_mean = 0.0;
  double utt_mean = 0.0;
  double total = 0.0;  // phn_mse + word_mean + utt_mean
};

struct LossGraph {
  TensorPtr node;  // scalar, differentiable
  LossReport report;
};

// Eq-style combined objective: each granularity contributes the mean of its
// aspect MSEs, and the total is the sum of the three granularity means.
LossGraph total_loss(const ScoreSet& scores, const Batch& batch);

// Standard Adam with bias correction; moment buffers are aligned with the
// registry order.  A non-finite gradient aborts with the parameter's name.
class Adam {
 public:
  Adam(const ParamRegistry& reg, const TrainConfig& cfg);
  void step(double lr);
  int steps_taken() const { return t_; }

 private:
  const ParamRegistry& reg_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct HistoryRow {
  int epoch = 0;  // training epochs count from 1
  double lr = 0.0;
  double train_total = 0.0;  // mean total loss over the epoch's steps
  MetricReport dev;
};

struct FitResult {
  // Lowest dev phoneme MSE seen.  The pre-training parameters are scored
  // too (as epoch 0), so a fallback exists even when the first epoch
  // diverges.
  Checkpoint best;
  std::vector<HistoryRow> history;
};

// Runs cfg.epochs epochs of shuffled minibatch training, evaluating the dev
// set after each epoch.  The model is left at its last-epoch parameters on
// normal completion.  If an epoch hits a non-finite value, training stops,
// the model is restored to the best checkpoint, and the history up to the
// last completed epoch is returned.
FitResult fit(HiaModel& model, const std::vector<UtteranceSample>& train_set,
              const std::vector<UtteranceSample>& dev_set, const TrainConfig& cfg);

// One row per epoch: epoch, lr, train total, then the dev phoneme MSE and
// the dev correlations per aspect ("nan" for undefined cells).  Numbers are
// printed with enough digits to round-trip exactly.
std::string history_csv(const std::vector<HistoryRow>& history);
void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history);

}  // namespace hia

#endif  // HIA_TRAIN_HPP_
