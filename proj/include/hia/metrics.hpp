// include/hia/metrics.hpp

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

// Evaluation metrics: mean squared error and Pearson correlation per aspect
// and granularity, plus multi-seed aggregation and report rendering.

#ifndef HIA_METRICS_HPP_
#define HIA_METRICS_HPP_

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "hia/data.hpp"

namespace hia {

struct HiaModel;

// PCC(x, y) = sum((x - mx)(y - my)) / sqrt(sum((x - mx)^2) sum((y - my)^2)),
// clamped to [-1, 1] against floating-point drift.  Undefined (nullopt)
// when either side has zero variance; fewer than two points is a contract
// error.
std::optional<double> pcc(const std::vector<double>& x, const std::vector<double>& y);

// Predictions are pooled over the whole dataset before any statistic:
// all real phoneme positions for the phoneme row, all real words per
// aspect, all utterances per aspect.
struct MetricReport {
  double phn_mse = 0.0;
  std::optional<double> phn_pcc;
  std::array<std::optional<double>, kWordAspects> word_pcc;  // accuracy, stress, total
  std::array<std::optional<double>, kUttAspects> utt_pcc;    // acc, comp, flu, pros, total
};

MetricReport evaluate(HiaModel& model, const std::vector<UtteranceSample>& samples,
                      int batch_size, int max_len);

// Mean and sample standard deviation (n - 1) across independent runs.
// Correlation cells are defined only when defined in every run.
struct AggregateReport {
  int n_runs = 0;
  MetricReport mean;
  MetricReport stdev;
};

AggregateReport aggregate(const std::vector<MetricReport>& runs);

std::string report_json(const MetricReport& r);
std::string aggregate_json(const AggregateReport& a);

// One row per system: a phoneme accuracy column, three word columns, five
// utterance columns.  Cells are "mean+-std" (or a single value), "n/a" when
// undefined.
std::string report_table(const std::string& system, const MetricReport& r);
std::string aggregate_table(const std::string& system, const AggregateReport& a);

struct PccSuiteResult {
  bool pass = false;
  int cases_run = 0;
  std::string first_failure;  // empty when pass
};

// Randomized checks of pcc algebra: symmetry, affine equivariance with the
// sign of the slope, |pcc| <= 1, and pcc(x, x) = 1.
PccSuiteResult pcc_properties_suite(std::uint64_t seed, int n_cases, double tol);

}  // namespace hia

#endif  // HIA_METRICS_HPP_
