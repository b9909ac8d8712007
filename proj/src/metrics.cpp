// src/metrics.cpp

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

#include "hia/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "hia/error.hpp"
#include "hia/model.hpp"
#include "hia/rng.hpp"
#include "json.hpp"

namespace hia {

std::optional<double> pcc(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    fail(ErrorKind::contract, "pcc: length mismatch " + std::to_string(x.size()) + " vs " +
                                  std::to_string(y.size()));
  const std::size_t n = x.size();
  if (n < 2) fail(ErrorKind::contract, "pcc: need at least 2 points, got " + std::to_string(n));

  // A constant side makes the coefficient 0/0; report it as undefined
  // rather than trusting rounding noise in the deviations.
  bool x_const = true, y_const = true;
  for (std::size_t i = 1; i < n && (x_const || y_const); ++i) {
    x_const = x_const && x[i] == x[0];
    y_const = y_const && y[i] == y[0];
  }
  if (x_const || y_const) return std::nullopt;

  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  // r = sum((x - mx)(y - my)) / sqrt(sum((x - mx)^2) * sum((y - my)^2))
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  const double r = sxy / std::sqrt(sxx * syy);
  return std::min(1.0, std::max(-1.0, r));
}

namespace {

// Correlation over a pool, or undefined when the pool is too small to
// carry one.
std::optional<double> pool_pcc(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() < 2) return std::nullopt;
  return pcc(pred, target);
}

}  // namespace

MetricReport evaluate(HiaModel& model, const std::vector<UtteranceSample>& samples, int batch_size,
                      int max_len) {
  if (samples.empty()) fail(ErrorKind::contract, "evaluate: empty dataset");
  if (batch_size < 1) fail(ErrorKind::contract, "evaluate: batch_size must be >= 1");

  std::vector<double> phn_pred, phn_true;
  std::array<std::vector<double>, kWordAspects> word_pred, word_true;
  std::array<std::vector<double>, kUttAspects> utt_pred, utt_true;

  for (const auto& batch : make_batches(samples, batch_size, max_len, 0, false)) {
    const ScoreSet s = model.forward(batch, Mode::eval);
    for (int i = 0; i < batch.b; ++i) {
      for (int j = 0; j < batch.t; ++j) {
        const std::size_t at = static_cast<std::size_t>(i * batch.t + j);
        if (batch.phone_mask->data[at] == 0.0) continue;
        phn_pred.push_back(s.s_phn->data[at]);
        phn_true.push_back(batch.phone_targets->data[at]);
      }
      for (int wi = 0; wi < batch.w; ++wi) {
        if (batch.word_mask->data[static_cast<std::size_t>(i * batch.w + wi)] == 0.0) continue;
        for (int k = 0; k < kWordAspects; ++k) {
          const std::size_t at =
              static_cast<std::size_t>((i * batch.w + wi) * kWordAspects + k);
          word_pred[static_cast<std::size_t>(k)].push_back(s.s_word->data[at]);
          word_true[static_cast<std::size_t>(k)].push_back(batch.word_targets->data[at]);
        }
      }
      for (int k = 0; k < kUttAspects; ++k) {
        const std::size_t at = static_cast<std::size_t>(i * kUttAspects + k);
        utt_pred[static_cast<std::size_t>(k)].push_back(s.s_utt->data[at]);
        utt_true[static_cast<std::size_t>(k)].push_back(batch.utt_targets->data[at]);
      }
    }
  }

  MetricReport r;
  double se = 0.0;
  for (std::size_t i = 0; i < phn_pred.size(); ++i) {
    const double d = phn_pred[i] - phn_true[i];
    se += d * d;
  }
  r.phn_mse = phn_pred.empty() ? 0.0 : se / static_cast<double>(phn_pred.size());
  r.phn_pcc = pool_pcc(phn_pred, phn_true);
  for (int k = 0; k < kWordAspects; ++k)
    r.word_pcc[static_cast<std::size_t>(k)] =
        pool_pcc(word_pred[static_cast<std::size_t>(k)], word_true[static_cast<std::size_t>(k)]);
  for (int k = 0; k < kUttAspects; ++k)
    r.utt_pcc[static_cast<std::size_t>(k)] =
        pool_pcc(utt_pred[static_cast<std::size_t>(k)], utt_true[static_cast<std::size_t>(k)]);
  return r;
}

AggregateReport aggregate(const std::vector<MetricReport>& runs) {
  if (runs.empty()) fail(ErrorKind::contract, "aggregate: no runs");
  AggregateReport a;
  a.n_runs = static_cast<int>(runs.size());
  const double n = static_cast<double>(runs.size());

  auto stats = [&](auto get) -> std::pair<std::optional<double>, std::optional<double>> {
    std::vector<double> vals;
    for (const auto& r : runs) {
      const std::optional<double> v = get(r);
      if (!v) return {std::nullopt, std::nullopt};
      vals.push_back(*v);
    }
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    // Sample standard deviation; a single run reports zero spread.
    const double sd = runs.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    return {mean, sd};
  };

  auto mse = stats([](const MetricReport& r) { return std::optional<double>(r.phn_mse); });
  a.mean.phn_mse = *mse.first;
  a.stdev.phn_mse = *mse.second;
  auto ppcc = stats([](const MetricReport& r) { return r.phn_pcc; });
  a.mean.phn_pcc = ppcc.first;
  a.stdev.phn_pcc = ppcc.second;
  for (int k = 0; k < kWordAspects; ++k) {
    auto st = stats([k](const MetricReport& r) { return r.word_pcc[static_cast<std::size_t>(k)]; });
    a.mean.word_pcc[static_cast<std::size_t>(k)] = st.first;
    a.stdev.word_pcc[static_cast<std::size_t>(k)] = st.second;
  }
  for (int k = 0; k < kUttAspects; ++k) {
    auto st = stats([k](const MetricReport& r) { return r.utt_pcc[static_cast<std::size_t>(k)]; });
    a.mean.utt_pcc[static_cast<std::size_t>(k)] = st.first;
    a.stdev.utt_pcc[static_cast<std::size_t>(k)] = st.second;
  }
  return a;
}

namespace {

const char* kWordNames[kWordAspects] = {"accuracy", "stress", "total"};
const char* kUttNames[kUttAspects] = {"accuracy", "completeness", "fluency", "prosodic", "total"};

nlohmann::ordered_json cell(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;
}

nlohmann::ordered_json report_obj(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["phoneme"] = {{"mse", r.phn_mse}, {"pcc", cell(r.phn_pcc)}};
  nlohmann::ordered_json jw;
  for (int k = 0; k < kWordAspects; ++k)
    jw[kWordNames[k]] = cell(r.word_pcc[static_cast<std::size_t>(k)]);
  j["word_pcc"] = std::move(jw);
  nlohmann::ordered_json ju;
  for (int k = 0; k < kUttAspects; ++k)
    ju[kUttNames[k]] = cell(r.utt_pcc[static_cast<std::size_t>(k)]);
  j["utterance_pcc"] = std::move(ju);
  return j;
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string cell_text(const std::optional<double>& v) { return v ? fmt3(*v) : "n/a"; }

std::string cell_text(const std::optional<double>& mean, const std::optional<double>& sd) {
  if (!mean || !sd) return "n/a";
  return fmt3(*mean) + "+-" + fmt3(*sd);
}

std::string pad_to(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

// One header spanning the granularities, one row per system: the layout
// used for multi-aspect assessment results.
std::string render_table(const std::string& system, const std::vector<std::string>& cells) {
  const std::vector<std::string> headers = {"system",   "phn_acc",  "word_acc", "word_str",
                                            "word_tot", "utt_acc",  "utt_comp", "utt_flu",
                                            "utt_pros", "utt_tot"};
  std::vector<std::string> row = {system};
  row.insert(row.end(), cells.begin(), cells.end());
  std::ostringstream os;
  std::vector<std::size_t> width(headers.size());
  for (std::size_t i = 0; i < headers.size(); ++i)
    width[i] = std::max(headers[i].size(), row[i].size()) + 2;
  for (std::size_t i = 0; i < headers.size(); ++i) os << pad_to(headers[i], width[i]);
  os << "\n";
  for (std::size_t i = 0; i < row.size(); ++i) os << pad_to(row[i], width[i]);
  os << "\n";
  return os.str();
}

}  // namespace

std::string report_json(const MetricReport& r) { return report_obj(r).dump(2) + "\n"; }

std::string aggregate_json(const AggregateReport& a) {
  nlohmann::ordered_json j;
  j["n_runs"] = a.n_runs;
  j["mean"] = report_obj(a.mean);
  j["stdev"] = report_obj(a.stdev);
  return j.dump(2) + "\n";
}

std::string report_table(const std::string& system, const MetricReport& r) {
  std::vector<std::string> cells;
  cells.push_back(cell_text(r.phn_pcc));
  for (int k = 0; k < kWordAspects; ++k)
    cells.push_back(cell_text(r.word_pcc[static_cast<std::size_t>(k)]));
  for (int k = 0; k < kUttAspects; ++k)
    cells.push_back(cell_text(r.utt_pcc[static_cast<std::size_t>(k)]));
  return render_table(system, cells);
}

std::string aggregate_table(const std::string& system, const AggregateReport& a) {
  std::vector<std::string> cells;
  cells.push_back(cell_text(a.mean.phn_pcc, a.stdev.phn_pcc));
  for (int k = 0; k < kWordAspects; ++k)
    cells.push_back(cell_text(a.mean.word_pcc[static_cast<std::size_t>(k)],
                              a.stdev.word_pcc[static_cast<std::size_t>(k)]));
  for (int k = 0; k < kUttAspects; ++k)
    cells.push_back(cell_text(a.mean.utt_pcc[static_cast<std::size_t>(k)],
                              a.stdev.utt_pcc[static_cast<std::size_t>(k)]));
  return render_table(system, cells);
}

PccSuiteResult pcc_properties_suite(std::uint64_t seed, int n_cases, double tol) {
  PccSuiteResult res;
  Rng rng(seed);
  auto fail_case = [&](int i, const std::string& what) {
    res.first_failure = "case " + std::to_string(i) + ": " + what;
  };
  for (int i = 0; i < n_cases; ++i) {
    const int n = rng.randint(2, 50);
    std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
    for (auto& v : x) v = rng.normal();
    for (auto& v : y) v = rng.normal();
    const auto rxy = pcc(x, y);
    const auto ryx = pcc(y, x);
    if (!rxy || !ryx) {
      fail_case(i, "undefined on random input");
      break;
    }
    if (std::abs(*rxy - *ryx) > tol) {
      fail_case(i, "asymmetry " + std::to_string(std::abs(*rxy - *ryx)));
      break;
    }
    if (std::abs(*rxy) > 1.0) {
      fail_case(i, "out of bounds " + std::to_string(*rxy));
      break;
    }
    // pcc(a*x + b, y) = sign(a) * pcc(x, y)
    const double a = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 3.0);
    const double b = rng.uniform(-2.0, 2.0);
    std::vector<double> ax(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) ax[k] = a * x[k] + b;
    const auto raxy = pcc(ax, y);
    if (!raxy) {
      fail_case(i, "undefined after affine map");
      break;
    }
    const double expect = (a < 0.0 ? -1.0 : 1.0) * *rxy;
    if (std::abs(*raxy - expect) > tol) {
      fail_case(i, "affine equivariance off by " + std::to_string(std::abs(*raxy - expect)));
      break;
    }
    const auto rxx = pcc(x, x);
    if (!rxx || std::abs(*rxx - 1.0) > tol) {
      fail_case(i, "pcc(x, x) != 1");
      break;
    }
    res.cases_run = i + 1;
  }
  res.pass = res.first_failure.empty() && res.cases_run == n_cases;
  return res;
}

}  // namespace hia
