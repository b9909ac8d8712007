// src/train.cpp

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

#include "hia/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hia/error.hpp"
#include "hia/rng.hpp"

namespace hia {

namespace {

void log_line(const std::string& msg) { std::cerr << "[hia] " << msg << "\n"; }

}  // namespace

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) fail(ErrorKind::config, "train: lr0 must be positive");
  if (epochs < 1) fail(ErrorKind::config, "train: epochs must be >= 1");
  if (halve_after < 0) fail(ErrorKind::config, "train: halve_after must be >= 0");
  if (halve_every < 1) fail(ErrorKind::config, "train: halve_every must be >= 1");
  if (batch_size < 1) fail(ErrorKind::config, "train: batch_size must be >= 1");
  if (!(beta1 >= 0.0) || beta1 >= 1.0) fail(ErrorKind::config, "train: beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0) || beta2 >= 1.0) fail(ErrorKind::config, "train: beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) fail(ErrorKind::config, "train: adam_eps must be positive");
}

nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["lr0"] = cfg.lr0;
  j["epochs"] = cfg.epochs;
  j["halve_after"] = cfg.halve_after;
  j["halve_every"] = cfg.halve_every;
  j["batch_size"] = cfg.batch_size;
  j["seed"] = cfg.seed;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["adam_eps"] = cfg.adam_eps;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::ordered_json& j) {
  TrainConfig cfg;
  if (!j.is_object()) fail(ErrorKind::config, "train config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lr0") cfg.lr0 = value.get<double>();
      else if (key == "epochs") cfg.epochs = value.get<int>();
      else if (key == "halve_after") cfg.halve_after = value.get<int>();
      else if (key == "halve_every") cfg.halve_every = value.get<int>();
      else if (key == "batch_size") cfg.batch_size = value.get<int>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "beta1") cfg.beta1 = value.get<double>();
      else if (key == "beta2") cfg.beta2 = value.get<double>();
      else if (key == "adam_eps") cfg.adam_eps = value.get<double>();
      else fail(ErrorKind::config, "train config: unknown key \"" + key + "\"");
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::config, "train config: bad value for \"" + key + "\": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 1) fail(ErrorKind::contract, "lr_at: epochs count from 1");
  // lr = lr0 * 0.5^max(0, floor((epoch - halve_after) / halve_every))
  if (epoch <= cfg.halve_after) return cfg.lr0;
  const int halvings = (epoch - cfg.halve_after) / cfg.halve_every;
  return cfg.lr0 * std::pow(0.5, halvings);
}

TensorPtr mse_loss(const TensorPtr& pred, const TensorPtr& target, const TensorPtr& mask) {
  if (pred->shape != target->shape)
    fail(ErrorKind::dimension, "mse_loss: pred " + shape_str(pred->shape) + " vs target " +
                                   shape_str(target->shape));
  if (pred->size() != mask->size())
    fail(ErrorKind::dimension, "mse_loss: mask holds " + std::to_string(mask->size()) +
                                   " values for " + std::to_string(pred->size()) + " predictions");
  double mask_sum = 0.0;
  for (double m : mask->data) mask_sum += m;
  if (mask_sum <= 0.0) fail(ErrorKind::contract, "mse_loss: mask selects nothing");

  const auto diff = sub(pred, target);
  const auto masked_sq = mul(reshape(mask, pred->shape), mul(diff, diff));
  return scale(sum_all(masked_sq), 1.0 / mask_sum);
}

LossGraph total_loss(const ScoreSet& scores, const Batch& batch) {
  const int b = batch.b, w = batch.w;

  LossGraph out;
  const auto phn = mse_loss(scores.s_phn, batch.phone_targets, batch.phone_mask);

  std::array<TensorPtr, kWordAspects> word_nodes;
  for (int k = 0; k < kWordAspects; ++k) {
    const auto pk = reshape(slice(scores.s_word, 2, k, 1), {b, w});
    const auto tk = reshape(slice(batch.word_targets, 2, k, 1), {b, w});
    word_nodes[static_cast<std::size_t>(k)] = mse_loss(pk, tk, batch.word_mask);
  }
  std::array<TensorPtr, kUttAspects> utt_nodes;
  for (int k = 0; k < kUttAspects; ++k) {
    const auto pk = slice(scores.s_utt, 1, k, 1);
    const auto tk = slice(batch.utt_targets, 1, k, 1);
    utt_nodes[static_cast<std::size_t>(k)] = mse_loss(pk, tk, slice(batch.utt_mask, 1, k, 1));
  }

  // total = phn + mean(word aspect MSEs) + mean(utterance aspect MSEs)
  auto word_sum = word_nodes[0];
  for (int k = 1; k < kWordAspects; ++k) word_sum = add(word_sum, word_nodes[static_cast<std::size_t>(k)]);
  const auto word_mean = scale(word_sum, 1.0 / kWordAspects);
  auto utt_sum = utt_nodes[0];
  for (int k = 1; k < kUttAspects; ++k) utt_sum = add(utt_sum, utt_nodes[static_cast<std::size_t>(k)]);
  const auto utt_mean = scale(utt_sum, 1.0 / kUttAspects);
  out.node = add(phn, add(word_mean, utt_mean));

  out.report.phn_mse = phn->value();
  for (int k = 0; k < kWordAspects; ++k)
    out.report.word_mse[static_cast<std::size_t>(k)] = word_nodes[static_cast<std::size_t>(k)]->value();
  for (int k = 0; k < kUttAspects; ++k)
    out.report.utt_mse[static_cast<std::size_t>(k)] = utt_nodes[static_cast<std::size_t>(k)]->value();
  out.report.word_mean = word_mean->value();
  out.report.utt_mean = utt_mean->value();
  out.report.total = out.node->value();
  return out;
}

Adam::Adam(const ParamRegistry& reg, const TrainConfig& cfg)
    : reg_(reg), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_eps) {
  m_.reserve(reg.params().size());
  v_.reserve(reg.params().size());
  for (const auto& [name, t] : reg.params()) {
    m_.emplace_back(t->size(), 0.0);
    v_.emplace_back(t->size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  const auto& params = reg_.params();
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& [name, p] = params[pi];
    p->ensure_grad();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      const double g = p->grad[i];
      if (!std::isfinite(g))
        fail(ErrorKind::numeric,
             "adam: non-finite gradient in " + name + "[" + std::to_string(i) + "]");
      // m_t = b1 m + (1-b1) g;  v_t = b2 v + (1-b2) g^2
      // p -= lr * (m_t / (1-b1^t)) / (sqrt(v_t / (1-b2^t)) + eps)
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p->data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

FitResult fit(HiaModel& model, const std::vector<UtteranceSample>& train_set,
              const std::vector<UtteranceSample>& dev_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) fail(ErrorKind::contract, "fit: empty training set");
  if (dev_set.empty()) fail(ErrorKind::contract, "fit: empty dev set");
  const int max_len = model.cfg.max_len;

  Adam opt(model.reg, cfg);
  FitResult out;

  // Score the starting point so divergence in epoch 1 still leaves a usable
  // checkpoint behind.
  const MetricReport baseline = evaluate(model, dev_set, cfg.batch_size, max_len);
  out.best = snapshot(model, 0, baseline.phn_mse);
  double best_mse = baseline.phn_mse;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    double total_sum = 0.0;
    int steps = 0;
    MetricReport dev;
    try {
      const auto batches =
          make_batches(train_set, cfg.batch_size, max_len, Rng::derive(cfg.seed, "shuffle", epoch));
      Rng drop_rng(Rng::derive(cfg.seed, "dropout", epoch));
      for (const auto& batch : batches) {
        model.zero_grad();
        const ScoreSet scores = model.forward(batch, Mode::train, &drop_rng);
        const LossGraph loss = total_loss(scores, batch);
        backward(loss.node);
        opt.step(lr);
        total_sum += loss.report.total;
        ++steps;
      }
      dev = evaluate(model, dev_set, cfg.batch_size, max_len);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::numeric) throw;
      log_line("epoch " + std::to_string(epoch) + " diverged (" + e.what() +
               "); stopping and restoring the best checkpoint");
      restore(model, out.best);
      return out;
    }
    out.history.push_back({epoch, lr, total_sum / steps, dev});
    if (dev.phn_mse < best_mse) {
      best_mse = dev.phn_mse;
      out.best = snapshot(model, epoch, dev.phn_mse);
    }
    char line[160];
    std::snprintf(line, sizeof(line), "epoch %d  lr %.3g  train %.6f  dev phn mse %.6f%s", epoch,
                  lr, total_sum / steps, dev.phn_mse, best_mse == dev.phn_mse ? "  (best)" : "");
    log_line(line);
  }
  return out;
}

namespace {

std::string num17(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string cell17(const std::optional<double>& v) { return v ? num17(*v) : "nan"; }

}  // namespace

std::string history_csv(const std::vector<HistoryRow>& history) {
  std::ostringstream os;
  os << "epoch,lr,train_total,dev_phn_mse,dev_phn_pcc,"
     << "dev_word_acc_pcc,dev_word_str_pcc,dev_word_tot_pcc,"
     << "dev_utt_acc_pcc,dev_utt_comp_pcc,dev_utt_flu_pcc,dev_utt_pros_pcc,dev_utt_tot_pcc\n";
  for (const auto& row : history) {
    os << row.epoch << "," << num17(row.lr) << "," << num17(row.train_total) << ","
       << num17(row.dev.phn_mse) << "," << cell17(row.dev.phn_pcc);
    for (int k = 0; k < kWordAspects; ++k)
      os << "," << cell17(row.dev.word_pcc[static_cast<std::size_t>(k)]);
    for (int k = 0; k < kUttAspects; ++k)
      os << "," << cell17(row.dev.utt_pcc[static_cast<std::size_t>(k)]);
    os << "\n";
  }
  return os.str();
}

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history) {
  std::ofstream outf(path);
  if (!outf) fail(ErrorKind::io, "history: cannot open " + path + " for writing");
  outf << history_csv(history);
  if (!outf) fail(ErrorKind::io, "history: write to " + path + " failed");
}

}  // namespace hia
