// src/nn.cpp

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

#include "hia/nn.hpp"

#include <cmath>

#include "hia/error.hpp"

namespace hia {

TensorPtr ParamRegistry::add(const std::string& name, TensorPtr t) {
  if (find(name)) fail(ErrorKind::contract, "ParamRegistry: duplicate parameter " + name);
  params_.emplace_back(name, t);
  return t;
}

TensorPtr ParamRegistry::uniform(const std::string& name, Shape shape, double limit) {
  Rng rng(Rng::derive(seed_, name));
  return add(name, rand_uniform(std::move(shape), rng, -limit, limit, true));
}

TensorPtr ParamRegistry::gaussian(const std::string& name, Shape shape, double stddev) {
  Rng rng(Rng::derive(seed_, name));
  return add(name, randn(std::move(shape), rng, stddev, true));
}

TensorPtr ParamRegistry::constant(const std::string& name, Shape shape, double v) {
  return add(name, full(std::move(shape), v, true));
}

TensorPtr ParamRegistry::find(const std::string& name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return t;
  return nullptr;
}

std::size_t ParamRegistry::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t->size();
  return n;
}

void ParamRegistry::zero_grad() const {
  for (const auto& [name, t] : params_) t->zero_grad();
}

TensorPtr DropCtx::operator()(const TensorPtr& x) const {
  if (!train || rate == 0.0) return x;
  if (!rng) fail(ErrorKind::contract, "DropCtx: training dropout without an rng");
  return dropout(x, rate, *rng, true);
}

Linear::Linear(ParamRegistry& reg, const std::string& name, int in_dim, int out_dim,
               bool with_bias)
    : in(in_dim), out(out_dim) {
  if (in_dim < 1 || out_dim < 1)
    fail(ErrorKind::config, "Linear " + name + ": dimensions must be positive");
  const double limit = std::sqrt(6.0 / (in_dim + out_dim));
  w = reg.uniform(name + ".w", {in_dim, out_dim}, limit);
  if (with_bias) b = reg.constant(name + ".b", {out_dim}, 0.0);
}

TensorPtr Linear::operator()(const TensorPtr& x) const {
  if (x->rank() == 2) {
    const auto y = matmul(x, w);
    return b ? add_rowvec(y, b) : y;
  }
  if (x->rank() == 3) {
    const int b0 = x->dim(0), t = x->dim(1);
    auto y = matmul(reshape(x, {b0 * t, in}), w);
    if (b) y = add_rowvec(y, b);
    return reshape(y, {b0, t, out});
  }
  fail(ErrorKind::dimension, "Linear: expected rank 2 or 3, got " + shape_str(x->shape));
}

Norm::Norm(ParamRegistry& reg, const std::string& name, int dim) {
  gamma = reg.constant(name + ".gamma", {dim}, 1.0);
  beta = reg.constant(name + ".beta", {dim}, 0.0);
}

TensorPtr Norm::operator()(const TensorPtr& x) const { return layer_norm(x, gamma, beta, eps); }

Attention::Attention(ParamRegistry& reg, const std::string& name, int dim_, int n_heads)
    : dim(dim_), heads(n_heads) {
  if (n_heads < 1 || dim_ % n_heads != 0)
    fail(ErrorKind::config, "Attention " + name + ": dim " + std::to_string(dim_) +
                                " not divisible by heads " + std::to_string(n_heads));
  wq = Linear(reg, name + ".wq", dim_, dim_);
  wk = Linear(reg, name + ".wk", dim_, dim_, false);
  wv = Linear(reg, name + ".wv", dim_, dim_);
  wo = Linear(reg, name + ".wo", dim_, dim_);
}

TensorPtr Attention::operator()(const TensorPtr& q_in, const TensorPtr& kv_in,
                                const TensorPtr& key_mask) const {
  const auto q = wq(q_in);
  const auto k = wk(kv_in);
  const auto v = wv(kv_in);
  if (heads == 1) return wo(scaled_dot_attention(q, k, v, key_mask));
  const int dh = dim / heads;
  std::vector<TensorPtr> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const auto qh = slice(q, 2, h * dh, dh);
    const auto kh = slice(k, 2, h * dh, dh);
    const auto vh = slice(v, 2, h * dh, dh);
    outs.push_back(scaled_dot_attention(qh, kh, vh, key_mask));
  }
  return wo(concat(outs, 2));
}

FeedForward::FeedForward(ParamRegistry& reg, const std::string& name, int dim, int hidden) {
  w1 = Linear(reg, name + ".w1", dim, hidden);
  w2 = Linear(reg, name + ".w2", hidden, dim);
}

TensorPtr FeedForward::operator()(const TensorPtr& x) const { return w2(relu(w1(x))); }

EncoderLayer::EncoderLayer(ParamRegistry& reg, const std::string& name, int dim, int n_heads,
                           int ffn_hidden)
    : ln1(reg, name + ".ln1", dim),
      ln2(reg, name + ".ln2", dim),
      attn(reg, name + ".attn", dim, n_heads),
      ffn(reg, name + ".ffn", dim, ffn_hidden) {}

TensorPtr EncoderLayer::operator()(const TensorPtr& x, const TensorPtr& key_mask,
                                   const DropCtx& drop) const {
  const auto n1 = ln1(x);
  auto y = add(x, drop(attn(n1, n1, key_mask)));
  y = add(y, drop(ffn(ln2(y))));
  return y;
}

DecoderLayer::DecoderLayer(ParamRegistry& reg, const std::string& name, int dim, int n_heads,
                           int ffn_hidden)
    : ln1(reg, name + ".ln1", dim),
      ln2(reg, name + ".ln2", dim),
      ln3(reg, name + ".ln3", dim),
      self_attn(reg, name + ".self", dim, n_heads),
      cross_attn(reg, name + ".cross", dim, n_heads),
      ffn(reg, name + ".ffn", dim, ffn_hidden) {}

TensorPtr DecoderLayer::operator()(const TensorPtr& q, const TensorPtr& memory,
                                   const TensorPtr& key_mask, const DropCtx& drop) const {
  const auto n1 = ln1(q);
  auto y = add(q, drop(self_attn(n1, n1, nullptr)));
  y = add(y, drop(cross_attn(ln2(y), memory, key_mask)));
  y = add(y, drop(ffn(ln3(y))));
  return y;
}

ConvStack::ConvStack(ParamRegistry& reg, const std::string& name, int layers, int kernel,
                     int dim) {
  if (layers < 0) fail(ErrorKind::config, "ConvStack " + name + ": negative layer count");
  const double limit = std::sqrt(6.0 / (static_cast<double>(kernel) * dim + dim));
  for (int l = 0; l < layers; ++l) {
    const std::string base = name + "." + std::to_string(l);
    kernels.push_back(reg.uniform(base + ".w", {kernel, dim, dim}, limit));
    biases.push_back(reg.constant(base + ".b", {dim}, 0.0));
  }
}

TensorPtr ConvStack::operator()(const TensorPtr& x) const {
  auto y = x;
  for (std::size_t l = 0; l < kernels.size(); ++l) y = conv1d_same(y, kernels[l], biases[l]);
  return y;
}

ScoreHead::ScoreHead(ParamRegistry& reg, const std::string& name, int dim, int n_out)
    : norm(reg, name + ".norm", dim), lin(reg, name + ".lin", dim, n_out) {}

TensorPtr ScoreHead::operator()(const TensorPtr& x) const { return lin(norm(x)); }

}  // namespace hia
