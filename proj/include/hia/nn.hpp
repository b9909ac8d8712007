// include/hia/nn.hpp

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

// Small layer library on top of the tensor core: a name-keyed parameter
// registry plus linear, norm, attention, feed-forward, conv, and head
// blocks.  Every parameter is registered under a dotted path name, so
// checkpoints are plain name -> data maps.

#ifndef HIA_NN_HPP_
#define HIA_NN_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hia/rng.hpp"
#include "hia/tensor.hpp"

namespace hia {

// Owns all trainable tensors of a model.  Initialization draws from an RNG
// stream derived from (seed, parameter name), so adding or reordering
// other parameters never changes a parameter's initial values.
class ParamRegistry {
 public:
  explicit ParamRegistry(std::uint64_t seed) : seed_(seed) {}

  // Uniform on [-limit, limit].
  TensorPtr uniform(const std::string& name, Shape shape, double limit);
  TensorPtr gaussian(const std::string& name, Shape shape, double stddev);
  TensorPtr constant(const std::string& name, Shape shape, double v);

  const std::vector<std::pair<std::string, TensorPtr>>& params() const { return params_; }
  TensorPtr find(const std::string& name) const;  // nullptr when absent
  std::size_t scalar_count() const;
  void zero_grad() const;

 private:
  TensorPtr add(const std::string& name, TensorPtr t);

  std::uint64_t seed_ = 0;
  std::vector<std::pair<std::string, TensorPtr>> params_;
};

// Dropout switch threaded through forward passes; inactive in eval mode.
struct DropCtx {
  double rate = 0.0;
  bool train = false;
  Rng* rng = nullptr;

  TensorPtr operator()(const TensorPtr& x) const;
};

struct Linear {
  int in = 0, out = 0;
  TensorPtr w;  // [in, out]
  TensorPtr b;  // [out], absent when built without a bias

  Linear() = default;
  Linear(ParamRegistry& reg, const std::string& name, int in_dim, int out_dim,
         bool with_bias = true);
  TensorPtr operator()(const TensorPtr& x) const;  // [..., in] -> [..., out]
};

struct Norm {
  TensorPtr gamma, beta;
  double eps = 1e-5;

  Norm() = default;
  Norm(ParamRegistry& reg, const std::string& name, int dim);
  TensorPtr operator()(const TensorPtr& x) const;
};

// Multi-head scaled dot-product attention; heads are slices of the model
// dimension.  key_mask may be null (no masking).  The key projection has
// no bias: it would add the same constant to every score of a query row,
// which softmax subtracts out again, so the parameter could never affect
// the output.
struct Attention {
  int dim = 0, heads = 0;
  Linear wq, wk, wv, wo;

  Attention() = default;
  Attention(ParamRegistry& reg, const std::string& name, int dim, int n_heads);
  TensorPtr operator()(const TensorPtr& q_in, const TensorPtr& kv_in,
                       const TensorPtr& key_mask) const;
};

struct FeedForward {
  Linear w1, w2;  // dim -> hidden -> dim, relu between

  FeedForward() = default;
  FeedForward(ParamRegistry& reg, const std::string& name, int dim, int hidden);
  TensorPtr operator()(const TensorPtr& x) const;
};

// Pre-norm residual block: x + drop(attn(ln1(x))), then x + drop(ffn(ln2(x))).
struct EncoderLayer {
  Norm ln1, ln2;
  Attention attn;
  FeedForward ffn;

  EncoderLayer() = default;
  EncoderLayer(ParamRegistry& reg, const std::string& name, int dim, int n_heads, int ffn_hidden);
  TensorPtr operator()(const TensorPtr& x, const TensorPtr& key_mask, const DropCtx& drop) const;
};

// Pre-norm decoder block: self-attention over the query slots, cross
// attention into the memory sequence, then feed-forward.
struct DecoderLayer {
  Norm ln1, ln2, ln3;
  Attention self_attn, cross_attn;
  FeedForward ffn;

  DecoderLayer() = default;
  DecoderLayer(ParamRegistry& reg, const std::string& name, int dim, int n_heads, int ffn_hidden);
  TensorPtr operator()(const TensorPtr& q, const TensorPtr& memory, const TensorPtr& key_mask,
                       const DropCtx& drop) const;
};

// Stack of same-padding convolutions over the middle axis; identity when
// layers == 0.
struct ConvStack {
  std::vector<TensorPtr> kernels;  // each [k, dim, dim]
  std::vector<TensorPtr> biases;   // each [dim]

  ConvStack() = default;
  ConvStack(ParamRegistry& reg, const std::string& name, int layers, int kernel, int dim);
  TensorPtr operator()(const TensorPtr& x) const;
};

// Regression head: layer norm, then a dim -> n_out projection.
struct ScoreHead {
  Norm norm;
  Linear lin;

  ScoreHead() = default;
  ScoreHead(ParamRegistry& reg, const std::string& name, int dim, int n_out);
  TensorPtr operator()(const TensorPtr& x) const;  // [N, dim] -> [N, n_out]
};

}  // namespace hia

#endif  // HIA_NN_HPP_
