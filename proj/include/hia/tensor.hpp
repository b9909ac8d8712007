// include/hia/tensor.hpp

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

// Minimal reverse-mode autodiff over dense 64-bit float tensors.
//
// A Tensor is both a value and a node in the computation graph: applying an
// op allocates a fresh node whose `parents` point at the inputs and whose
// `backward_fn` scatters this node's gradient into the parents' gradients
// with +=, so fan-out accumulates naturally.  Creation order is recorded in
// `seq`; since inputs always exist before outputs, walking nodes by
// descending `seq` visits the graph in exact reverse topological order.
//
// The model this library trains is small, so every op keeps a plain
// O(n) loop implementation and checks its output for NaN/Inf: a non-finite
// value is an error state, never something to propagate silently.

#ifndef HIA_TENSOR_HPP_
#define HIA_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hia/error.hpp"
#include "hia/rng.hpp"

namespace hia {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

class Tensor : public std::enable_shared_from_this<Tensor> {
 public:
  Shape shape;
  std::vector<double> data;   // row-major
  bool requires_grad = false;
  std::vector<double> grad;   // same size as data once allocated

  // Graph record.
  const char* op = "leaf";
  std::vector<TensorPtr> parents;
  std::function<void()> backward_fn;  // may be empty for leaves
  std::uint64_t seq = 0;

  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const;
  std::size_t size() const { return data.size(); }

  // Scalar extraction; contract error unless the tensor holds one value.
  double value() const;

  void ensure_grad();
  void zero_grad();
};

// ---- construction -----------------------------------------------------

TensorPtr tensor(Shape shape, std::vector<double> data, bool requires_grad = false);
TensorPtr zeros(Shape shape, bool requires_grad = false);
TensorPtr full(Shape shape, double v, bool requires_grad = false);
TensorPtr scalar(double v, bool requires_grad = false);
TensorPtr randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);
TensorPtr rand_uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false);

// ---- elementwise and structural ops -----------------------------------

TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double s);
TensorPtr relu(const TensorPtr& a);
TensorPtr reshape(const TensorPtr& a, Shape shape);
TensorPtr concat(const std::vector<TensorPtr>& parts, int axis);
TensorPtr slice(const TensorPtr& a, int axis, int start, int len);
TensorPtr sum_all(const TensorPtr& a);  // -> shape {1}

// ---- linear algebra ----------------------------------------------------

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);  // [m,k]x[k,n]
TensorPtr bmm(const TensorPtr& a, const TensorPtr& b);     // [B,m,k]x[B,k,n]
TensorPtr transpose_last2(const TensorPtr& a);             // rank 2 or 3

// ---- neural-net primitives ----------------------------------------------

TensorPtr softmax(const TensorPtr& a, int axis);
TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma,
                     const TensorPtr& beta, double eps = 1e-5);
// x: [T,C_in] or [B,T,C_in]; kernels: [k,C_in,C_out] with odd k; bias: [C_out].
// Zero padding keeps the sequence length ("same" convolution).
TensorPtr conv1d_same(const TensorPtr& x, const TensorPtr& kernels,
                      const TensorPtr& bias);
// table: [V,D]; ids are indices into the table; result shape = ids_shape + {D}.
TensorPtr embedding(const TensorPtr& table, const std::vector<int>& ids,
                    const Shape& ids_shape);
// Inverted-scale dropout.  Identity in eval mode or when rate == 0.
TensorPtr dropout(const TensorPtr& x, double rate, Rng& rng, bool train);

// ---- broadcasting helpers ----------------------------------------------

TensorPtr add_rowvec(const TensorPtr& x, const TensorPtr& v);  // rows + [D]
TensorPtr expand_axis0(const TensorPtr& x, int n);             // S -> {n}+S
TensorPtr expand_mid(const TensorPtr& x, int t);               // [B,D] -> [B,t,D]
TensorPtr expand_last(const TensorPtr& x, int d);              // [B,T] -> [B,T,d]

// ---- masking and pooling -------------------------------------------------

// Masks are 0/1 tensors treated as constants: no gradient flows into them.
TensorPtr mask_rows(const TensorPtr& x, const TensorPtr& mask);        // [B,T,*] x [B,T]
TensorPtr masked_mean_pool(const TensorPtr& x, const TensorPtr& mask); // [B,T,D] -> [B,D]
// scores: [B,S,T], mask: [B,T]; adds -1e9 where mask == 0.
TensorPtr additive_key_mask(const TensorPtr& scores, const TensorPtr& mask);

// Word spans inside padded sequences.  Slot (b, w) covers positions
// [start, end] inclusive; end < start marks an absent (padded) word.
struct SegmentSpans {
  int batch = 0;
  int t_max = 0;
  int w_max = 0;
  std::vector<int> start;  // batch * w_max
  std::vector<int> end;    // batch * w_max

  int span_start(int b, int w) const { return start[static_cast<std::size_t>(b) * w_max + w]; }
  int span_end(int b, int w) const { return end[static_cast<std::size_t>(b) * w_max + w]; }
};

TensorPtr segment_mean(const TensorPtr& x, const SegmentSpans& spans);               // [B,T,A] -> [B,W,A]
TensorPtr expand_segments(const TensorPtr& s, const SegmentSpans& spans, int t_max); // [B,W,A] -> [B,T,A]

// Attention over the last two axes: q [B,S,d], k,v [B,T,d].  Composite of
// bmm/softmax, so gradients flow through the pieces.
TensorPtr scaled_dot_attention(const TensorPtr& q, const TensorPtr& k,
                               const TensorPtr& v, const TensorPtr& key_mask);

// ---- reverse pass --------------------------------------------------------

// Seeds d(loss)/d(loss) = 1 and propagates through the graph in reverse
// topological order.  Gradients accumulate; callers zero parameter
// gradients between steps.
void backward(const TensorPtr& loss);

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int worst_index = -1;
};

// Central-difference check of d(f)/d(params).  f must rebuild the loss from
// the current parameter values on every call and be deterministic.
GradCheckResult grad_check(
    const std::function<TensorPtr()>& f,
    const std::vector<std::pair<std::string, TensorPtr>>& params,
    double h = 1e-4);

}  // namespace hia

#endif  // HIA_TENSOR_HPP_
