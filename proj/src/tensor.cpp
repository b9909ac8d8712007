// src/tensor.cpp

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

#include "hia/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

namespace hia {

namespace {

std::atomic<std::uint64_t> g_seq{0};

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      fail(ErrorKind::numeric, std::string(op) + ": non-finite value produced");
    }
  }
}

int norm_axis(int axis, int rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    fail(ErrorKind::dimension, std::string(op) + ": axis out of range");
  }
  return axis;
}

TensorPtr make_node(Shape shape, std::vector<double> data, const char* op,
                    std::vector<TensorPtr> parents) {
  check_finite(data, op);
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data = std::move(data);
  if (numel(t->shape) != t->data.size()) {
    fail(ErrorKind::contract, std::string(op) + ": shape does not match data size");
  }
  t->op = op;
  t->parents = std::move(parents);
  for (const auto& p : t->parents) {
    if (p && p->requires_grad) t->requires_grad = true;
  }
  if (t->requires_grad) t->ensure_grad();
  t->seq = ++g_seq;
  return t;
}

void require_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
  if (a->shape != b->shape) {
    fail(ErrorKind::dimension, std::string(op) + ": shape mismatch " +
                                   shape_str(a->shape) + " vs " + shape_str(b->shape));
  }
}

// Interprets a tensor of rank 2 as one matrix and rank 3 as a stack of
// matrices; returns (batch, rows, cols).
void as_matrices(const TensorPtr& t, const char* op, int* batch, int* rows, int* cols) {
  if (t->rank() == 2) {
    *batch = 1;
    *rows = t->shape[0];
    *cols = t->shape[1];
  } else if (t->rank() == 3) {
    *batch = t->shape[0];
    *rows = t->shape[1];
    *cols = t->shape[2];
  } else {
    fail(ErrorKind::dimension, std::string(op) + ": expected rank 2 or 3, got " +
                                   shape_str(t->shape));
  }
}

// c[m,n] += a[m,k] * b[k,n]
void gemm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// da[m,k] += dc[m,n] * b[k,n]^T
void gemm_acc_bt(const double* dc, const double* b, double* da, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* dcrow = dc + static_cast<std::size_t>(i) * n;
    double* darow = da + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double* brow = b + static_cast<std::size_t>(kk) * n;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
      darow[kk] += acc;
    }
  }
}

// db[k,n] += a[m,k]^T * dc[m,n]
void gemm_acc_at(const double* a, const double* dc, double* db, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    const double* dcrow = dc + static_cast<std::size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      double av = arow[kk];
      if (av == 0.0) continue;
      double* dbrow = db + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
    }
  }
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) fail(ErrorKind::dimension, "negative dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

int Tensor::dim(int i) const {
  if (i < 0 || i >= rank()) fail(ErrorKind::dimension, "dim index out of range");
  return shape[i];
}

double Tensor::value() const {
  if (data.size() != 1) {
    fail(ErrorKind::contract, "value(): tensor is not scalar, shape " + shape_str(shape));
  }
  return data[0];
}

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
}

// ---- construction -----------------------------------------------------

TensorPtr tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (numel(shape) != data.size()) {
    fail(ErrorKind::dimension, "tensor: shape " + shape_str(shape) + " wants " +
                                   std::to_string(numel(shape)) + " values, got " +
                                   std::to_string(data.size()));
  }
  check_finite(data, "tensor");
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->data = std::move(data);
  t->requires_grad = requires_grad;
  if (requires_grad) t->ensure_grad();
  t->seq = ++g_seq;
  return t;
}

TensorPtr zeros(Shape shape, bool requires_grad) {
  std::vector<double> d(numel(shape), 0.0);
  return tensor(std::move(shape), std::move(d), requires_grad);
}

TensorPtr full(Shape shape, double v, bool requires_grad) {
  std::vector<double> d(numel(shape), v);
  return tensor(std::move(shape), std::move(d), requires_grad);
}

TensorPtr scalar(double v, bool requires_grad) {
  return tensor({1}, {v}, requires_grad);
}

TensorPtr randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  std::vector<double> d(numel(shape));
  for (double& x : d) x = rng.normal(0.0, stddev);
  return tensor(std::move(shape), std::move(d), requires_grad);
}

TensorPtr rand_uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
  std::vector<double> d(numel(shape));
  for (double& x : d) x = rng.uniform(lo, hi);
  return tensor(std::move(shape), std::move(d), requires_grad);
}

// ---- elementwise -------------------------------------------------------

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + b->data[i];
  auto t = make_node(a->shape, std::move(out), "add", {a, b});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr pa = a, pb = b;
    t->backward_fn = [self, pa, pb]() {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i) pa->grad[i] += self->grad[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i) pb->grad[i] += self->grad[i];
      }
    };
  }
  return t;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
  return add(a, scale(b, -1.0));
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * b->data[i];
  auto t = make_node(a->shape, std::move(out), "mul", {a, b});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr pa = a, pb = b;
    t->backward_fn = [self, pa, pb]() {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i)
          pa->grad[i] += self->grad[i] * pb->data[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i)
          pb->grad[i] += self->grad[i] * pa->data[i];
      }
    };
  }
  return t;
}

TensorPtr scale(const TensorPtr& a, double s) {
  if (!std::isfinite(s)) fail(ErrorKind::numeric, "scale: non-finite scalar");
  std::vector<double> out(a->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * s;
  auto t = make_node(a->shape, std::move(out), "scale", {a});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr pa = a;
    t->backward_fn = [self, pa, s]() {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i) pa->grad[i] += self->grad[i] * s;
    };
  }
  return t;
}

TensorPtr relu(const TensorPtr& a) {
  std::vector<double> out(a->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] > 0.0 ? a->data[i] : 0.0;
  auto t = make_node(a->shape, std::move(out), "relu", {a});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr pa = a;
    t->backward_fn = [self, pa]() {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        if (pa->data[i] > 0.0) pa->grad[i] += self->grad[i];
    };
  }
  return t;
}

TensorPtr reshape(const TensorPtr& a, Shape shape) {
  if (numel(shape) != a->size()) {
    fail(ErrorKind::dimension, "reshape: cannot view " + shape_str(a->shape) + " as " +
                                   shape_str(shape));
  }
  auto t = make_node(std::move(shape), a->data, "reshape", {a});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr pa = a;
    t->backward_fn = [self, pa]() {
      pa->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i) pa->grad[i] += self->grad[i];
    };
  }
  return t;
}

TensorPtr concat(const std::vector<TensorPtr>& parts, int axis) {
  if (parts.empty()) fail(ErrorKind::contract, "concat: no inputs");
  int rank = parts[0]->rank();
  axis = norm_axis(axis, rank, "concat");
  Shape out_shape = parts[0]->shape;
  int total = 0;
  for (const auto& p : parts) {
    if (p->rank() != rank) fail(ErrorKind::dimension, "concat: rank mismatch");
    for (int d = 0; d < rank; ++d) {
      if (d != axis && p->shape[d] != out_shape[d]) {
        fail(ErrorKind::dimension, "concat: shape mismatch " + shape_str(p->shape) +
                                       " vs " + shape_str(out_shape));
      }
    }
    total += p->shape[axis];
  }
  out_shape[axis] = total;

  std::size_t inner = 1;
  for (int d = axis + 1; d < rank; ++d) inner *= static_cast<std::size_t>(out_shape[d]);
  std::size_t outer = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(out_shape[d]);

  std::vector<double> out(numel(out_shape));
  std::size_t offset = 0;  // in units of rows along the axis
  for (const auto& p : parts) {
    std::size_t n_axis = static_cast<std::size_t>(p->shape[axis]);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* src = p->data.data() + o * n_axis * inner;
      double* dst = out.data() + (o * static_cast<std::size_t>(total) + offset) * inner;
      std::memcpy(dst, src, n_axis * inner * sizeof(double));
    }
    offset += n_axis;
  }

  auto t = make_node(std::move(out_shape), std::move(out),
                     "concat", std::vector<TensorPtr>(parts.begin(), parts.end()));
  if (t->requires_grad) {
    Tensor* self = t.get();
    std::vector<TensorPtr> ps = parts;
    t->backward_fn = [self, ps, axis, outer, inner, total]() {
      std::size_t offset = 0;
      for (const auto& p : ps) {
        std::size_t n_axis = static_cast<std::size_t>(p->shape[axis]);
        if (p->requires_grad) {
          p->ensure_grad();
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src =
                self->grad.data() + (o * static_cast<std::size_t>(total) + offset) * inner;
            double* dst = p->grad.data() + o * n_axis * inner;
            for (std::size_t i = 0; i < n_axis * inner; ++i) dst[i] += src[i];
          }
        }
        offset += n_axis;
      }
    };
  }
  return t;
}

TensorPtr slice(const TensorPtr& a, int axis, int start, int len) {
  int rank = a->rank();
  axis = norm_axis(axis, rank, "slice");
  if (start < 0 || len < 0 || start + len > a->shape[axis]) {
    fail(ErrorKind::dimension, "slice: window [" + std::to_string(start) + "," +
                                   std::to_string(start + len) + ") outside axis of size " +
                                   std::to_string(a->shape[axis]));
  }
  Shape out_shape = a->shape;
  out_shape[axis] = len;

  std::size_t inner = 1;
  for (int d = axis + 1; d < rank; ++d) inner *= static_cast<std::size_t>(a->shape[d]);
  std::size_t outer = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(a->shape[d]);
  std::size_t n_axis = static_cast<std::size_t>(a->shape[axis]);

  std::vector<double> out(numel(out_shape));
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = a->data.data() + (o * n_axis + static_cast<std::size_t>(start)) * inner;
    double* dst = out.data() + o * static_cast<std::size_t>(len) * inner;
    std::memcpy(dst, src, static_cast<std::size_t>(len) * inner * sizeof(double));
  }

  auto t = make_node(std::move(out_shape), std::move(out), "slice", {a});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr pa = a;
    t->backward_fn = [self, pa, start, len, outer, inner, n_axis]() {
      pa->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = self->grad.data() + o * static_cast<std::size_t>(len) * inner;
        double* dst =
            pa->grad.data() + (o * n_axis + static_cast<std::size_t>(start)) * inner;
        for (std::size_t i = 0; i < static_cast<std::size_t>(len) * inner; ++i)
          dst[i] += src[i];
      }
    };
  }
  return t;
}

TensorPtr sum_all(const TensorPtr& a) {
  double s = 0.0;
  for (double x : a->data) s += x;
  auto t = make_node({1}, {s}, "sum_all", {a});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr pa = a;
    t->backward_fn = [self, pa]() {
      pa->ensure_grad();
      double g = self->grad[0];
      for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += g;
    };
  }
  return t;
}

// ---- linear algebra ----------------------------------------------------

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->rank() != 2 || b->rank() != 2) {
    fail(ErrorKind::dimension,
         "matmul: expected rank-2 inputs, got " + shape_str(a->shape) + " and " +
             shape_str(b->shape));
  }
  int m = a->shape[0], k = a->shape[1], k2 = b->shape[0], n = b->shape[1];
  if (k != k2) {
    fail(ErrorKind::dimension, "matmul: inner dimensions disagree, " + shape_str(a->shape) +
                                   " x " + shape_str(b->shape));
  }
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  gemm_acc(a->data.data(), b->data.data(), out.data(), m, k, n);
  auto t = make_node({m, n}, std::move(out), "matmul", {a, b});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr pa = a, pb = b;
    t->backward_fn = [self, pa, pb, m, k, n]() {
      if (pa->requires_grad) {
        pa->ensure_grad();
        gemm_acc_bt(self->grad.data(), pb->data.data(), pa->grad.data(), m, k, n);
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        gemm_acc_at(pa->data.data(), self->grad.data(), pb->grad.data(), m, k, n);
      }
    };
  }
  return t;
}

TensorPtr bmm(const TensorPtr& a, const TensorPtr& b) {
  if (a->rank() != 3 || b->rank() != 3) {
    fail(ErrorKind::dimension, "bmm: expected rank-3 inputs, got " + shape_str(a->shape) +
                                   " and " + shape_str(b->shape));
  }
  int bs = a->shape[0], m = a->shape[1], k = a->shape[2];
  if (b->shape[0] != bs || b->shape[1] != k) {
    fail(ErrorKind::dimension, "bmm: shape mismatch " + shape_str(a->shape) + " x " +
                                   shape_str(b->shape));
  }
  int n = b->shape[2];
  std::size_t a_stride = static_cast<std::size_t>(m) * k;
  std::size_t b_stride = static_cast<std::size_t>(k) * n;
  std::size_t c_stride = static_cast<std::size_t>(m) * n;
  std::vector<double> out(static_cast<std::size_t>(bs) * c_stride, 0.0);
  for (int i = 0; i < bs; ++i) {
    gemm_acc(a->data.data() + i * a_stride, b->data.data() + i * b_stride,
             out.data() + i * c_stride, m, k, n);
  }
  auto t = make_node({bs, m, n}, std::move(out), "bmm", {a, b});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr pa = a, pb = b;
    t->backward_fn = [self, pa, pb, bs, m, k, n, a_stride, b_stride, c_stride]() {
      for (int i = 0; i < bs; ++i) {
        const double* dc = self->grad.data() + i * c_stride;
        if (pa->requires_grad) {
          pa->ensure_grad();
          gemm_acc_bt(dc, pb->data.data() + i * b_stride, pa->grad.data() + i * a_stride,
                      m, k, n);
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          gemm_acc_at(pa->data.data() + i * a_stride, dc, pb->grad.data() + i * b_stride,
                      m, k, n);
        }
      }
    };
  }
  return t;
}

TensorPtr transpose_last2(const TensorPtr& a) {
  int bs, m, n;
  as_matrices(a, "transpose_last2", &bs, &m, &n);
  Shape out_shape = a->shape;
  out_shape[a->rank() - 2] = n;
  out_shape[a->rank() - 1] = m;
  std::size_t stride = static_cast<std::size_t>(m) * n;
  std::vector<double> out(a->size());
  for (int b = 0; b < bs; ++b) {
    const double* src = a->data.data() + b * stride;
    double* dst = out.data() + b * stride;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        dst[static_cast<std::size_t>(j) * m + i] = src[static_cast<std::size_t>(i) * n + j];
  }
  auto t = make_node(std::move(out_shape), std::move(out), "transpose_last2", {a});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr pa = a;
    t->backward_fn = [self, pa, bs, m, n, stride]() {
      pa->ensure_grad();
      for (int b = 0; b < bs; ++b) {
        const double* dg = self->grad.data() + b * stride;  // [n,m]
        double* da = pa->grad.data() + b * stride;          // [m,n]
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < m; ++i)
            da[static_cast<std::size_t>(i) * n + j] += dg[static_cast<std::size_t>(j) * m + i];
      }
    };
  }
  return t;
}

// ---- neural-net primitives ----------------------------------------------

TensorPtr softmax(const TensorPtr& a, int axis) {
  int rank = a->rank();
  axis = norm_axis(axis, rank, "softmax");
  std::size_t inner = 1;
  for (int d = axis + 1; d < rank; ++d) inner *= static_cast<std::size_t>(a->shape[d]);
  std::size_t outer = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(a->shape[d]);
  std::size_t n = static_cast<std::size_t>(a->shape[axis]);
  if (n == 0) fail(ErrorKind::dimension, "softmax: empty axis");

  std::vector<double> out(a->size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      std::size_t base = o * n * inner + in;
      // Subtract the running max so exp never overflows.
      double mx = a->data[base];
      for (std::size_t i = 1; i < n; ++i)
        mx = std::max(mx, a->data[base + i * inner]);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double e = std::exp(a->data[base + i * inner] - mx);
        out[base + i * inner] = e;
        sum += e;
      }
      for (std::size_t i = 0; i < n; ++i) out[base + i * inner] /= sum;
    }
  }

  auto t = make_node(a->shape, std::move(out), "softmax", {a});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr pa = a;
    t->backward_fn = [self, pa, outer, inner, n]() {
      pa->ensure_grad();
      // dx_i = y_i * (dy_i - sum_j dy_j y_j)
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          std::size_t base = o * n * inner + in;
          double dot = 0.0;
          for (std::size_t i = 0; i < n; ++i)
            dot += self->grad[base + i * inner] * self->data[base + i * inner];
          for (std::size_t i = 0; i < n; ++i) {
            std::size_t idx = base + i * inner;
            pa->grad[idx] += self->data[idx] * (self->grad[idx] - dot);
          }
        }
      }
    };
  }
  return t;
}

TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                     double eps) {
  if (x->rank() < 1) fail(ErrorKind::dimension, "layer_norm: rank-0 input");
  int d = x->shape.back();
  if (gamma->shape != Shape{d} || beta->shape != Shape{d}) {
    fail(ErrorKind::dimension, "layer_norm: gamma/beta must be [" + std::to_string(d) + "]");
  }
  if (eps < 0.0) fail(ErrorKind::config, "layer_norm: negative eps");
  std::size_t rows = x->size() / static_cast<std::size_t>(d);

  std::vector<double> out(x->size());
  std::vector<double> inv_std(rows), mean(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x->data.data() + r * d;
    double mu = 0.0;
    for (int i = 0; i < d; ++i) mu += xr[i];
    mu /= d;
    double var = 0.0;  // population variance (denominator d)
    for (int i = 0; i < d; ++i) {
      double c = xr[i] - mu;
      var += c * c;
    }
    var /= d;
    double is = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    inv_std[r] = is;
    double* orow = out.data() + r * d;
    for (int i = 0; i < d; ++i)
      orow[i] = gamma->data[i] * ((xr[i] - mu) * is) + beta->data[i];
  }

  auto t = make_node(x->shape, std::move(out), "layer_norm", {x, gamma, beta});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr px = x, pg = gamma, pb = beta;
    auto mu = std::make_shared<std::vector<double>>(std::move(mean));
    auto is = std::make_shared<std::vector<double>>(std::move(inv_std));
    t->backward_fn = [self, px, pg, pb, mu, is, d, rows]() {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = px->data.data() + r * d;
        const double* dy = self->grad.data() + r * d;
        double m = (*mu)[r], s = (*is)[r];
        if (pg->requires_grad || pb->requires_grad) {
          if (pg->requires_grad) pg->ensure_grad();
          if (pb->requires_grad) pb->ensure_grad();
          for (int i = 0; i < d; ++i) {
            double xhat = (xr[i] - m) * s;
            if (pg->requires_grad) pg->grad[i] += dy[i] * xhat;
            if (pb->requires_grad) pb->grad[i] += dy[i];
          }
        }
        if (px->requires_grad) {
          px->ensure_grad();
          double mean_g = 0.0, mean_gx = 0.0;
          for (int i = 0; i < d; ++i) {
            double g = dy[i] * pg->data[i];
            double xhat = (xr[i] - m) * s;
            mean_g += g;
            mean_gx += g * xhat;
          }
          mean_g /= d;
          mean_gx /= d;
          double* dx = px->grad.data() + r * d;
          for (int i = 0; i < d; ++i) {
            double g = dy[i] * pg->data[i];
            double xhat = (xr[i] - m) * s;
            dx[i] += s * (g - mean_g - xhat * mean_gx);
          }
        }
      }
    };
  }
  return t;
}

TensorPtr conv1d_same(const TensorPtr& x, const TensorPtr& kernels, const TensorPtr& bias) {
  bool batched = x->rank() == 3;
  if (!batched && x->rank() != 2) {
    fail(ErrorKind::dimension, "conv1d_same: input must be [T,C] or [B,T,C], got " +
                                   shape_str(x->shape));
  }
  if (kernels->rank() != 3) {
    fail(ErrorKind::dimension, "conv1d_same: kernels must be [k,C_in,C_out]");
  }
  int bs = batched ? x->shape[0] : 1;
  int tlen = batched ? x->shape[1] : x->shape[0];
  int cin = batched ? x->shape[2] : x->shape[1];
  int k = kernels->shape[0];
  int cout = kernels->shape[2];
  if (kernels->shape[1] != cin) {
    fail(ErrorKind::dimension, "conv1d_same: kernel C_in " + std::to_string(kernels->shape[1]) +
                                   " does not match input channels " + std::to_string(cin));
  }
  if (k % 2 == 0) fail(ErrorKind::config, "conv1d_same: kernel width must be odd");
  if (bias->shape != Shape{cout}) {
    fail(ErrorKind::dimension, "conv1d_same: bias must be [" + std::to_string(cout) + "]");
  }
  int r = k / 2;

  Shape out_shape = batched ? Shape{bs, tlen, cout} : Shape{tlen, cout};
  std::vector<double> out(numel(out_shape));
  std::size_t x_bstride = static_cast<std::size_t>(tlen) * cin;
  std::size_t o_bstride = static_cast<std::size_t>(tlen) * cout;
  // out[t,co] = bias[co] + sum_{dt,ci} x[t+dt-r, ci] * w[dt, ci, co]
  for (int b = 0; b < bs; ++b) {
    const double* xb = x->data.data() + b * x_bstride;
    double* ob = out.data() + b * o_bstride;
    for (int t = 0; t < tlen; ++t) {
      double* orow = ob + static_cast<std::size_t>(t) * cout;
      for (int co = 0; co < cout; ++co) orow[co] = bias->data[co];
      for (int dt = 0; dt < k; ++dt) {
        int src = t + dt - r;
        if (src < 0 || src >= tlen) continue;  // zero padding
        const double* xrow = xb + static_cast<std::size_t>(src) * cin;
        const double* wslab = kernels->data.data() + static_cast<std::size_t>(dt) * cin * cout;
        for (int ci = 0; ci < cin; ++ci) {
          double xv = xrow[ci];
          if (xv == 0.0) continue;
          const double* wrow = wslab + static_cast<std::size_t>(ci) * cout;
          for (int co = 0; co < cout; ++co) orow[co] += xv * wrow[co];
        }
      }
    }
  }

  auto t = make_node(std::move(out_shape), std::move(out), "conv1d_same", {x, kernels, bias});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr px = x, pw = kernels, pb = bias;
    t->backward_fn = [self, px, pw, pb, bs, tlen, cin, cout, k, r, x_bstride, o_bstride]() {
      if (pb->requires_grad) pb->ensure_grad();
      if (pw->requires_grad) pw->ensure_grad();
      if (px->requires_grad) px->ensure_grad();
      for (int b = 0; b < bs; ++b) {
        const double* xb = px->data.data() + b * x_bstride;
        const double* gb = self->grad.data() + b * o_bstride;
        double* dxb = px->requires_grad ? px->grad.data() + b * x_bstride : nullptr;
        for (int t2 = 0; t2 < tlen; ++t2) {
          const double* grow = gb + static_cast<std::size_t>(t2) * cout;
          if (pb->requires_grad)
            for (int co = 0; co < cout; ++co) pb->grad[co] += grow[co];
          for (int dt = 0; dt < k; ++dt) {
            int src = t2 + dt - r;
            if (src < 0 || src >= tlen) continue;
            const double* xrow = xb + static_cast<std::size_t>(src) * cin;
            const double* wslab =
                pw->data.data() + static_cast<std::size_t>(dt) * cin * cout;
            double* dwslab =
                pw->requires_grad ? pw->grad.data() + static_cast<std::size_t>(dt) * cin * cout
                                  : nullptr;
            for (int ci = 0; ci < cin; ++ci) {
              double acc = 0.0;
              const double* wrow = wslab + static_cast<std::size_t>(ci) * cout;
              double* dwrow = dwslab ? dwslab + static_cast<std::size_t>(ci) * cout : nullptr;
              double xv = xrow[ci];
              for (int co = 0; co < cout; ++co) {
                double g = grow[co];
                if (dwrow) dwrow[co] += xv * g;
                acc += g * wrow[co];
              }
              if (dxb) dxb[static_cast<std::size_t>(src) * cin + ci] += acc;
            }
          }
        }
      }
    };
  }
  return t;
}

TensorPtr embedding(const TensorPtr& table, const std::vector<int>& ids,
                    const Shape& ids_shape) {
  if (table->rank() != 2) fail(ErrorKind::dimension, "embedding: table must be [V,D]");
  if (numel(ids_shape) != ids.size()) {
    fail(ErrorKind::dimension, "embedding: ids_shape does not match id count");
  }
  int v = table->shape[0], d = table->shape[1];
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= v) {
      fail(ErrorKind::lookup, "embedding: id " + std::to_string(ids[i]) + " at position " +
                                  std::to_string(i) + " outside table of size " +
                                  std::to_string(v));
    }
  }
  Shape out_shape = ids_shape;
  out_shape.push_back(d);
  std::vector<double> out(ids.size() * static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::memcpy(out.data() + i * d, table->data.data() + static_cast<std::size_t>(ids[i]) * d,
                static_cast<std::size_t>(d) * sizeof(double));
  }
  auto t = make_node(std::move(out_shape), std::move(out), "embedding", {table});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr pt = table;
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    t->backward_fn = [self, pt, ids_copy, d]() {
      pt->ensure_grad();
      for (std::size_t i = 0; i < ids_copy->size(); ++i) {
        double* dst = pt->grad.data() + static_cast<std::size_t>((*ids_copy)[i]) * d;
        const double* src = self->grad.data() + i * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    };
  }
  return t;
}

TensorPtr dropout(const TensorPtr& x, double rate, Rng& rng, bool train) {
  if (rate < 0.0 || rate >= 1.0) fail(ErrorKind::config, "dropout: rate must be in [0,1)");
  if (!train || rate == 0.0) return x;  // identity, same node
  double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<double>>(x->size());
  std::vector<double> out(x->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double m = rng.uniform() >= rate ? 1.0 / keep : 0.0;
    (*mask)[i] = m;
    out[i] = x->data[i] * m;
  }
  auto t = make_node(x->shape, std::move(out), "dropout", {x});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr px = x;
    t->backward_fn = [self, px, mask]() {
      px->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        px->grad[i] += self->grad[i] * (*mask)[i];
    };
  }
  return t;
}

// ---- broadcasting helpers ----------------------------------------------

TensorPtr add_rowvec(const TensorPtr& x, const TensorPtr& v) {
  if (v->rank() != 1) fail(ErrorKind::dimension, "add_rowvec: v must be rank 1");
  int d = v->shape[0];
  if (x->rank() < 1 || x->shape.back() != d) {
    fail(ErrorKind::dimension, "add_rowvec: last dim of " + shape_str(x->shape) +
                                   " must be " + std::to_string(d));
  }
  std::size_t rows = x->size() / static_cast<std::size_t>(d);
  std::vector<double> out(x->size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x->data.data() + r * d;
    double* orow = out.data() + r * d;
    for (int i = 0; i < d; ++i) orow[i] = xr[i] + v->data[i];
  }
  auto t = make_node(x->shape, std::move(out), "add_rowvec", {x, v});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr px = x, pv = v;
    t->backward_fn = [self, px, pv, rows, d]() {
      if (px->requires_grad) {
        px->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i) px->grad[i] += self->grad[i];
      }
      if (pv->requires_grad) {
        pv->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = self->grad.data() + r * d;
          for (int i = 0; i < d; ++i) pv->grad[i] += g[i];
        }
      }
    };
  }
  return t;
}

TensorPtr expand_axis0(const TensorPtr& x, int n) {
  if (n <= 0) fail(ErrorKind::dimension, "expand_axis0: n must be positive");
  Shape out_shape;
  out_shape.push_back(n);
  for (int d : x->shape) out_shape.push_back(d);
  std::vector<double> out(static_cast<std::size_t>(n) * x->size());
  for (int i = 0; i < n; ++i)
    std::memcpy(out.data() + static_cast<std::size_t>(i) * x->size(), x->data.data(),
                x->size() * sizeof(double));
  auto t = make_node(std::move(out_shape), std::move(out), "expand_axis0", {x});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr px = x;
    t->backward_fn = [self, px, n]() {
      px->ensure_grad();
      std::size_t sz = px->size();
      for (int i = 0; i < n; ++i) {
        const double* g = self->grad.data() + static_cast<std::size_t>(i) * sz;
        for (std::size_t j = 0; j < sz; ++j) px->grad[j] += g[j];
      }
    };
  }
  return t;
}

TensorPtr expand_mid(const TensorPtr& x, int t_len) {
  if (x->rank() != 2) fail(ErrorKind::dimension, "expand_mid: input must be [B,D]");
  if (t_len <= 0) fail(ErrorKind::dimension, "expand_mid: length must be positive");
  int bs = x->shape[0], d = x->shape[1];
  std::vector<double> out(static_cast<std::size_t>(bs) * t_len * d);
  for (int b = 0; b < bs; ++b) {
    const double* src = x->data.data() + static_cast<std::size_t>(b) * d;
    for (int t2 = 0; t2 < t_len; ++t2) {
      std::memcpy(out.data() + (static_cast<std::size_t>(b) * t_len + t2) * d, src,
                  static_cast<std::size_t>(d) * sizeof(double));
    }
  }
  auto t = make_node({bs, t_len, d}, std::move(out), "expand_mid", {x});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr px = x;
    t->backward_fn = [self, px, bs, t_len, d]() {
      px->ensure_grad();
      for (int b = 0; b < bs; ++b) {
        double* dst = px->grad.data() + static_cast<std::size_t>(b) * d;
        for (int t2 = 0; t2 < t_len; ++t2) {
          const double* g = self->grad.data() + (static_cast<std::size_t>(b) * t_len + t2) * d;
          for (int i = 0; i < d; ++i) dst[i] += g[i];
        }
      }
    };
  }
  return t;
}

TensorPtr expand_last(const TensorPtr& x, int d) {
  if (x->rank() != 2) fail(ErrorKind::dimension, "expand_last: input must be [B,T]");
  if (d <= 0) fail(ErrorKind::dimension, "expand_last: width must be positive");
  int bs = x->shape[0], tl = x->shape[1];
  std::vector<double> out(static_cast<std::size_t>(bs) * tl * d);
  for (std::size_t i = 0; i < x->size(); ++i) {
    double v = x->data[i];
    double* dst = out.data() + i * d;
    for (int j = 0; j < d; ++j) dst[j] = v;
  }
  auto t = make_node({bs, tl, d}, std::move(out), "expand_last", {x});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr px = x;
    t->backward_fn = [self, px, d]() {
      px->ensure_grad();
      for (std::size_t i = 0; i < px->grad.size(); ++i) {
        const double* g = self->grad.data() + i * d;
        double acc = 0.0;
        for (int j = 0; j < d; ++j) acc += g[j];
        px->grad[i] += acc;
      }
    };
  }
  return t;
}

// ---- masking and pooling -------------------------------------------------

namespace {
void require_mask(const TensorPtr& x, const TensorPtr& mask, const char* op) {
  if (mask->rank() != 2 || x->rank() < 2 || x->shape[0] != mask->shape[0] ||
      x->shape[1] != mask->shape[1]) {
    fail(ErrorKind::dimension, std::string(op) + ": mask " + shape_str(mask->shape) +
                                   " does not cover " + shape_str(x->shape));
  }
}
}  // namespace

TensorPtr mask_rows(const TensorPtr& x, const TensorPtr& mask) {
  require_mask(x, mask, "mask_rows");
  std::size_t rows = static_cast<std::size_t>(x->shape[0]) * x->shape[1];
  std::size_t width = x->size() / rows;
  std::vector<double> out(x->size());
  for (std::size_t r = 0; r < rows; ++r) {
    double m = mask->data[r];
    const double* src = x->data.data() + r * width;
    double* dst = out.data() + r * width;
    for (std::size_t i = 0; i < width; ++i) dst[i] = src[i] * m;
  }
  auto t = make_node(x->shape, std::move(out), "mask_rows", {x, mask});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr px = x, pm = mask;
    t->backward_fn = [self, px, pm, rows, width]() {
      if (!px->requires_grad) return;
      px->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        double m = pm->data[r];
        if (m == 0.0) continue;
        const double* g = self->grad.data() + r * width;
        double* dst = px->grad.data() + r * width;
        for (std::size_t i = 0; i < width; ++i) dst[i] += g[i] * m;
      }
    };
  }
  return t;
}

TensorPtr masked_mean_pool(const TensorPtr& x, const TensorPtr& mask) {
  if (x->rank() != 3) fail(ErrorKind::dimension, "masked_mean_pool: input must be [B,T,D]");
  require_mask(x, mask, "masked_mean_pool");
  int bs = x->shape[0], tl = x->shape[1], d = x->shape[2];
  auto counts = std::make_shared<std::vector<double>>(bs, 0.0);
  for (int b = 0; b < bs; ++b) {
    double c = 0.0;
    for (int t2 = 0; t2 < tl; ++t2) c += mask->data[static_cast<std::size_t>(b) * tl + t2];
    if (c <= 0.0) {
      fail(ErrorKind::contract, "masked_mean_pool: row " + std::to_string(b) +
                                    " has no unmasked positions");
    }
    (*counts)[b] = c;
  }
  std::vector<double> out(static_cast<std::size_t>(bs) * d, 0.0);
  for (int b = 0; b < bs; ++b) {
    double* orow = out.data() + static_cast<std::size_t>(b) * d;
    for (int t2 = 0; t2 < tl; ++t2) {
      double m = mask->data[static_cast<std::size_t>(b) * tl + t2];
      if (m == 0.0) continue;
      const double* xrow = x->data.data() + (static_cast<std::size_t>(b) * tl + t2) * d;
      for (int i = 0; i < d; ++i) orow[i] += xrow[i] * m;
    }
    for (int i = 0; i < d; ++i) orow[i] /= (*counts)[b];
  }
  auto t = make_node({bs, d}, std::move(out), "masked_mean_pool", {x, mask});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr px = x, pm = mask;
    t->backward_fn = [self, px, pm, counts, bs, tl, d]() {
      if (!px->requires_grad) return;
      px->ensure_grad();
      for (int b = 0; b < bs; ++b) {
        const double* g = self->grad.data() + static_cast<std::size_t>(b) * d;
        double inv = 1.0 / (*counts)[b];
        for (int t2 = 0; t2 < tl; ++t2) {
          double m = pm->data[static_cast<std::size_t>(b) * tl + t2];
          if (m == 0.0) continue;
          double* dx = px->grad.data() + (static_cast<std::size_t>(b) * tl + t2) * d;
          for (int i = 0; i < d; ++i) dx[i] += g[i] * m * inv;
        }
      }
    };
  }
  return t;
}

TensorPtr additive_key_mask(const TensorPtr& scores, const TensorPtr& mask) {
  if (scores->rank() != 3) {
    fail(ErrorKind::dimension, "additive_key_mask: scores must be [B,S,T]");
  }
  int bs = scores->shape[0], s = scores->shape[1], tl = scores->shape[2];
  if (mask->rank() != 2 || mask->shape[0] != bs || mask->shape[1] != tl) {
    fail(ErrorKind::dimension, "additive_key_mask: mask " + shape_str(mask->shape) +
                                   " does not match scores " + shape_str(scores->shape));
  }
  std::vector<double> out(scores->size());
  for (int b = 0; b < bs; ++b) {
    const double* mrow = mask->data.data() + static_cast<std::size_t>(b) * tl;
    for (int q = 0; q < s; ++q) {
      std::size_t base = (static_cast<std::size_t>(b) * s + q) * tl;
      for (int t2 = 0; t2 < tl; ++t2) {
        out[base + t2] = scores->data[base + t2] + (mrow[t2] - 1.0) * 1e9;
      }
    }
  }
  auto t = make_node(scores->shape, std::move(out), "additive_key_mask", {scores, mask});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr ps = scores;
    t->backward_fn = [self, ps]() {
      if (!ps->requires_grad) return;
      ps->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i) ps->grad[i] += self->grad[i];
    };
  }
  return t;
}

// ---- segment ops ---------------------------------------------------------

namespace {
void require_spans(const TensorPtr& x, const SegmentSpans& spans, const char* op) {
  if (static_cast<int>(spans.start.size()) != spans.batch * spans.w_max ||
      static_cast<int>(spans.end.size()) != spans.batch * spans.w_max) {
    fail(ErrorKind::contract, std::string(op) + ": span table size mismatch");
  }
  for (int b = 0; b < spans.batch; ++b) {
    for (int w = 0; w < spans.w_max; ++w) {
      int s = spans.span_start(b, w), e = spans.span_end(b, w);
      if (e < s) continue;  // absent word
      if (s < 0 || e >= spans.t_max) {
        fail(ErrorKind::contract, std::string(op) + ": span outside sequence");
      }
    }
  }
  (void)x;
}
}  // namespace

TensorPtr segment_mean(const TensorPtr& x, const SegmentSpans& spans) {
  if (x->rank() != 3 || x->shape[0] != spans.batch || x->shape[1] != spans.t_max) {
    fail(ErrorKind::dimension, "segment_mean: input " + shape_str(x->shape) +
                                   " does not match span table");
  }
  require_spans(x, spans, "segment_mean");
  int bs = spans.batch, wl = spans.w_max, a = x->shape[2], tl = spans.t_max;
  std::vector<double> out(static_cast<std::size_t>(bs) * wl * a, 0.0);
  for (int b = 0; b < bs; ++b) {
    for (int w = 0; w < wl; ++w) {
      int s = spans.span_start(b, w), e = spans.span_end(b, w);
      if (e < s) continue;
      double inv = 1.0 / (e - s + 1);
      double* orow = out.data() + (static_cast<std::size_t>(b) * wl + w) * a;
      for (int t2 = s; t2 <= e; ++t2) {
        const double* xrow = x->data.data() + (static_cast<std::size_t>(b) * tl + t2) * a;
        for (int i = 0; i < a; ++i) orow[i] += xrow[i] * inv;
      }
    }
  }
  auto t = make_node({bs, wl, a}, std::move(out), "segment_mean", {x});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr px = x;
    auto sp = std::make_shared<SegmentSpans>(spans);
    t->backward_fn = [self, px, sp, bs, wl, a, tl]() {
      px->ensure_grad();
      for (int b = 0; b < bs; ++b) {
        for (int w = 0; w < wl; ++w) {
          int s = sp->span_start(b, w), e = sp->span_end(b, w);
          if (e < s) continue;
          double inv = 1.0 / (e - s + 1);
          const double* g = self->grad.data() + (static_cast<std::size_t>(b) * wl + w) * a;
          for (int t2 = s; t2 <= e; ++t2) {
            double* dx = px->grad.data() + (static_cast<std::size_t>(b) * tl + t2) * a;
            for (int i = 0; i < a; ++i) dx[i] += g[i] * inv;
          }
        }
      }
    };
  }
  return t;
}

TensorPtr expand_segments(const TensorPtr& s, const SegmentSpans& spans, int t_max) {
  if (s->rank() != 3 || s->shape[0] != spans.batch || s->shape[1] != spans.w_max) {
    fail(ErrorKind::dimension, "expand_segments: input " + shape_str(s->shape) +
                                   " does not match span table");
  }
  if (t_max != spans.t_max) {
    fail(ErrorKind::dimension, "expand_segments: t_max disagrees with span table");
  }
  require_spans(s, spans, "expand_segments");
  int bs = spans.batch, wl = spans.w_max, a = s->shape[2];
  std::vector<double> out(static_cast<std::size_t>(bs) * t_max * a, 0.0);
  for (int b = 0; b < bs; ++b) {
    for (int w = 0; w < wl; ++w) {
      int st = spans.span_start(b, w), e = spans.span_end(b, w);
      if (e < st) continue;
      const double* srow = s->data.data() + (static_cast<std::size_t>(b) * wl + w) * a;
      for (int t2 = st; t2 <= e; ++t2) {
        double* orow = out.data() + (static_cast<std::size_t>(b) * t_max + t2) * a;
        for (int i = 0; i < a; ++i) orow[i] = srow[i];
      }
    }
  }
  auto t = make_node({bs, t_max, a}, std::move(out), "expand_segments", {s});
  if (t->requires_grad) {
    Tensor* self = t.get();
    TensorPtr ps = s;
    auto sp = std::make_shared<SegmentSpans>(spans);
    t->backward_fn = [self, ps, sp, bs, wl, a, t_max]() {
      ps->ensure_grad();
      for (int b = 0; b < bs; ++b) {
        for (int w = 0; w < wl; ++w) {
          int st = sp->span_start(b, w), e = sp->span_end(b, w);
          if (e < st) continue;
          double* ds = ps->grad.data() + (static_cast<std::size_t>(b) * wl + w) * a;
          for (int t2 = st; t2 <= e; ++t2) {
            const double* g = self->grad.data() + (static_cast<std::size_t>(b) * t_max + t2) * a;
            for (int i = 0; i < a; ++i) ds[i] += g[i];
          }
        }
      }
    };
  }
  return t;
}

TensorPtr scaled_dot_attention(const TensorPtr& q, const TensorPtr& k, const TensorPtr& v,
                               const TensorPtr& key_mask) {
  if (q->rank() != 3 || k->rank() != 3 || v->rank() != 3) {
    fail(ErrorKind::dimension, "scaled_dot_attention: inputs must be rank 3");
  }
  int dh = q->shape[2];
  if (k->shape[2] != dh) {
    fail(ErrorKind::dimension, "scaled_dot_attention: query/key width mismatch");
  }
  if (k->shape[1] != v->shape[1] || k->shape[0] != v->shape[0] || q->shape[0] != k->shape[0]) {
    fail(ErrorKind::dimension, "scaled_dot_attention: batch/length mismatch");
  }
  TensorPtr scores = bmm(q, transpose_last2(k));          // [B,S,T]
  scores = scale(scores, 1.0 / std::sqrt(static_cast<double>(dh)));
  if (key_mask) scores = additive_key_mask(scores, key_mask);
  TensorPtr attn = softmax(scores, -1);
  return bmm(attn, v);
}

// ---- reverse pass --------------------------------------------------------

void backward(const TensorPtr& loss) {
  if (!loss) fail(ErrorKind::contract, "backward: null tensor");
  if (loss->size() != 1) {
    fail(ErrorKind::contract, "backward: loss must be scalar, got shape " +
                                  shape_str(loss->shape));
  }
  if (!loss->requires_grad) return;

  // Collect the reachable subgraph, then replay it by descending creation
  // index: children were always created after their parents, so this is a
  // reverse topological order.
  std::vector<Tensor*> nodes;
  std::unordered_set<Tensor*> seen;
  std::vector<Tensor*> stack{loss.get()};
  while (!stack.empty()) {
    Tensor* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (p && p->requires_grad) stack.push_back(p.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const Tensor* a, const Tensor* b) { return a->seq > b->seq; });

  loss->ensure_grad();
  loss->grad[0] += 1.0;
  for (Tensor* n : nodes) {
    if (n->backward_fn) n->backward_fn();
  }
}

GradCheckResult grad_check(const std::function<TensorPtr()>& f,
                           const std::vector<std::pair<std::string, TensorPtr>>& params,
                           double h) {
  if (h <= 0.0) fail(ErrorKind::contract, "grad_check: step must be positive");
  for (const auto& [name, p] : params) {
    if (!p->requires_grad) {
      fail(ErrorKind::contract, "grad_check: parameter " + name + " does not require grad");
    }
    p->zero_grad();
  }
  TensorPtr loss = f();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& [name, p] : params) {
    p->ensure_grad();
    analytic.push_back(p->grad);
  }

  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    TensorPtr p = params[pi].second;
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      double saved = p->data[i];
      p->data[i] = saved + h;
      double fp = f()->value();
      p->data[i] = saved - h;
      double fm = f()->value();
      p->data[i] = saved;
      double numeric = (fp - fm) / (2.0 * h);
      double a = analytic[pi][i];
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      double rel = std::fabs(a - numeric) / denom;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = params[pi].first;
        res.worst_index = static_cast<int>(i);
      }
    }
    p->zero_grad();
  }
  return res;
}

}  // namespace hia
