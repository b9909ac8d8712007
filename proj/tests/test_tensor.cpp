// tests/test_tensor.cpp

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "hia/tensor.hpp"

using namespace hia;

namespace {

using Params = std::vector<std::pair<std::string, TensorPtr>>;

// Random values bounded away from zero so kinks (relu) and tiny
// denominators stay clear of the finite-difference step.
TensorPtr rand_input(Shape shape, Rng& rng) {
  std::vector<double> d(numel(shape));
  for (double& x : d) {
    double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    x = sign * rng.uniform(0.1, 1.5);
  }
  return tensor(std::move(shape), std::move(d), true);
}

double check_op(const std::function<TensorPtr()>& f, const Params& params) {
  return grad_check(f, params, 1e-4).max_rel_err;
}

}  // namespace

TEST_CASE("matmul matches hand-computed product") {
  auto a = tensor({2, 2}, {1, 2, 3, 4});
  auto b = tensor({2, 2}, {5, 6, 7, 8});
  auto c = matmul(a, b);
  CHECK(c->data == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  auto a = zeros({2, 3});
  auto b = zeros({4, 2});
  CHECK_THROWS_AS(matmul(a, b), Error);
}

TEST_CASE("softmax of [1,2,3]") {
  auto y = softmax(tensor({3}, {1, 2, 3}), 0);
  CHECK(y->data[0] == doctest::Approx(0.09003).epsilon(1e-4));
  CHECK(y->data[1] == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(y->data[2] == doctest::Approx(0.66524).epsilon(1e-4));
  CHECK(y->data[0] + y->data[1] + y->data[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one for random inputs") {
  Rng rng(11);
  for (int it = 0; it < 50; ++it) {
    int b = rng.randint(1, 3), t = rng.randint(1, 6);
    auto x = randn({b, t}, rng, 3.0);
    auto y = softmax(x, -1);
    for (int i = 0; i < b; ++i) {
      double s = 0.0;
      for (int j = 0; j < t; ++j) s += y->data[static_cast<std::size_t>(i) * t + j];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("layer_norm normalizes [1,3] to [-1,1]") {
  auto x = tensor({1, 2}, {1, 3});
  auto g = tensor({2}, {1, 1});
  auto b = tensor({2}, {0, 0});
  auto y = layer_norm(x, g, b, 0.0);
  CHECK(y->data[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(y->data[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("conv1d_same keeps length and zero-pads edges") {
  auto x = tensor({3, 1}, {1, 2, 3});
  auto w = tensor({3, 1, 1}, {1, 1, 1});
  auto b = tensor({1}, {0});
  auto y = conv1d_same(x, w, b);
  CHECK(y->shape == Shape{3, 1});
  CHECK(y->data == std::vector<double>{3, 6, 5});
}

TEST_CASE("conv1d_same rejects even kernels") {
  auto x = zeros({4, 1});
  auto w = zeros({2, 1, 1});
  auto b = zeros({1});
  CHECK_THROWS_AS(conv1d_same(x, w, b), Error);
}

TEST_CASE("backward of sum(I*B) gives all-ones gradient for B") {
  auto a = tensor({2, 2}, {1, 0, 0, 1});
  auto b = tensor({2, 2}, {2, 3, 4, 5}, true);
  auto loss = sum_all(matmul(a, b));
  backward(loss);
  CHECK(b->grad == std::vector<double>{1, 1, 1, 1});
}

TEST_CASE("gradient accumulates at fan-out") {
  auto x = tensor({3}, {1, 2, 3}, true);
  auto loss = sum_all(add(x, x));
  backward(loss);
  CHECK(x->grad == std::vector<double>{2, 2, 2});

  // x appearing as both factors of mul gets d(x^2) = 2x.
  auto y = tensor({2}, {3, 4}, true);
  auto loss2 = sum_all(mul(y, y));
  backward(loss2);
  CHECK(y->grad == std::vector<double>{6, 8});
}

TEST_CASE("backward requires a scalar loss") {
  auto x = tensor({2}, {1, 2}, true);
  auto y = add(x, x);
  CHECK_THROWS_AS(backward(y), Error);
}

TEST_CASE("value() rejects non-scalar tensors") {
  CHECK_THROWS_AS(zeros({2})->value(), Error);
  CHECK(scalar(4.25)->value() == 4.25);
}

TEST_CASE("grad_check on sum of squares is tight") {
  auto theta = tensor({2}, {1, 2}, true);
  auto res = grad_check([&]() { return sum_all(mul(theta, theta)); },
                        {{"theta", theta}}, 1e-5);
  CHECK(res.max_rel_err < 1e-7);
}

TEST_CASE("two identical graphs produce identical gradients") {
  for (int round = 0; round < 2; ++round) {
    Rng rng(99);
    auto x = randn({3, 4}, rng, 1.0, true);
    auto w = randn({4, 2}, rng, 1.0, true);
    auto loss = sum_all(relu(matmul(x, w)));
    backward(loss);
    static std::vector<double> first_x, first_w;
    if (round == 0) {
      first_x = x->grad;
      first_w = w->grad;
    } else {
      CHECK(x->grad == first_x);
      CHECK(w->grad == first_w);
    }
  }
}

TEST_CASE("non-finite results are rejected") {
  auto x = tensor({1}, {1e308});
  CHECK_THROWS_AS(scale(x, 1e10), Error);
  CHECK_THROWS_AS(tensor({1}, {std::nan("")}), Error);
}

TEST_CASE("dropout is identity in eval mode and deterministic in train mode") {
  Rng init(5);
  auto x = randn({4, 6}, init, 1.0);
  Rng r1(42);
  CHECK(dropout(x, 0.5, r1, false).get() == x.get());
  Rng r2(42), r3(42);
  auto a = dropout(x, 0.5, r2, true);
  auto b = dropout(x, 0.5, r3, true);
  CHECK(a->data == b->data);
  // Inverted scaling: survivors are x / (1 - rate).
  for (std::size_t i = 0; i < a->data.size(); ++i) {
    bool zero = a->data[i] == 0.0;
    bool scaled = std::fabs(a->data[i] - x->data[i] * 2.0) < 1e-15;
    CHECK((zero || scaled));
  }
}

TEST_CASE("concat and slice invert each other") {
  Rng rng(3);
  auto a = randn({2, 3}, rng);
  auto b = randn({2, 2}, rng);
  auto c = concat({a, b}, 1);
  CHECK(c->shape == Shape{2, 5});
  auto a2 = slice(c, 1, 0, 3);
  auto b2 = slice(c, 1, 3, 2);
  CHECK(a2->data == a->data);
  CHECK(b2->data == b->data);
  CHECK_THROWS_AS(slice(c, 1, 4, 3), Error);
}

TEST_CASE("embedding rejects ids outside the table") {
  auto table = zeros({5, 2});
  CHECK_THROWS_AS(embedding(table, {0, 5}, {2}), Error);
  CHECK_THROWS_AS(embedding(table, {-1}, {1}), Error);
}

TEST_CASE("masked_mean_pool averages only unmasked positions") {
  // batch 1, T=3, D=2; third position masked out
  auto x = tensor({1, 3, 2}, {1, 2, 3, 4, 100, 200});
  auto m = tensor({1, 3}, {1, 1, 0});
  auto y = masked_mean_pool(x, m);
  CHECK(y->data[0] == doctest::Approx(2.0));
  CHECK(y->data[1] == doctest::Approx(3.0));
  auto zero_mask = tensor({1, 3}, {0, 0, 0});
  CHECK_THROWS_AS(masked_mean_pool(x, zero_mask), Error);
}

TEST_CASE("additive_key_mask drives masked attention weights to exactly zero") {
  auto scores = tensor({1, 1, 3}, {0.3, -0.2, 0.9});
  auto mask = tensor({1, 3}, {1, 1, 0});
  auto w = softmax(additive_key_mask(scores, mask), -1);
  CHECK(w->data[2] == 0.0);
  CHECK(w->data[0] + w->data[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("segment_mean and expand_segments follow the span table") {
  SegmentSpans spans;
  spans.batch = 1;
  spans.t_max = 4;
  spans.w_max = 2;
  spans.start = {0, 2};
  spans.end = {1, 2};  // word 0 covers t=0..1, word 1 covers t=2; t=3 is padding
  auto x = tensor({1, 4, 1}, {1, 3, 5, 99});
  auto m = segment_mean(x, spans);
  CHECK(m->data == std::vector<double>{2, 5});

  auto s = tensor({1, 2, 1}, {7, 9});
  auto e = expand_segments(s, spans, 4);
  CHECK(e->data == std::vector<double>{7, 7, 9, 0});
}

TEST_CASE("uniform attention reduces to the mean of unmasked values") {
  // q == 0 makes every score equal; softmax then averages unmasked v rows.
  auto q = zeros({1, 1, 2});
  auto k = tensor({1, 3, 2}, {1, 0, 0, 1, 1, 1});
  auto v = tensor({1, 3, 1}, {3, 5, 1000});
  auto mask = tensor({1, 3}, {1, 1, 0});
  auto out = scaled_dot_attention(q, k, v, mask);
  CHECK(out->data[0] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("finite differences agree with every primitive's backward") {
  Rng rng(2026);
  const int cases = 100;

  SUBCASE("add/mul/scale/relu/sum") {
    for (int it = 0; it < cases; ++it) {
      Shape sh = {rng.randint(1, 3), rng.randint(1, 4)};
      auto a = rand_input(sh, rng);
      auto b = rand_input(sh, rng);
      double s = rng.uniform(-2, 2);
      CHECK(check_op([&]() { return sum_all(mul(add(a, b), a)); },
                     {{"a", a}, {"b", b}}) < 1e-4);
      CHECK(check_op([&]() { return sum_all(relu(scale(sub(a, b), s))); },
                     {{"a", a}, {"b", b}}) < 1e-4);
    }
  }

  SUBCASE("matmul/bmm/transpose") {
    for (int it = 0; it < cases; ++it) {
      int m = rng.randint(1, 3), k = rng.randint(1, 3), n = rng.randint(1, 3);
      auto a = rand_input({m, k}, rng);
      auto b = rand_input({k, n}, rng);
      CHECK(check_op(
                [&]() {
                  auto ab = matmul(a, b);
                  return sum_all(matmul(ab, transpose_last2(ab)));
                },
                {{"a", a}, {"b", b}}) < 1e-4);
      int bs = rng.randint(1, 2);
      auto c = rand_input({bs, m, k}, rng);
      auto d = rand_input({bs, k, n}, rng);
      CHECK(check_op([&]() { return sum_all(bmm(c, d)); }, {{"c", c}, {"d", d}}) < 1e-4);
    }
  }

  SUBCASE("softmax") {
    for (int it = 0; it < cases; ++it) {
      auto x = rand_input({rng.randint(1, 2), rng.randint(2, 5)}, rng);
      auto w = rand_input(x->shape, rng);
      CHECK(check_op([&]() { return sum_all(mul(softmax(x, -1), w)); },
                     {{"x", x}, {"w", w}}) < 1e-4);
    }
  }

  SUBCASE("layer_norm") {
    for (int it = 0; it < cases; ++it) {
      int d = rng.randint(2, 5);
      auto x = rand_input({rng.randint(1, 3), d}, rng);
      auto g = rand_input({d}, rng);
      auto b = rand_input({d}, rng);
      CHECK(check_op([&]() { return sum_all(layer_norm(x, g, b, 1e-5)); },
                     {{"x", x}, {"g", g}, {"b", b}}) < 1e-4);
    }
  }

  SUBCASE("conv1d_same") {
    for (int it = 0; it < cases; ++it) {
      int t = rng.randint(1, 5), cin = rng.randint(1, 2), cout = rng.randint(1, 2);
      int k = rng.uniform() < 0.5 ? 3 : 5;
      auto x = rand_input({rng.randint(1, 2), t, cin}, rng);
      auto w = rand_input({k, cin, cout}, rng);
      auto b = rand_input({cout}, rng);
      CHECK(check_op([&]() { return sum_all(conv1d_same(x, w, b)); },
                     {{"x", x}, {"w", w}, {"b", b}}) < 1e-4);
    }
  }

  SUBCASE("embedding") {
    for (int it = 0; it < cases; ++it) {
      int v = rng.randint(2, 5), d = rng.randint(1, 3), n = rng.randint(1, 4);
      auto table = rand_input({v, d}, rng);
      std::vector<int> ids(n);
      for (int& id : ids) id = rng.randint(0, v - 1);
      CHECK(check_op([&]() { return sum_all(embedding(table, ids, {n})); },
                     {{"table", table}}) < 1e-4);
    }
  }

  SUBCASE("broadcast helpers") {
    for (int it = 0; it < cases; ++it) {
      int b = rng.randint(1, 2), t = rng.randint(1, 3), d = rng.randint(1, 3);
      auto x = rand_input({b, t, d}, rng);
      auto v = rand_input({d}, rng);
      auto h = rand_input({b, d}, rng);
      auto s = rand_input({b, t}, rng);
      auto p = rand_input({t, d}, rng);
      CHECK(check_op(
                [&]() {
                  auto y = add_rowvec(x, v);
                  y = add(y, expand_mid(h, t));
                  y = add(y, expand_last(s, d));
                  y = add(y, expand_axis0(p, b));
                  return sum_all(y);
                },
                {{"x", x}, {"v", v}, {"h", h}, {"s", s}, {"p", p}}) < 1e-4);
    }
  }

  SUBCASE("concat/slice/reshape") {
    for (int it = 0; it < cases; ++it) {
      int b = rng.randint(1, 2), t1 = rng.randint(1, 3), t2 = rng.randint(1, 3);
      int d = rng.randint(1, 3);
      auto a = rand_input({b, t1, d}, rng);
      auto c = rand_input({b, t2, d}, rng);
      CHECK(check_op(
                [&]() {
                  auto cat = concat({a, c}, 1);
                  auto sl = slice(cat, 1, 0, t1 + t2 > 1 ? t1 + t2 - 1 : 1);
                  return sum_all(mul(reshape(sl, {static_cast<int>(numel(sl->shape))}),
                                     reshape(sl, {static_cast<int>(numel(sl->shape))})));
                },
                {{"a", a}, {"c", c}}) < 1e-4);
    }
  }

  SUBCASE("masking and pooling") {
    for (int it = 0; it < cases; ++it) {
      int b = rng.randint(1, 2), t = rng.randint(2, 4), d = rng.randint(1, 3);
      auto x = rand_input({b, t, d}, rng);
      std::vector<double> mv(static_cast<std::size_t>(b) * t, 1.0);
      for (int i = 0; i < b; ++i) {
        // keep at least one position per row unmasked
        for (int j = 1; j < t; ++j)
          mv[static_cast<std::size_t>(i) * t + j] = rng.uniform() < 0.3 ? 0.0 : 1.0;
      }
      auto m = tensor({b, t}, mv);
      CHECK(check_op([&]() { return sum_all(masked_mean_pool(mask_rows(x, m), m)); },
                     {{"x", x}}) < 1e-4);
    }
  }

  SUBCASE("segment ops") {
    for (int it = 0; it < cases; ++it) {
      int b = rng.randint(1, 2), d = rng.randint(1, 2);
      SegmentSpans spans;
      spans.batch = b;
      spans.w_max = rng.randint(1, 2);
      spans.t_max = 0;
      std::vector<std::vector<std::pair<int, int>>> rows(b);
      for (int i = 0; i < b; ++i) {
        int pos = 0;
        int words = rng.randint(1, spans.w_max);
        for (int w = 0; w < words; ++w) {
          int len = rng.randint(1, 2);
          rows[i].push_back({pos, pos + len - 1});
          pos += len;
        }
        spans.t_max = std::max(spans.t_max, pos);
      }
      spans.t_max += 1;  // leave one pad position
      for (int i = 0; i < b; ++i) {
        for (int w = 0; w < spans.w_max; ++w) {
          if (w < static_cast<int>(rows[i].size())) {
            spans.start.push_back(rows[i][w].first);
            spans.end.push_back(rows[i][w].second);
          } else {
            spans.start.push_back(0);
            spans.end.push_back(-1);
          }
        }
      }
      auto x = rand_input({b, spans.t_max, d}, rng);
      auto w = rand_input({b, spans.w_max, d}, rng);
      CHECK(check_op(
                [&]() {
                  auto sm = segment_mean(x, spans);
                  auto ex = expand_segments(mul(sm, w), spans, spans.t_max);
                  return sum_all(ex);
                },
                {{"x", x}, {"w", w}}) < 1e-4);
    }
  }

  SUBCASE("attention composite with mask") {
    for (int it = 0; it < cases; ++it) {
      int b = rng.randint(1, 2), s = rng.randint(1, 2), t = rng.randint(2, 3);
      int d = rng.randint(1, 3);
      auto q = rand_input({b, s, d}, rng);
      auto k = rand_input({b, t, d}, rng);
      auto v = rand_input({b, t, d}, rng);
      std::vector<double> mv(static_cast<std::size_t>(b) * t, 1.0);
      for (int i = 0; i < b; ++i) mv[static_cast<std::size_t>(i) * t + t - 1] =
          rng.uniform() < 0.5 ? 0.0 : 1.0;
      auto m = tensor({b, t}, mv);
      CHECK(check_op([&]() { return sum_all(scaled_dot_attention(q, k, v, m)); },
                     {{"q", q}, {"k", k}, {"v", v}}) < 1e-4);
    }
  }

  SUBCASE("dropout with pinned stream") {
    for (int it = 0; it < cases; ++it) {
      auto x = rand_input({rng.randint(1, 3), rng.randint(1, 4)}, rng);
      std::uint64_t seed = rng.next_u64();
      CHECK(check_op(
                [&]() {
                  Rng r(seed);
                  return sum_all(dropout(x, 0.4, r, true));
                },
                {{"x", x}}) < 1e-4);
    }
  }
}
