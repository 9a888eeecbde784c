/*
 * Copyright 2026 The robnas Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <sstream>

#include "doctest.h"
#include "robnas/checkpoint.hpp"
#include "robnas/ops.hpp"
#include "support/gradcheck.hpp"

using namespace robnas;
using robnas::testing::check_gradients;
using robnas::testing::random_tensor;

namespace {

// sum(v * r) for a fixed random r, so every output element carries a
// distinct weight into the loss.
template <class T>
BasicVar<T> weighted_sum(BasicVar<T> v, const Tensor& r) {
  return ops::sum(ops::mul(v, v.tape->constant(r.cast<T>())));
}

Tensor away_from_zero(Rng& rng, Shape shape) {
  Tensor t = random_tensor(rng, std::move(shape));
  for (auto& v : t.data()) v = v < 0 ? v - 0.05f : v + 0.05f;
  return t;
}

}  // namespace

TEST_CASE("relu forward and gradient") {
  Tape tape;
  Var x = tape.leaf(Tensor({3}, {-1.0f, 0.0f, 2.0f}), true);
  Var y = ops::relu(x);
  CHECK(y.value() == Tensor({3}, {0.0f, 0.0f, 2.0f}));
  tape.backward(ops::sum(y));
  CHECK(tape.grad(x) == Tensor({3}, {0.0f, 0.0f, 1.0f}));
}

TEST_CASE("depthwise 3x3 on constant input counts overlapping taps") {
  Tape tape;
  Var x = tape.constant(Tensor({1, 1, 3, 3}, 1.0f));
  Var k = tape.constant(Tensor({1, 3, 3}, 1.0f));
  const Tensor& y = ops::depthwise_conv3x3(x, k).value();
  CHECK(y[4] == 9.0f);
  CHECK(y[0] == 4.0f);
  CHECK(y[2] == 4.0f);
  CHECK(y[6] == 4.0f);
  CHECK(y[8] == 4.0f);
  CHECK(y[1] == 6.0f);
}

TEST_CASE("backward of x*x at 3 is 6") {
  Tape tape;
  Var x = tape.leaf(Tensor(Shape{}, 3.0f), true);
  tape.backward(ops::mul(x, x));
  CHECK(tape.grad(x)[0] == 6.0f);
}

TEST_CASE("fan-out accumulates and unreachable leaves get zero") {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, {1.0f, -2.0f}), true);
  Var unused = tape.leaf(Tensor({2}, {5.0f, 5.0f}), true);
  Var loss = ops::sum(ops::add(x, x));
  ops::relu(unused);
  tape.backward(loss);
  CHECK(tape.grad(x) == Tensor({2}, {2.0f, 2.0f}));
  CHECK(tape.grad(unused) == Tensor({2}, {0.0f, 0.0f}));
  CHECK_FALSE(tape.has_grad(unused));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, {1.0f, 2.0f}), true);
  CHECK_THROWS_AS(tape.backward(ops::relu(x)), ShapeError);
}

TEST_CASE("shape mismatch names the operation and both shapes") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({4, 5}));
  try {
    ops::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[4, 5]") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::add(a, b), ShapeError);
  CHECK_THROWS_AS(ops::pointwise_conv(tape.constant(Tensor({1, 3, 2, 2})), tape.constant(Tensor({2, 4}))),
                  ShapeError);
}

TEST_CASE("softmax cross-entropy gradient matches finite differences") {
  Rng rng(11);
  Tensor logits = random_tensor(rng, {1, 4}, -2.0, 2.0);
  const std::vector<int> labels{2};
  auto rep = check_gradients(
      [&](auto& tape, auto& v) { return ops::softmax_cross_entropy(v[0], labels); }, {logits}, rng, 4);
  CHECK(rep.checked == 4);
  CHECK(rep.max_rel_error < 1e-3);
}

TEST_CASE("every primitive passes the finite-difference check") {
  Rng rng(2024);
  const std::size_t coords = 10;
  auto expect_ok = [](const robnas::testing::GradCheckReport& r) {
    CHECK(r.checked >= 10);
    CHECK(r.max_rel_error < 1e-3);
  };

  SUBCASE("add / mul / matmul / sum") {
    Tensor a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {3, 4}), c = random_tensor(rng, {4, 5});
    Tensor r = random_tensor(rng, {3, 5});
    expect_ok(check_gradients(
        [&](auto&, auto& v) { return weighted_sum(ops::matmul(ops::mul(ops::add(v[0], v[1]), v[0]), v[2]), r); },
        {a, b, c}, rng, coords));
  }
  SUBCASE("relu") {
    Tensor x = away_from_zero(rng, {2, 3, 4, 4});
    Tensor r = random_tensor(rng, {2, 3, 4, 4});
    expect_ok(check_gradients([&](auto&, auto& v) { return weighted_sum(ops::relu(v[0]), r); }, {x}, rng, coords));
  }
  SUBCASE("depthwise conv") {
    Tensor x = random_tensor(rng, {2, 3, 5, 4}), k = random_tensor(rng, {3, 3, 3});
    Tensor r = random_tensor(rng, {2, 3, 5, 4});
    expect_ok(check_gradients([&](auto&, auto& v) { return weighted_sum(ops::depthwise_conv3x3(v[0], v[1]), r); },
                              {x, k}, rng, coords));
  }
  SUBCASE("pointwise conv") {
    Tensor x = random_tensor(rng, {2, 3, 4, 4}), w = random_tensor(rng, {5, 3});
    Tensor r = random_tensor(rng, {2, 5, 4, 4});
    expect_ok(check_gradients([&](auto&, auto& v) { return weighted_sum(ops::pointwise_conv(v[0], v[1]), r); },
                              {x, w}, rng, coords));
  }
  SUBCASE("channel norm, train and eval") {
    Tensor x = random_tensor(rng, {3, 2, 3, 3}), g = random_tensor(rng, {2}, 0.5, 1.5),
           b = random_tensor(rng, {2});
    Tensor rm = random_tensor(rng, {2}), rv = random_tensor(rng, {2}, 0.5, 2.0);
    Tensor r = random_tensor(rng, {3, 2, 3, 3});
    for (auto mode : {ops::NormMode::Train, ops::NormMode::Eval}) {
      expect_ok(check_gradients(
          [&](auto&, auto& v) { return weighted_sum(ops::channel_norm(v[0], v[1], v[2], rm, rv, mode), r); },
          {x, g, b}, rng, coords));
    }
  }
  SUBCASE("pooling, concat, linear") {
    Tensor x = random_tensor(rng, {2, 2, 4, 6}), y = random_tensor(rng, {2, 3, 2, 3});
    Tensor w = random_tensor(rng, {3, 5}), bias = random_tensor(rng, {3});
    Tensor r = random_tensor(rng, {2, 3});
    expect_ok(check_gradients(
        [&](auto&, auto& v) {
          auto pooled = ops::avg_pool2x2(v[0]);
          std::vector parts{pooled, v[1]};
          auto cat = ops::concat_channels(std::span<const decltype(pooled)>(parts));
          return weighted_sum(ops::linear(ops::global_avg_pool(cat), v[2], v[3]), r);
        },
        {x, y, w, bias}, rng, coords));
  }
  SUBCASE("softmax cross-entropy over a batch") {
    Tensor logits = random_tensor(rng, {5, 4}, -3.0, 3.0);
    const std::vector<int> labels{0, 3, 1, 1, 2};
    expect_ok(check_gradients([&](auto&, auto& v) { return ops::softmax_cross_entropy(v[0], labels); }, {logits},
                              rng, coords));
  }
}

TEST_CASE("eval-mode channel norm is affine and has no batch coupling") {
  Rng rng(5);
  Tensor x = random_tensor(rng, {4, 3, 2, 2});
  Tensor g = random_tensor(rng, {3}), b = random_tensor(rng, {3});
  Tensor rm = random_tensor(rng, {3}), rv = random_tensor(rng, {3}, 0.5, 2.0);
  Tape tape;
  const Tensor full =
      ops::channel_norm(tape.constant(x), tape.constant(g), tape.constant(b), rm, rv, ops::NormMode::Eval).value();
  Tensor first({1, 3, 2, 2}, std::vector<float>(x.raw(), x.raw() + 12));
  const Tensor single =
      ops::channel_norm(tape.constant(first), tape.constant(g), tape.constant(b), rm, rv, ops::NormMode::Eval)
          .value();
  for (std::size_t i = 0; i < 12; ++i) CHECK(single[i] == full[i]);
}

TEST_CASE("train-mode channel norm reports moments and running update uses momentum 0.9") {
  Tape tape;
  Tensor x({2, 1, 1, 2}, {1.0f, 3.0f, 5.0f, 7.0f});
  Tensor rm({1}, 0.0f), rv({1}, 1.0f);
  ops::NormBatchStats stats;
  ops::channel_norm(tape.constant(x), tape.constant(Tensor({1}, 1.0f)), tape.constant(Tensor({1}, 0.0f)), rm, rv,
                    ops::NormMode::Train, &stats);
  CHECK(stats.mean[0] == doctest::Approx(4.0));
  CHECK(stats.var_unbiased[0] == doctest::Approx(20.0 / 3.0));
  ops::update_running_stats(rm, rv, stats);
  CHECK(rm[0] == doctest::Approx(0.4));
  CHECK(rv[0] == doctest::Approx(0.9 + 0.1 * 20.0 / 3.0));
}

TEST_CASE("forward evaluation is deterministic") {
  Rng rng(3);
  Tensor x = random_tensor(rng, {2, 3, 6, 6}), k = random_tensor(rng, {3, 3, 3}), w = random_tensor(rng, {4, 3});
  auto run = [&] {
    Tape tape;
    return ops::pointwise_conv(ops::relu(ops::depthwise_conv3x3(tape.constant(x), tape.constant(k))),
                               tape.constant(w))
        .value();
  };
  CHECK(run() == run());
}

TEST_CASE("rng follows the standard mt19937_64 sequence") {
  Rng rng(5489);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next_u64();
  CHECK(v == 9981545732273789042ULL);
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(9);
  std::vector<NamedTensor> recs{{"a/w", random_tensor(rng, {3, 4})},
                                {"b", Tensor({2}, {-0.0f, 1e-38f})},
                                {"scalar", Tensor(Shape{}, 7.5f)}};
  std::stringstream ss;
  write_checkpoint(ss, recs);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "RBNT");
  CHECK(bytes[4] == 1);
  auto back = read_checkpoint(ss);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].name == recs[i].name);
    CHECK(back[i].tensor.shape() == recs[i].tensor.shape());
    CHECK(std::memcmp(back[i].tensor.raw(), recs[i].tensor.raw(), recs[i].tensor.numel() * 4) == 0);
  }
  std::stringstream again;
  write_checkpoint(again, back);
  CHECK(again.str() == bytes);
}

TEST_CASE("checkpoint rejects bad magic and truncation") {
  std::stringstream bad("XXXX\x01\0\0\0");
  CHECK_THROWS_AS(read_checkpoint(bad), CheckpointError);
  std::stringstream ss;
  write_checkpoint(ss, {{"w", Tensor({4}, 1.0f)}});
  std::string bytes = ss.str();
  std::stringstream cut(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_checkpoint(cut), CheckpointError);
}
