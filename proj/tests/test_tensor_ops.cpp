// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#include <cmath>
#include <doctest.h>
#include <stdexcept>

#include "ftseg/gradcheck.hpp"
#include "ftseg/tape.hpp"
#include "oracles.hpp"

using namespace ftseg;
using oracles::max_abs_diff;
using oracles::random_tensor;

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.all_finite());
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
  CHECK(shape_str({1, 2, 3, 4}) == "[1x2x3x4]");
}

TEST_CASE("conv2d: zero input yields the bias per channel") {
  Tape tape;
  Var x = tape.leaf(Tensor::zeros({2, 3, 4, 4}));
  Rng rng(7);
  Var k = tape.leaf(random_tensor(rng, {5, 3, 3, 3}));
  Var b = tape.leaf(Tensor::from({5}, {0.5, -1.0, 2.0, 0.0, 3.25}));
  Var y = conv2d(x, k, b, Padding::kSame);
  REQUIRE(y.value().shape == Shape{2, 5, 4, 4});
  for (int n = 0; n < 2; ++n)
    for (int o = 0; o < 5; ++o)
      for (int i = 0; i < 16; ++i)
        CHECK(y.value().at4(n, o, i / 4, i % 4) == b.value().data[static_cast<size_t>(o)]);
}

TEST_CASE("conv2d: 1x1 kernel scales the input") {
  Tape tape;
  Var x = tape.leaf(Tensor::from({1, 1, 3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  Var k = tape.leaf(Tensor::from({1, 1, 1, 1}, {2.0}));
  Var b = tape.leaf(Tensor::from({1}, {0.0}));
  Var y = conv2d(x, k, b, Padding::kSame);
  for (int64_t i = 0; i < 9; ++i)
    CHECK(y.value().data[static_cast<size_t>(i)] == 2.0 * x.value().data[static_cast<size_t>(i)]);
}

TEST_CASE("conv2d matches the six-loop oracle") {
  Rng rng(42);
  const Tensor input = random_tensor(rng, {1, 2, 5, 5});
  const Tensor kernel = random_tensor(rng, {3, 2, 3, 3});
  const Tensor bias = random_tensor(rng, {3});
  for (bool same : {true, false}) {
    Tape tape;
    Var y = conv2d(tape.leaf(input), tape.leaf(kernel), tape.leaf(bias),
                   same ? Padding::kSame : Padding::kValid);
    const Tensor expect = oracles::conv2d_naive(input, kernel, bias, same);
    REQUIRE(y.value().shape == expect.shape);
    CHECK(max_abs_diff(y.value(), expect) < 1e-12);
  }
}

TEST_CASE("conv2d without bias matches the oracle") {
  Rng rng(43);
  const Tensor input = random_tensor(rng, {2, 3, 6, 4});
  const Tensor kernel = random_tensor(rng, {2, 3, 1, 1});
  Tape tape;
  Var y = conv2d(tape.leaf(input), tape.leaf(kernel), Padding::kSame);
  const Tensor expect = oracles::conv2d_naive(input, kernel, Tensor(), true);
  CHECK(max_abs_diff(y.value(), expect) < 1e-12);
}

TEST_CASE("conv2d rejects bad shapes") {
  Tape tape;
  Var x = tape.leaf(Tensor::zeros({1, 2, 4, 4}));
  Var k_wrong_c = tape.leaf(Tensor::zeros({1, 3, 3, 3}));
  Var k_even = tape.leaf(Tensor::zeros({1, 2, 2, 2}));
  Var b = tape.leaf(Tensor::zeros({1}));
  Var b_wrong = tape.leaf(Tensor::zeros({4}));
  Var k_ok = tape.leaf(Tensor::zeros({1, 2, 3, 3}));
  CHECK_THROWS_AS(conv2d(x, k_wrong_c, b, Padding::kSame), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(x, k_even, b, Padding::kSame), std::invalid_argument);
  CHECK_THROWS_AS(conv2d(x, k_ok, b_wrong, Padding::kSame), std::invalid_argument);
}

TEST_CASE("maxpool2d basics") {
  Tape tape;
  Var x = tape.leaf(Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4}));
  Var y = maxpool2d(x);
  CHECK(y.value().data[0] == 4.0);

  Var odd = tape.leaf(Tensor::zeros({1, 1, 3, 4}));
  CHECK_THROWS_AS(maxpool2d(odd), std::invalid_argument);
}

TEST_CASE("maxpool2d tie-break routes the gradient to the first window element") {
  Tape tape;
  Var x = tape.leaf(Tensor::full({1, 1, 4, 4}, 3.0));
  Var y = maxpool2d(x);
  for (double v : y.value().data) CHECK(v == 3.0);
  Var loss = sum(y);
  tape.backward(loss);
  const Tensor& g = x.grad();
  for (int yy = 0; yy < 4; ++yy)
    for (int xx = 0; xx < 4; ++xx)
      CHECK(g.at4(0, 0, yy, xx) == ((yy % 2 == 0 && xx % 2 == 0) ? 1.0 : 0.0));
}

TEST_CASE("maxpool2d matches the window-scan oracle") {
  Rng rng(11);
  const Tensor input = random_tensor(rng, {1, 1, 8, 8});
  Tape tape;
  Var y = maxpool2d(tape.leaf(input));
  CHECK(max_abs_diff(y.value(), oracles::maxpool_naive(input)) == 0.0);
}

TEST_CASE("avgpool2d matches the window-scan oracle") {
  Rng rng(12);
  const Tensor input = random_tensor(rng, {2, 3, 6, 8});
  Tape tape;
  Var y = avgpool2d(tape.leaf(input));
  CHECK(max_abs_diff(y.value(), oracles::avgpool_naive(input)) < 1e-15);
}

TEST_CASE("bilinear upsampling preserves constants") {
  Tape tape;
  Var x = tape.leaf(Tensor::full({1, 2, 3, 5}, 0.37));
  Var y = upsample_bilinear2x(x);
  REQUIRE(y.value().shape == Shape{1, 2, 6, 10});
  for (double v : y.value().data) CHECK(v == doctest::Approx(0.37).epsilon(1e-15));
}

TEST_CASE("bilinear upsampling of [0,1] gives the align-corners=false row") {
  Tape tape;
  Var x = tape.leaf(Tensor::from({1, 1, 1, 2}, {0.0, 1.0}));
  Var y = upsample_bilinear2x(x);
  REQUIRE(y.value().shape == Shape{1, 1, 2, 4});
  const double expect[4] = {0.0, 0.25, 0.75, 1.0};
  for (int x_i = 0; x_i < 4; ++x_i) {
    CHECK(y.value().at4(0, 0, 0, x_i) == doctest::Approx(expect[x_i]).epsilon(1e-15));
    CHECK(y.value().at4(0, 0, 1, x_i) == doctest::Approx(expect[x_i]).epsilon(1e-15));
  }
}

TEST_CASE("bilinear upsampling gradcheck") {
  Rng rng(13);
  const Tensor x = random_tensor(rng, {1, 1, 3, 3});
  const GradcheckReport report = gradcheck(
      [](Tape&, const Var& v) { return sum(mul(upsample_bilinear2x(v), upsample_bilinear2x(v))); },
      x, 1e-5, 1e-4);
  CHECK_MESSAGE(report.pass, report.describe());
}

TEST_CASE("elementwise basics") {
  Tape tape;
  Var z = tape.leaf(Tensor::from({1}, {0.0}));
  CHECK(sigmoid(z).value().data[0] == 0.5);

  Var neg = tape.leaf(Tensor::from({1}, {-3.0}));
  Var r = relu(neg);
  CHECK(r.value().data[0] == 0.0);
  tape.backward(sum(r));
  CHECK(neg.grad().data[0] == 0.0);

  Tape tape2;
  Var base = tape2.leaf(Tensor::from({1}, {0.4}));
  Var p = pow_scalar(base, 0.75);
  // independent scalar route: exp(0.75*ln 0.4)
  CHECK(p.value().data[0] == doctest::Approx(std::exp(0.75 * std::log(0.4))).epsilon(1e-12));
  CHECK(p.value().data[0] == doctest::Approx(0.502973).epsilon(1e-6));

  Var negative = tape2.leaf(Tensor::from({1}, {-0.2}));
  CHECK_THROWS_AS(pow_scalar(negative, 0.5), std::invalid_argument);
}

TEST_CASE("channel-vector and coefficient broadcasts") {
  Tape tape;
  Rng rng(14);
  const Tensor xt = random_tensor(rng, {2, 3, 2, 2});
  Var x = tape.leaf(xt);
  Var bias = tape.leaf(Tensor::from({3}, {1.0, 10.0, 100.0}));
  Var y = add(x, bias);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 4; ++i)
        CHECK(y.value().at4(n, c, i / 2, i % 2) ==
              xt.at4(n, c, i / 2, i % 2) + bias.value().data[static_cast<size_t>(c)]);

  const Tensor ct = random_tensor(rng, {2, 1, 2, 2});
  Var coeff = tape.leaf(ct);
  Var scaled = mul(x, coeff);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 4; ++i)
        CHECK(scaled.value().at4(n, c, i / 2, i % 2) ==
              xt.at4(n, c, i / 2, i % 2) * ct.at4(n, 0, i / 2, i % 2));

  // Undocumented broadcasts are rejected.
  Var widerow = tape.leaf(Tensor::zeros({2, 3, 1, 2}));
  CHECK_THROWS_AS(add(x, widerow), std::invalid_argument);
  Var wrong_len = tape.leaf(Tensor::zeros({4}));
  CHECK_THROWS_AS(add(x, wrong_len), std::invalid_argument);
}

TEST_CASE("concat with a zero-channel tensor is the identity") {
  Tape tape;
  Rng rng(15);
  const Tensor xt = random_tensor(rng, {1, 2, 3, 3});
  Var x = tape.leaf(xt);
  Var empty = tape.leaf(Tensor::zeros({1, 0, 3, 3}));
  Var y = concat_channels(x, empty);
  CHECK(y.value().shape == xt.shape);
  CHECK(max_abs_diff(y.value(), xt) == 0.0);
}

TEST_CASE("concat then slice recovers both inputs exactly") {
  Tape tape;
  Rng rng(16);
  const Tensor at = random_tensor(rng, {2, 2, 3, 3});
  const Tensor bt = random_tensor(rng, {2, 3, 3, 3});
  Var joined = concat_channels(tape.leaf(at), tape.leaf(bt));
  Var back_a = slice_channels(joined, 0, 2);
  Var back_b = slice_channels(joined, 2, 5);
  CHECK(max_abs_diff(back_a.value(), at) == 0.0);
  CHECK(max_abs_diff(back_b.value(), bt) == 0.0);

  Var mismatched = tape.leaf(Tensor::zeros({2, 1, 4, 3}));
  CHECK_THROWS_AS(concat_channels(tape.leaf(at), mismatched), std::invalid_argument);
}

TEST_CASE("concat gradcheck") {
  Rng rng(17);
  const Tensor inputs[2] = {random_tensor(rng, {1, 2, 2, 2}), random_tensor(rng, {1, 1, 2, 2})};
  const GradcheckReport report = gradcheck_multi(
      [](Tape&, std::span<const Var> v) {
        Var joined = concat_channels(v[0], v[1]);
        return sum(mul(joined, joined));
      },
      inputs, 1e-5, 1e-4);
  CHECK_MESSAGE(report.pass, report.describe());
}
