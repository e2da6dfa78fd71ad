// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#include <cmath>
#include <cstring>
#include <doctest.h>
#include <stdexcept>

#include "ftseg/gradcheck.hpp"
#include "ftseg/tape.hpp"
#include "oracles.hpp"

using namespace ftseg;
using oracles::random_binary;
using oracles::random_tensor;

TEST_CASE("backward of sum gives all-ones") {
  Tape tape;
  Var x = tape.leaf(Tensor::from({4}, {1, 2, 3, 4}));
  tape.backward(sum(x));
  for (double g : x.grad().data) CHECK(g == 1.0);
}

TEST_CASE("backward of sum of squares") {
  Tape tape;
  Var x = tape.leaf(Tensor::from({2}, {1, 2}));
  tape.backward(sum(mul(x, x)));
  CHECK(x.grad().data[0] == 2.0);
  CHECK(x.grad().data[1] == 4.0);
}

TEST_CASE("backward rejects non-scalar targets and foreign vars") {
  Tape tape;
  Var x = tape.leaf(Tensor::zeros({2, 2}));
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
  Tape other;
  Var y = other.leaf(Tensor::zeros({1}));
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("gradients of unused parameters are zero") {
  Tape tape;
  Var used = tape.leaf(Tensor::from({2}, {1, 2}));
  Var unused = tape.leaf(Tensor::from({3}, {5, 6, 7}));
  tape.backward(sum(used));
  for (double g : unused.grad().data) CHECK(g == 0.0);
}

TEST_CASE("composite conv-relu-sum graph matches finite differences") {
  Rng rng(21);
  const Tensor input = random_tensor(rng, {1, 2, 4, 4});
  const Tensor kernel = random_tensor(rng, {2, 2, 3, 3});
  const Tensor bias = random_tensor(rng, {2});
  const Tensor args[3] = {input, kernel, bias};
  const GradcheckReport report = gradcheck_multi(
      [](Tape&, std::span<const Var> v) {
        return sum(relu(conv2d(v[0], v[1], v[2], Padding::kSame)));
      },
      args, 1e-5, 1e-4);
  CHECK_MESSAGE(report.pass, report.describe());
}

TEST_CASE("linearity of backward over shared subexpressions") {
  // grad(a*f + b*g) == a*grad(f) + b*grad(g) on the same function structure.
  Rng rng(22);
  const Tensor xt = random_tensor(rng, {6});
  const double a = 2.5, b = -1.25;

  auto grad_of = [&](double ca, double cb) {
    Tape tape;
    Var x = tape.leaf(xt);
    Var f = sum(mul(x, x));
    Var g = sum(sigmoid(x));
    tape.backward(add(affine(f, ca, 0.0), affine(g, cb, 0.0)));
    return x.grad();
  };
  const Tensor combined = grad_of(a, b);
  const Tensor only_f = grad_of(1.0, 0.0);
  const Tensor only_g = grad_of(0.0, 1.0);
  for (size_t i = 0; i < combined.data.size(); ++i)
    CHECK(combined.data[i] ==
          doctest::Approx(a * only_f.data[i] + b * only_g.data[i]).epsilon(1e-12));
}

TEST_CASE("every differentiable op passes central differences over 100 seeds") {
  int seeds_run = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = Rng::keyed(seed, 900);
    const Tensor x = random_tensor(rng, {1, 2, 4, 4});
    const Tensor k = random_tensor(rng, {2, 2, 3, 3});
    const Tensor b = random_tensor(rng, {2});
    const Tensor c = random_tensor(rng, {1, 1, 4, 4});
    const Tensor pos = random_tensor(rng, {1, 2, 4, 4}, 0.05, 0.95);

    auto check1 = [&](const char* name, const Tensor& arg, auto&& fn) {
      const GradcheckReport r =
          gradcheck([&](Tape&, const Var& v) { return fn(v); }, arg, 1e-5, 1e-4);
      CHECK_MESSAGE(r.pass, name, " seed ", seed, ": ", r.describe());
    };
    check1("maxpool2d", x, [](const Var& v) { return sum(mul(maxpool2d(v), maxpool2d(v))); });
    check1("avgpool2d", x, [](const Var& v) { return sum(mul(avgpool2d(v), avgpool2d(v))); });
    check1("upsample", x, [](const Var& v) {
      Var u = upsample_bilinear2x(v);
      return sum(mul(u, u));
    });
    check1("relu", x, [](const Var& v) {
      Var r = relu(v);
      return sum(mul(r, r));
    });
    check1("sigmoid", x, [](const Var& v) { return sum(sigmoid(v)); });
    check1("affine", x, [](const Var& v) { return sum(affine(v, 1.75, -0.5)); });
    check1("pow_scalar", pos, [](const Var& v) { return sum(pow_scalar(v, 1.6)); });
    check1("clamp01", pos, [](const Var& v) { return sum(mul(clamp01(v), clamp01(v))); });

    const Tensor conv_args[3] = {x, k, b};
    GradcheckReport r = gradcheck_multi(
        [](Tape&, std::span<const Var> v) {
          return sum(sigmoid(conv2d(v[0], v[1], v[2], Padding::kValid)));
        },
        conv_args, 1e-5, 1e-4);
    CHECK_MESSAGE(r.pass, "conv2d seed ", seed, ": ", r.describe());

    const Tensor mul_args[2] = {x, c};
    r = gradcheck_multi(
        [](Tape&, std::span<const Var> v) { return sum(mul(mul(v[0], v[1]), v[0])); }, mul_args,
        1e-5, 1e-4);
    CHECK_MESSAGE(r.pass, "mul-broadcast seed ", seed, ": ", r.describe());

    const Tensor bias_args[2] = {x, b};
    r = gradcheck_multi(
        [](Tape&, std::span<const Var> v) { return sum(sigmoid(add(v[0], v[1]))); }, bias_args,
        1e-5, 1e-4);
    CHECK_MESSAGE(r.pass, "add-bias seed ", seed, ": ", r.describe());

    const Tensor div_args[2] = {random_tensor(rng, {3}, 0.5, 2.0),
                                random_tensor(rng, {3}, 0.5, 2.0)};
    r = gradcheck_multi([](Tape&, std::span<const Var> v) { return sum(div(v[0], v[1])); },
                        div_args, 1e-5, 1e-4);
    CHECK_MESSAGE(r.pass, "div seed ", seed, ": ", r.describe());
    ++seeds_run;
  }
  CHECK(seeds_run == 100);
}

TEST_CASE("identical seed and inputs give bit-identical outputs and gradients") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    const Tensor input = random_tensor(rng, {1, 2, 8, 8});
    const Tensor kernel = random_tensor(rng, {3, 2, 3, 3});
    const Tensor bias = random_tensor(rng, {3});
    Tape tape;
    Var x = tape.leaf(input);
    Var y = sum(sigmoid(maxpool2d(
        relu(conv2d(x, tape.leaf(kernel), tape.leaf(bias), Padding::kSame)))));
    tape.backward(y);
    return std::pair<Tensor, Tensor>(y.value(), x.grad());
  };
  auto [v1, g1] = run(77);
  auto [v2, g2] = run(77);
  CHECK(std::memcmp(v1.data.data(), v2.data.data(), v1.data.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(g1.data.data(), g2.data.data(), g1.data.size() * sizeof(double)) == 0);
}

TEST_CASE("gradcheck op: trivial function, step validation, non-finite rejection") {
  Rng rng(23);
  const Tensor x = random_tensor(rng, {5});
  const GradcheckReport r = gradcheck([](Tape&, const Var& v) { return sum(v); }, x, 1e-5, 1e-4);
  CHECK(r.pass);
  CHECK(r.max_rel_err < 1e-8);

  CHECK_THROWS_AS(gradcheck([](Tape&, const Var& v) { return sum(v); }, x, 1e-2, 1e-4),
                  std::invalid_argument);

  CHECK_THROWS_AS(gradcheck(
                      [](Tape& tape, const Var& v) {
                        Tensor inf({1});
                        inf.data[0] = std::numeric_limits<double>::infinity();
                        return sum(mul(sum(v), tape.leaf(inf)));
                      },
                      x, 1e-5, 1e-4),
                  std::invalid_argument);
}
