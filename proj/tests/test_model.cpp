// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#include <algorithm>
#include <cstring>
#include <doctest.h>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "ftseg/errors.hpp"
#include "ftseg/gradcheck.hpp"
#include "ftseg/model.hpp"
#include "ftseg/verify.hpp"
#include "oracles.hpp"

using namespace ftseg;
using oracles::max_abs_diff;
using oracles::random_binary;
using oracles::random_tensor;

namespace {

AttentionGateParams zero_gate(int cx, int cg, int ci) {
  AttentionGateParams p;
  p.w_x = Tensor::zeros({ci, cx, 1, 1});
  p.w_g = Tensor::zeros({ci, cg, 1, 1});
  p.b_g = Tensor::zeros({ci});
  p.psi = Tensor::zeros({1, ci, 1, 1});
  p.b_psi = Tensor::zeros({1});
  return p;
}

// Layer-size bookkeeping oracle for the parameter count, written from the
// architecture description rather than the model's own registry.
int64_t parameter_count_oracle(const ModelConfig& cfg) {
  auto width = [&](int s) { return static_cast<int64_t>(cfg.base_channels) << s; };
  auto conv = [](int64_t out, int64_t in, int64_t k) { return out * in * k * k + out; };
  const bool gated = cfg.variant != Variant::kUNet;
  const bool pyramid = cfg.variant == Variant::kAttnUNetMultiInput;
  int64_t total = 0;
  for (int s = 0; s < cfg.depth; ++s) {
    const int64_t in_ch =
        s == 0 ? cfg.input_channels : width(s - 1) + (pyramid ? cfg.input_channels : 0);
    total += conv(width(s), in_ch, 3) + conv(width(s), width(s), 3);
  }
  for (int s = cfg.depth - 2; s >= 0; --s) {
    if (gated && s >= 1) {
      const int64_t ci = std::max<int64_t>(width(s) / 2, 1);
      total += ci * width(s);            // w_x, biasless
      total += ci * width(s + 1) + ci;   // w_g + b_g
      total += ci + 1;                   // psi + b_psi
    }
    total += conv(width(s), 3 * width(s), 3) + conv(width(s), width(s), 3);
    if (cfg.deep_supervision || s == 0) total += width(s) + 1;
  }
  return total;
}

}  // namespace

TEST_CASE("attention gate with zero parameters halves the query") {
  Tape tape;
  Rng rng(31);
  const Tensor xt = random_tensor(rng, {1, 4, 6, 6});
  const Tensor gt = random_tensor(rng, {1, 8, 3, 3});
  Var x = tape.leaf(xt);
  Var g = tape.leaf(gt);
  GateOutput out = attention_gate(x, g, bind_gate(tape, zero_gate(4, 8, 2)));
  REQUIRE(out.coefficients.value().shape == Shape{1, 1, 6, 6});
  for (double a : out.coefficients.value().data) CHECK(a == 0.5);
  for (size_t i = 0; i < xt.data.size(); ++i)
    CHECK(out.gated.value().data[i] == 0.5 * xt.data[i]);
}

TEST_CASE("attention gate saturates open with a large psi bias") {
  Tape tape;
  Rng rng(32);
  const Tensor xt = random_tensor(rng, {1, 4, 4, 4});
  const Tensor gt = random_tensor(rng, {1, 8, 2, 2});
  AttentionGateParams params = zero_gate(4, 8, 2);
  params.b_psi.data[0] = 100.0;
  GateOutput out = attention_gate(tape.leaf(xt), tape.leaf(gt), bind_gate(tape, params));
  CHECK(max_abs_diff(out.gated.value(), xt) == 0.0);  // sigmoid(100) rounds to 1.0
}

TEST_CASE("attention gate coefficients stay strictly inside (0,1)") {
  Tape tape;
  Rng rng(33);
  AttentionGateParams params;
  params.w_x = random_tensor(rng, {2, 4, 1, 1});
  params.w_g = random_tensor(rng, {2, 8, 1, 1});
  params.b_g = random_tensor(rng, {2});
  params.psi = random_tensor(rng, {1, 2, 1, 1});
  params.b_psi = random_tensor(rng, {1});
  GateOutput out = attention_gate(tape.leaf(random_tensor(rng, {2, 4, 8, 8})),
                                  tape.leaf(random_tensor(rng, {2, 8, 4, 4})),
                                  bind_gate(tape, params));
  for (double a : out.coefficients.value().data) {
    CHECK(a > 0.0);
    CHECK(a < 1.0);
  }

  // gated == alpha * x pixelwise, all channels sharing one alpha
  const Tensor& xv = tape.val(out.gated.id - 0);  // placeholder, value checked below
  (void)xv;
}

TEST_CASE("gated output is the coefficient-wise product across channels") {
  Tape tape;
  Rng rng(34);
  const Tensor xt = random_tensor(rng, {1, 3, 4, 4});
  const Tensor gt = random_tensor(rng, {1, 6, 2, 2});
  AttentionGateParams params;
  params.w_x = random_tensor(rng, {2, 3, 1, 1});
  params.w_g = random_tensor(rng, {2, 6, 1, 1});
  params.b_g = random_tensor(rng, {2});
  params.psi = random_tensor(rng, {1, 2, 1, 1});
  params.b_psi = random_tensor(rng, {1});
  GateOutput out = attention_gate(tape.leaf(xt), tape.leaf(gt), bind_gate(tape, params));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x)
        CHECK(out.gated.value().at4(0, c, y, x) ==
              doctest::Approx(out.coefficients.value().at4(0, 0, y, x) * xt.at4(0, c, y, x))
                  .epsilon(1e-12));
}

TEST_CASE("attention gate rejects spatial ratios other than 2:1") {
  Tape tape;
  Var x = tape.leaf(Tensor::zeros({1, 4, 8, 8}));
  Var g_same = tape.leaf(Tensor::zeros({1, 8, 8, 8}));
  Var g_quarter = tape.leaf(Tensor::zeros({1, 8, 2, 2}));
  auto params = bind_gate(tape, zero_gate(4, 8, 2));
  CHECK_THROWS_AS(attention_gate(x, g_same, params), std::invalid_argument);
  CHECK_THROWS_AS(attention_gate(x, g_quarter, params), std::invalid_argument);
}

TEST_CASE("attention gate gradcheck") {
  const ScopeReport report = verify_gate(/*seed=*/5, /*trials=*/5);
  CHECK_MESSAGE(report.pass, report.worst);
}

TEST_CASE("parameter count matches the bookkeeping oracle") {
  ModelConfig cfg;
  cfg.variant = Variant::kUNet;
  cfg.depth = 2;
  cfg.base_channels = 4;
  cfg.input_channels = 1;
  Model m = Model::build(cfg);
  CHECK(m.parameter_count() == parameter_count_oracle(cfg));
  CHECK(m.parameter_count() == 1657);  // frozen closed-form value

  for (Variant v : {Variant::kUNet, Variant::kAttnUNet, Variant::kAttnUNetMultiInput}) {
    for (bool ds : {false, true}) {
      ModelConfig c;
      c.variant = v;
      c.depth = 4;
      c.base_channels = 8;
      c.input_channels = 3;
      c.deep_supervision = ds;
      CHECK(Model::build(c).parameter_count() == parameter_count_oracle(c));
    }
  }
}

TEST_CASE("same seed builds bit-identical parameters") {
  ModelConfig cfg;
  cfg.variant = Variant::kAttnUNetMultiInput;
  cfg.depth = 3;
  cfg.base_channels = 4;
  cfg.seed = 99;
  Model a = Model::build(cfg);
  Model b = Model::build(cfg);
  REQUIRE(a.parameters().size() == b.parameters().size());
  for (size_t i = 0; i < a.parameters().size(); ++i) {
    const auto& pa = a.parameters()[i].value;
    const auto& pb = b.parameters()[i].value;
    CHECK(std::memcmp(pa.data.data(), pb.data.data(), pa.data.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("gate and head counts follow depth") {
  ModelConfig cfg;
  cfg.variant = Variant::kAttnUNet;
  cfg.depth = 4;
  cfg.base_channels = 2;
  cfg.deep_supervision = true;
  Model m = Model::build(cfg);
  CHECK(m.attention_gate_count() == 2);  // depth-2, first skip ungated
  CHECK(m.head_count() == 3);            // depth-1 decoder scales

  cfg.deep_supervision = false;
  CHECK(Model::build(cfg).head_count() == 1);

  cfg.variant = Variant::kUNet;
  CHECK(Model::build(cfg).attention_gate_count() == 0);

  cfg.depth = 1;
  CHECK_THROWS_AS(Model::build(cfg), std::invalid_argument);
  cfg.depth = 3;
  cfg.base_channels = 0;
  CHECK_THROWS_AS(Model::build(cfg), std::invalid_argument);
  CHECK_THROWS_AS(variant_from_string("resnet"), std::invalid_argument);
}

TEST_CASE("forward emits per-scale heads in [0,1], coarsest first") {
  ModelConfig cfg;
  cfg.variant = Variant::kAttnUNetMultiInput;
  cfg.depth = 3;
  cfg.base_channels = 4;
  cfg.deep_supervision = true;
  cfg.seed = 3;
  Model m = Model::build(cfg);
  Rng rng(35);
  const auto heads = m.predict(random_tensor(rng, {1, 1, 32, 32}, 0.0, 1.0));
  REQUIRE(heads.size() == 2);  // depth-1 decoder scales carry heads
  CHECK(heads[0].shape == Shape{1, 1, 16, 16});
  CHECK(heads[1].shape == Shape{1, 1, 32, 32});
  for (const Tensor& h : heads)
    for (double v : h.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
}

TEST_CASE("zeroed head parameters emit 0.5 everywhere") {
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 2;
  Model m = Model::build(cfg);
  for (Parameter& p : m.parameters())
    if (p.name.rfind("head", 0) == 0) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
  const auto heads = m.predict(Tensor::zeros({1, 1, 8, 8}));
  for (double v : heads.back().data) CHECK(v == 0.5);
}

TEST_CASE("forward rejects incompatible batches, naming the required multiple") {
  ModelConfig cfg;
  cfg.depth = 3;
  cfg.base_channels = 2;
  Model m = Model::build(cfg);
  CHECK_THROWS_WITH_AS(m.predict(Tensor::zeros({1, 1, 18, 18})),
                       doctest::Contains("multiple of 4"), IncompatibleError);
  CHECK_THROWS_AS(m.predict(Tensor::zeros({1, 3, 16, 16})), IncompatibleError);
}

TEST_CASE("forward is deterministic") {
  ModelConfig cfg;
  cfg.variant = Variant::kAttnUNetMultiInput;
  cfg.depth = 3;
  cfg.base_channels = 4;
  cfg.deep_supervision = true;
  cfg.seed = 17;
  Model m = Model::build(cfg);
  Rng rng(36);
  const Tensor batch = random_tensor(rng, {2, 1, 16, 16}, 0.0, 1.0);
  const auto h1 = m.predict(batch);
  const auto h2 = m.predict(batch);
  for (size_t i = 0; i < h1.size(); ++i)
    CHECK(std::memcmp(h1[i].data.data(), h2[i].data.data(),
                      h1[i].data.size() * sizeof(double)) == 0);
}

TEST_CASE("multi-input variant collapses onto the plain U-Net when neutralized") {
  ModelConfig base;
  base.depth = 3;
  base.base_channels = 4;
  base.input_channels = 1;
  base.seed = 21;
  base.deep_supervision = false;

  ModelConfig plain_cfg = base;
  plain_cfg.variant = Variant::kUNet;
  Model plain = Model::build(plain_cfg);

  ModelConfig multi_cfg = base;
  multi_cfg.variant = Variant::kAttnUNetMultiInput;
  Model multi = Model::build(multi_cfg);

  std::map<std::string, const Tensor*> plain_params;
  for (const Parameter& p : plain.parameters()) plain_params[p.name] = &p.value;

  for (Parameter& p : multi.parameters()) {
    auto it = plain_params.find(p.name);
    if (it == plain_params.end()) {
      // gate parameters: force alpha == 1 exactly
      std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
      if (p.name.find("b_psi") != std::string::npos) p.value.data[0] = 100.0;
      continue;
    }
    const Tensor& src = *it->second;
    if (p.value.shape == src.shape) {
      p.value.data = src.data;
    } else {
      // encoder conv over [features | pyramid]: copy the feature slice and
      // zero the pyramid channels
      REQUIRE(p.value.ndim() == 4);
      REQUIRE(src.ndim() == 4);
      REQUIRE(p.value.dim(0) == src.dim(0));
      std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
      const int o = src.dim(0), ci = src.dim(1), kh = src.dim(2), kw = src.dim(3);
      for (int oi = 0; oi < o; ++oi)
        for (int c = 0; c < ci; ++c)
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx)
              p.value.at4(oi, c, ky, kx) = src.at4(oi, c, ky, kx);
    }
  }

  Rng rng(37);
  const Tensor batch = random_tensor(rng, {1, 1, 16, 16}, 0.0, 1.0);
  const Tensor plain_out = plain.predict(batch).back();
  const Tensor multi_out = multi.predict(batch).back();
  CHECK(max_abs_diff(plain_out, multi_out) < 1e-10);
}

TEST_CASE("end-to-end gradcheck of the deep-supervision loss") {
  const ScopeReport report = verify_model(/*seed=*/1, /*trials=*/1);
  CHECK_MESSAGE(report.pass, report.worst);
  CHECK(report.tol == 1e-3);
}

TEST_CASE("mask downsampling preserves lesions") {
  // all-zero stays all-zero at every scale
  Tensor zeros = Tensor::zeros({1, 1, 8, 8});
  for (int f : {1, 2, 4, 8})
    for (double v : downsample_mask(zeros, f).data) CHECK(v == 0.0);

  // a single positive pixel survives at every scale as exactly one pixel
  Tensor single = Tensor::zeros({1, 1, 8, 8});
  single.at4(0, 0, 5, 6) = 1.0;
  for (int f : {1, 2, 4, 8}) {
    const Tensor down = downsample_mask(single, f);
    double total = 0.0;
    for (double v : down.data) total += v;
    CHECK(total == 1.0);
  }

  // random masks match the window-scan oracle
  Rng rng(38);
  for (int t = 0; t < 20; ++t) {
    const Tensor mask = random_binary(rng, {2, 1, 8, 8}, 0.2);
    for (int f : {2, 4})
      CHECK(max_abs_diff(downsample_mask(mask, f), oracles::mask_downsample_naive(mask, f)) == 0.0);
  }

  Tensor soft = Tensor::full({1, 1, 4, 4}, 0.5);
  CHECK_THROWS_AS(downsample_mask(soft, 2), std::invalid_argument);
  CHECK_THROWS_AS(downsample_mask(zeros, 3), std::invalid_argument);
}

TEST_CASE("checkpoint round trip is bit exact") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "ftseg_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();

  ModelConfig cfg;
  cfg.variant = Variant::kAttnUNetMultiInput;
  cfg.depth = 3;
  cfg.base_channels = 4;
  cfg.deep_supervision = true;
  cfg.input_channels = 1;
  cfg.seed = 1234;
  Model m = Model::build(cfg);
  // perturb away from the seeded init so the file content is non-trivial
  Rng rng(39);
  for (Parameter& p : m.parameters())
    for (double& v : p.value.data) v += rng.uniform(-0.01, 0.01);
  m.save(path);

  Model loaded = Model::load(path);
  CHECK(loaded.config().variant == cfg.variant);
  CHECK(loaded.config().depth == cfg.depth);
  CHECK(loaded.config().base_channels == cfg.base_channels);
  CHECK(loaded.config().deep_supervision == cfg.deep_supervision);
  CHECK(loaded.config().seed == cfg.seed);
  REQUIRE(loaded.parameters().size() == m.parameters().size());
  for (size_t i = 0; i < m.parameters().size(); ++i) {
    const auto& a = m.parameters()[i].value;
    const auto& b = loaded.parameters()[i].value;
    CHECK(m.parameters()[i].name == loaded.parameters()[i].name);
    REQUIRE(a.shape == b.shape);
    CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0);
  }

  Rng rng2(40);
  const Tensor batch = random_tensor(rng2, {1, 1, 16, 16}, 0.0, 1.0);
  CHECK(max_abs_diff(m.predict(batch).back(), loaded.predict(batch).back()) == 0.0);

  CHECK_THROWS_AS(Model::load((dir / "missing.ckpt").string()), std::runtime_error);
  const std::string junk = (dir / "junk.ckpt").string();
  {
    std::ofstream out(junk);
    out << "not a checkpoint\n";
  }
  CHECK_THROWS_AS(Model::load(junk), IncompatibleError);
  fs::remove_all(dir);
}
