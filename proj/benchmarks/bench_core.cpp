// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#include <benchmark/benchmark.h>

#include "ftseg/data.hpp"
#include "ftseg/losses.hpp"
#include "ftseg/model.hpp"
#include "ftseg/rng.hpp"
#include "ftseg/tape.hpp"
#include "ftseg/train.hpp"

using namespace ftseg;

namespace {

Tensor random_tensor(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  Rng rng(1);
  const Tensor input = random_tensor(rng, {1, 16, size, size});
  const Tensor kernel = random_tensor(rng, {16, 16, 3, 3});
  const Tensor bias = random_tensor(rng, {16});
  for (auto _ : state) {
    Tape tape;
    Var y = conv2d(tape.leaf(input), tape.leaf(kernel), tape.leaf(bias), Padding::kSame);
    benchmark::DoNotOptimize(y.value().data.data());
  }
  state.SetItemsProcessed(state.iterations() * 16 * 16 * 9 * int64_t{size} * size);
}
BENCHMARK(BM_Conv2dForward)->Arg(16)->Arg(32)->Arg(64);

void BM_Conv2dTrainStep(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  Rng rng(2);
  const Tensor input = random_tensor(rng, {1, 16, size, size});
  const Tensor kernel = random_tensor(rng, {16, 16, 3, 3});
  const Tensor bias = random_tensor(rng, {16});
  for (auto _ : state) {
    Tape tape;
    Var k = tape.leaf(kernel);
    Var y = sum(relu(conv2d(tape.leaf(input), k, tape.leaf(bias), Padding::kSame)));
    tape.backward(y);
    benchmark::DoNotOptimize(k.grad().data.data());
  }
}
BENCHMARK(BM_Conv2dTrainStep)->Arg(32)->Arg(64);

void BM_ModelForward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.variant = Variant::kAttnUNetMultiInput;
  cfg.depth = 3;
  cfg.base_channels = 8;
  cfg.deep_supervision = true;
  cfg.seed = 3;
  const Model model = Model::build(cfg);
  Rng rng(4);
  const Tensor batch = random_tensor(rng, {1, 1, 64, 64}, 0.0, 1.0);
  for (auto _ : state) {
    auto heads = model.predict(batch);
    benchmark::DoNotOptimize(heads.back().data.data());
  }
}
BENCHMARK(BM_ModelForward);

void BM_TrainStep64(benchmark::State& state) {
  SyntheticConfig data_cfg = bus_like_preset();
  data_cfg.count = 8;
  data_cfg.seed = 5;
  const auto samples = generate_synthetic(data_cfg);
  ModelConfig cfg;
  cfg.variant = Variant::kAttnUNetMultiInput;
  cfg.depth = 3;
  cfg.base_channels = 8;
  cfg.deep_supervision = true;
  cfg.seed = 6;
  Model model = Model::build(cfg);
  TrainConfig train_cfg;
  train_cfg.epochs = 1;
  train_cfg.batch_size = 8;
  for (auto _ : state) {
    train_model(model, samples, {}, train_cfg);
  }
}
BENCHMARK(BM_TrainStep64)->Unit(benchmark::kMillisecond);

void BM_FocalTverskyLoss(benchmark::State& state) {
  Rng rng(7);
  Tensor p = random_tensor(rng, {8, 1, 64, 64}, 0.0, 1.0);
  Tensor g(p.shape);
  for (double& v : g.data) v = rng.uniform() < 0.1 ? 1.0 : 0.0;
  const PredictionPair pair(std::move(p), std::move(g));
  const LossConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(focal_tversky_loss(pair, cfg));
  }
}
BENCHMARK(BM_FocalTverskyLoss);

void BM_SynthSample(benchmark::State& state) {
  SyntheticConfig cfg = bus_like_preset();
  cfg.count = 1;
  int index = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_sample(cfg, index++));
  }
}
BENCHMARK(BM_SynthSample);

}  // namespace

BENCHMARK_MAIN();
