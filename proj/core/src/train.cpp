// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#include "ftseg/train.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "ftseg/errors.hpp"
#include "ftseg/rng.hpp"

namespace ftseg {

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "dl") return LossKind::kDice;
  if (name == "tl") return LossKind::kTversky;
  if (name == "ftl") return LossKind::kFocalTversky;
  throw std::invalid_argument("unknown loss kind '" + name + "' (expected dl|tl|ftl)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kDice: return "dl";
    case LossKind::kTversky: return "tl";
    case LossKind::kFocalTversky: return "ftl";
  }
  throw std::invalid_argument("invalid loss kind value");
}

void TrainConfig::validate() const {
  // lr 0 is allowed: it makes training a (useful) no-op for determinism checks
  if (!(learning_rate >= 0.0))
    throw std::invalid_argument("train: learning_rate must be >= 0, got " +
                                std::to_string(learning_rate));
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw std::invalid_argument("train: momentum must lie in [0,1), got " +
                                std::to_string(momentum));
  if (decay < 0.0) throw std::invalid_argument("train: decay must be >= 0");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1, got " + std::to_string(epochs));
  if (batch_size < 1)
    throw std::invalid_argument("train: batch_size must be >= 1, got " + std::to_string(batch_size));
  loss_cfg.validate();
}

double learning_rate_at(const TrainConfig& cfg, int epoch) {
  return cfg.learning_rate / (1.0 + cfg.decay * epoch);
}

void sgd_momentum_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
                       std::vector<Tensor>& velocity, const TrainConfig& cfg, int epoch) {
  if (params.size() != grads.size())
    throw std::invalid_argument("sgd: " + std::to_string(params.size()) + " params vs " +
                                std::to_string(grads.size()) + " grads");
  if (velocity.empty()) {
    velocity.reserve(params.size());
    for (const Tensor* p : params) velocity.emplace_back(p->shape);
  }
  if (velocity.size() != params.size())
    throw std::invalid_argument("sgd: velocity buffer count mismatch");
  const double lr = learning_rate_at(cfg, epoch);
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& v = velocity[i];
    check_shapes(p.shape == g.shape && p.shape == v.shape,
                 "sgd: shape mismatch at parameter " + std::to_string(i) + ": param " +
                     shape_str(p.shape) + ", grad " + shape_str(g.shape) + ", velocity " +
                     shape_str(v.shape));
    for (size_t j = 0; j < p.data.size(); ++j) {
      v.data[j] = cfg.momentum * v.data[j] - lr * g.data[j];
      p.data[j] += v.data[j];
    }
  }
}

Var training_loss_node(std::span<const Var> heads, std::span<const Tensor> targets, LossKind kind,
                       const LossConfig& cfg) {
  check_shapes(!heads.empty() && heads.size() == targets.size(),
               "training loss: " + std::to_string(heads.size()) + " heads vs " +
                   std::to_string(targets.size()) + " targets");
  Tape& tape = *heads[0].tape;
  if (kind == LossKind::kFocalTversky) {
    std::vector<Var> target_vars;
    target_vars.reserve(targets.size());
    for (const Tensor& t : targets) target_vars.push_back(tape.leaf(t));
    return deep_supervision_loss_node(heads, target_vars, cfg);
  }
  Var total;
  for (size_t s = 0; s < heads.size(); ++s) {
    Var target = tape.leaf(targets[s]);
    Var term = kind == LossKind::kDice ? dice_loss_node(heads[s], target, cfg)
                                       : tversky_loss_node(heads[s], target, cfg);
    total = total.valid() ? add(total, term) : term;
  }
  return total;
}

namespace {

// Stacks samples[idx[begin..end)] into image/mask batches.
std::pair<Tensor, Tensor> stack_batch(std::span<const Sample> samples,
                                      std::span<const size_t> order, size_t begin, size_t end) {
  const Tensor& first_img = samples[order[begin]].image;
  const Tensor& first_mask = samples[order[begin]].mask;
  const int b = static_cast<int>(end - begin);
  Tensor images({b, first_img.dim(0), first_img.dim(1), first_img.dim(2)});
  Tensor masks({b, 1, first_mask.dim(1), first_mask.dim(2)});
  for (size_t i = begin; i < end; ++i) {
    const Sample& s = samples[order[i]];
    check_shapes(s.image.shape == first_img.shape && s.mask.shape == first_mask.shape,
                 "batch: sample '" + s.id + "' shape differs from the rest of the batch");
    std::copy(s.image.data.begin(), s.image.data.end(),
              images.data.begin() + static_cast<int64_t>(i - begin) * first_img.size());
    std::copy(s.mask.data.begin(), s.mask.data.end(),
              masks.data.begin() + static_cast<int64_t>(i - begin) * first_mask.size());
  }
  return {std::move(images), std::move(masks)};
}

std::vector<Tensor> head_targets(const Tensor& masks, std::span<const Var> heads) {
  std::vector<Tensor> targets;
  targets.reserve(heads.size());
  for (const Var& head : heads) {
    const int factor = masks.dim(2) / head.value().dim(2);
    targets.push_back(downsample_mask(masks, factor));
  }
  return targets;
}

}  // namespace

History train_model(Model& model, std::span<const Sample> train_set,
                    std::span<const Sample> val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: dataset is empty");

  History history;
  std::vector<Tensor> velocity;
  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Tape tape;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle = Rng::keyed(cfg.seed, 0x5u ^ (static_cast<uint64_t>(epoch) << 8));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(shuffle.below(i))]);

    double loss_total = 0.0;
    int batches = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
      auto [images, masks] = stack_batch(train_set, order, begin, end);

      tape.clear();
      Model::Bound bound = model.forward(tape, images);
      const std::vector<Tensor> targets = head_targets(masks, bound.heads);
      Var loss = training_loss_node(bound.heads, targets, cfg.loss, cfg.loss_cfg);
      const double loss_value = loss.value().data[0];
      if (!std::isfinite(loss_value))
        throw TrainAbortError("non-finite training loss", epoch, batches);
      tape.backward(loss);

      auto& params = model.parameters();
      std::vector<Tensor*> param_ptrs(params.size());
      std::vector<const Tensor*> grad_ptrs(params.size());
      for (size_t i = 0; i < params.size(); ++i) {
        param_ptrs[i] = &params[i].value;
        grad_ptrs[i] = &bound.params[i].grad();
      }
      sgd_momentum_step(param_ptrs, grad_ptrs, velocity, cfg, epoch);

      loss_total += loss_value;
      ++batches;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_total / batches;
    record.learning_rate = learning_rate_at(cfg, epoch);
    record.val_dice = val_set.empty() ? std::numeric_limits<double>::quiet_NaN()
                                      : evaluate(model, val_set).dice;
    history.records.push_back(record);
  }
  return history;
}

EvalResult evaluate_masks(std::span<const Tensor> predictions, std::span<const Tensor> masks,
                          double threshold) {
  if (predictions.empty() || predictions.size() != masks.size())
    throw std::invalid_argument("evaluate: " + std::to_string(predictions.size()) +
                                " predictions vs " + std::to_string(masks.size()) + " masks");
  constexpr double kEps = 1e-8;
  EvalResult result;
  for (size_t img = 0; img < predictions.size(); ++img) {
    const Tensor& prediction = predictions[img];
    const Tensor& mask = masks[img];
    check_shapes(prediction.size() == mask.size(),
                 "evaluate: prediction " + shape_str(prediction.shape) + " vs mask " +
                     shape_str(mask.shape));
    double tp = 0.0, fp = 0.0, fn = 0.0;
    for (int64_t i = 0; i < prediction.size(); ++i) {
      const bool pred = prediction.data[static_cast<size_t>(i)] > threshold;
      const bool truth = mask.data[static_cast<size_t>(i)] != 0.0;
      if (pred && truth)
        tp += 1.0;
      else if (pred && !truth)
        fp += 1.0;
      else if (!pred && truth)
        fn += 1.0;
    }
    result.dice += 2.0 * tp / (2.0 * tp + fp + fn + kEps);
    result.precision += tp / (tp + fp + kEps);
    result.recall += tp / (tp + fn + kEps);
    ++result.n_images;
  }
  result.dice /= result.n_images;
  result.precision /= result.n_images;
  result.recall /= result.n_images;
  return result;
}

EvalResult evaluate(const Model& model, std::span<const Sample> samples, double threshold) {
  if (samples.empty()) throw std::invalid_argument("evaluate: dataset is empty");
  std::vector<Tensor> predictions, masks;
  predictions.reserve(samples.size());
  masks.reserve(samples.size());
  for (const Sample& s : samples) {
    Tensor batch({1, s.image.dim(0), s.image.dim(1), s.image.dim(2)});
    batch.data = s.image.data;
    predictions.push_back(model.predict(batch).back());
    masks.push_back(s.mask);
  }
  return evaluate_masks(predictions, masks, threshold);
}

Metrics aggregate_folds(std::span<const EvalResult> folds) {
  if (folds.empty()) throw std::invalid_argument("aggregate: no folds");
  auto summarize = [&](auto pick) {
    MetricSummary s;
    for (const EvalResult& f : folds) s.mean += pick(f);
    s.mean /= static_cast<double>(folds.size());
    double var = 0.0;
    for (const EvalResult& f : folds) {
      const double d = pick(f) - s.mean;
      var += d * d;
    }
    s.stddev = std::sqrt(var / static_cast<double>(folds.size()));
    return s;
  };
  Metrics m;
  m.dice = summarize([](const EvalResult& f) { return f.dice; });
  m.precision = summarize([](const EvalResult& f) { return f.precision; });
  m.recall = summarize([](const EvalResult& f) { return f.recall; });
  m.n_folds = static_cast<int>(folds.size());
  return m;
}

Metrics cross_validate(const ModelFactory& factory, std::span<const Sample> dataset,
                       const SplitSpec& spec, const TrainConfig& cfg) {
  const SplitResult held_out = split(dataset, spec);
  const std::vector<Fold> folds = kfold(held_out.train, spec.folds, spec.seed);
  std::vector<EvalResult> results;
  results.reserve(folds.size());
  for (size_t f = 0; f < folds.size(); ++f) {
    const uint64_t fold_seed = Rng::mix64(cfg.seed ^ (0x9E3779B97F4A7C15ULL * (f + 1)));
    Model model = factory(fold_seed);
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = fold_seed;
    train_model(model, folds[f].train, {}, fold_cfg);
    results.push_back(evaluate(model, held_out.test));
  }
  return aggregate_folds(results);
}

std::string format_loss_parameters(LossKind kind, const LossConfig& cfg) {
  auto trim = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return std::string(buf);
  };
  std::string s = "alpha=" + trim(cfg.alpha) + " beta=" + trim(cfg.beta);
  if (kind == LossKind::kFocalTversky) {
    // gamma 4/3 renders as the fraction, everything else as a plain number
    if (std::abs(cfg.gamma - 4.0 / 3.0) < 1e-12)
      s += " gamma=4/3";
    else
      s += " gamma=" + trim(cfg.gamma);
  }
  return s;
}

std::vector<AblationRow> default_ablation_grid(const ModelConfig& base_model,
                                               const TrainConfig& base_train) {
  struct RowSpec {
    const char* label;
    Variant variant;
    LossKind loss;
  };
  const RowSpec rows[7] = {
      {"unet+dl", Variant::kUNet, LossKind::kDice},
      {"unet+tl", Variant::kUNet, LossKind::kTversky},
      {"unet+ftl", Variant::kUNet, LossKind::kFocalTversky},
      {"attn+dl", Variant::kAttnUNet, LossKind::kDice},
      {"attn_multi+dl", Variant::kAttnUNetMultiInput, LossKind::kDice},
      {"attn_multi+tl", Variant::kAttnUNetMultiInput, LossKind::kTversky},
      {"attn_multi+ftl", Variant::kAttnUNetMultiInput, LossKind::kFocalTversky},
  };
  std::vector<AblationRow> grid;
  grid.reserve(7);
  for (const RowSpec& spec : rows) {
    AblationRow row;
    row.label = spec.label;
    row.model = base_model;
    row.model.variant = spec.variant;
    row.model.deep_supervision = spec.variant == Variant::kAttnUNetMultiInput;
    row.train = base_train;
    row.train.loss = spec.loss;
    if (spec.loss == LossKind::kDice) {
      row.train.loss_cfg.alpha = 0.5;
      row.train.loss_cfg.beta = 0.5;
    } else {
      row.train.loss_cfg.alpha = 0.7;
      row.train.loss_cfg.beta = 0.3;
    }
    row.train.loss_cfg.gamma = 4.0 / 3.0;
    row.parameters = format_loss_parameters(spec.loss, row.train.loss_cfg);
    grid.push_back(std::move(row));
  }
  return grid;
}

std::vector<AblationResult> run_ablation(std::span<const Sample> dataset,
                                         std::span<const AblationRow> grid, const SplitSpec& spec,
                                         const TrainConfig& /*base*/, int jobs) {
  if (grid.empty()) throw std::invalid_argument("ablation: empty grid");
  std::vector<AblationResult> results(grid.size());
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  run_indexed_jobs(static_cast<int>(grid.size()), jobs, [&](int i) {
    if (failed.load()) return;
    try {
      const AblationRow& row = grid[static_cast<size_t>(i)];
      ModelFactory factory = [&row](uint64_t seed) {
        ModelConfig cfg = row.model;
        cfg.seed = seed;
        return Model::build(cfg);
      };
      results[static_cast<size_t>(i)] = {row, cross_validate(factory, dataset, spec, row.train)};
    } catch (...) {
      bool expected = false;
      if (failed.compare_exchange_strong(expected, true)) first_error = std::current_exception();
    }
  });
  if (failed.load()) std::rethrow_exception(first_error);
  return results;
}

std::string format_fixed(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  return buf;
}

void write_history_csv(std::ostream& out, const History& history) {
  out << "epoch,train_loss,val_dice,learning_rate\n";
  for (const EpochRecord& r : history.records) {
    out << r.epoch << ',' << format_fixed(r.train_loss) << ',' << format_fixed(r.val_dice) << ','
        << format_fixed(r.learning_rate) << '\n';
  }
}

void write_ablation_csv(std::ostream& out, std::span<const AblationResult> results) {
  out << "model,parameters,dice_mean,dice_std,precision_mean,precision_std,recall_mean,"
         "recall_std\n";
  for (const AblationResult& r : results) {
    out << r.row.label << ',' << r.row.parameters << ',' << format_fixed(r.metrics.dice.mean)
        << ',' << format_fixed(r.metrics.dice.stddev) << ','
        << format_fixed(r.metrics.precision.mean) << ',' << format_fixed(r.metrics.precision.stddev)
        << ',' << format_fixed(r.metrics.recall.mean) << ',' << format_fixed(r.metrics.recall.stddev)
        << '\n';
  }
}

void run_indexed_jobs(int count, int jobs, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(jobs));
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

}  // namespace ftseg
