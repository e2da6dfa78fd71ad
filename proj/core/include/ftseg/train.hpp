// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ftseg/data.hpp"
#include "ftseg/losses.hpp"
#include "ftseg/model.hpp"

namespace ftseg {

enum class LossKind { kDice, kTversky, kFocalTversky };

LossKind loss_kind_from_string(const std::string& name);  // dl | tl | ftl
std::string to_string(LossKind kind);

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double decay = 1e-6;  // per-epoch inverse-time decay
  int epochs = 1;
  int batch_size = 8;
  LossKind loss = LossKind::kFocalTversky;
  LossConfig loss_cfg;
  uint64_t seed = 0;

  void validate() const;
};

/// lr(epoch) = lr0 / (1 + decay*epoch); non-increasing, lr(0) = lr0.
double learning_rate_at(const TrainConfig& cfg, int epoch);

/// v <- momentum*v - lr(epoch)*grad; p <- p + v. Velocity buffers are
/// created on first use and must keep their shape afterwards.
void sgd_momentum_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
                       std::vector<Tensor>& velocity, const TrainConfig& cfg, int epoch);

/// Batch loss: the selected loss per head, summed over heads, except that
/// the focal Tversky kind supervises the final (finest) head with the plain
/// Tversky loss. A single head gets the selected loss directly.
Var training_loss_node(std::span<const Var> heads, std::span<const Tensor> targets, LossKind kind,
                       const LossConfig& cfg);

struct EpochRecord {
  int epoch;
  double train_loss;     // mean batch loss over the epoch
  double val_dice;       // NaN when no validation samples were supplied
  double learning_rate;
};

struct History {
  std::vector<EpochRecord> records;
};

/// SGD-with-momentum epoch loop: deterministic reshuffle per (seed, epoch),
/// mini-batches (final short batch kept), forward, loss, backward, step.
/// Aborts with TrainAbortError on a non-finite loss.
History train_model(Model& model, std::span<const Sample> train_set,
                    std::span<const Sample> val_set, const TrainConfig& cfg);

struct EvalResult {
  double dice = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  int n_images = 0;
};

/// Pixel metrics of the final head against the mask, binarized at the
/// threshold, averaged per image. The 1e-8 denominators keep empty
/// predictions and masks defined.
EvalResult evaluate(const Model& model, std::span<const Sample> samples, double threshold = 0.5);

/// The same metric arithmetic on precomputed probability maps; one
/// prediction/mask pair per image.
EvalResult evaluate_masks(std::span<const Tensor> predictions, std::span<const Tensor> masks,
                          double threshold = 0.5);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population std
};

struct Metrics {
  MetricSummary dice, precision, recall;
  int n_folds = 0;
};

Metrics aggregate_folds(std::span<const EvalResult> folds);

using ModelFactory = std::function<Model(uint64_t seed)>;

/// Hold out the test split once, k-fold the training portion, train a fresh
/// model per fold (fold index mixed into the seed) and evaluate each on the
/// held-out test split; folds aggregate to mean +/- population std.
Metrics cross_validate(const ModelFactory& factory, std::span<const Sample> dataset,
                       const SplitSpec& spec, const TrainConfig& cfg);

struct AblationRow {
  std::string label;
  ModelConfig model;
  TrainConfig train;
  std::string parameters;  // rendered alpha/beta/gamma column
};

struct AblationResult {
  AblationRow row;
  Metrics metrics;
};

/// The 7-row grid: unet+dl, unet+tl, unet+ftl, attn+dl, attn_multi+dl,
/// attn_multi+tl, attn_multi+ftl. Dice rows run alpha=beta=0.5; the Tversky
/// and focal rows 0.7/0.3, focal gamma 4/3. Deep supervision is on for the
/// multi-input rows.
std::vector<AblationRow> default_ablation_grid(const ModelConfig& base_model,
                                               const TrainConfig& base_train);

std::string format_loss_parameters(LossKind kind, const LossConfig& cfg);

/// Runs cross_validate per row; rows may execute in parallel (jobs > 1)
/// with results assembled in grid order, so output is independent of jobs.
std::vector<AblationResult> run_ablation(std::span<const Sample> dataset,
                                         std::span<const AblationRow> grid, const SplitSpec& spec,
                                         const TrainConfig&, int jobs = 1);

// CSV emission: comma-delimited, header row, LF endings, %.6f numerics.
void write_history_csv(std::ostream& out, const History& history);
void write_ablation_csv(std::ostream& out, std::span<const AblationResult> results);
std::string format_fixed(double value);  // %.6f

/// Runs fn(0..count-1) over `jobs` worker threads. Tasks must be isolated;
/// results must be written to caller-owned slots by index.
void run_indexed_jobs(int count, int jobs, const std::function<void(int)>& fn);

}  // namespace ftseg
