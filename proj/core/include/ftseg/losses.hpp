// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <span>
#include <vector>

#include "ftseg/tape.hpp"
#include "ftseg/tensor.hpp"

namespace ftseg {

/// How the focal parameter gamma turns into the exponent applied to (1-TI).
/// kAsPrinted uses 1/gamma (so gamma=4/3 gives exponent 3/4); kDirect uses
/// gamma itself. kAsPrinted is the default; see README for why both exist.
enum class ExponentConvention { kAsPrinted, kDirect };

/// Hyperparameters of the overlap-loss family. alpha weights false
/// negatives, beta false positives; the shipped presets are 0.7/0.3 and
/// 0.5/0.5. epsilon is the stability constant added to both numerator and
/// denominator of every index.
struct LossConfig {
  double alpha = 0.7;
  double beta = 0.3;
  double gamma = 4.0 / 3.0;
  double epsilon = 1e-6;
  ExponentConvention exponent_convention = ExponentConvention::kAsPrinted;

  double focal_exponent() const {
    return exponent_convention == ExponentConvention::kAsPrinted ? 1.0 / gamma : gamma;
  }
  /// alpha/beta in [0,1], gamma in [1,3], epsilon > 0.
  void validate() const;
  void validate_gamma() const;
};

/// Foreground probabilities p in [0,1] against binary ground truth g, same
/// shape. The complement class is derived as 1-p / 1-g, never stored.
struct PredictionPair {
  Tensor p;
  Tensor g;
  PredictionPair(Tensor p, Tensor g);
};

// --- scalar evaluations (plain accumulation, no tape) ---------------------

/// (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps).
double dice_score(const PredictionPair& pair, double epsilon);
/// Same but without the conventional factor 2 in the numerator; kept only as
/// a compatibility curiosity (perfect overlap scores 1/2), never trained on.
double dice_score_as_printed(const PredictionPair& pair, double epsilon);
double dice_loss(const PredictionPair& pair, const LossConfig& cfg);
/// (sum(p*g)+eps) / (sum(p*g) + alpha*sum((1-p)*g) + beta*sum(p*(1-g)) + eps).
double tversky_index(const PredictionPair& pair, const LossConfig& cfg);
double tversky_loss(const PredictionPair& pair, const LossConfig& cfg);
/// (1 - TI)^e, base clamped to [0,1]; e per the configured convention.
/// Identical to tversky_loss, bit for bit, when the exponent is 1.
double focal_tversky_loss(const PredictionPair& pair, const LossConfig& cfg);
/// The focal mapping alone, for tabulating the loss-vs-TI family.
double focal_loss_from_ti(double ti, const LossConfig& cfg);

/// Deep-supervision combiner: unit-weight sum of the focal Tversky loss over
/// every non-final scale plus the plain Tversky loss on the final scale, so
/// a strong error signal survives near convergence. A single output
/// degenerates to the Tversky loss alone. Scales are ordered finest last.
double deep_supervision_loss(std::span<const Tensor> outputs, std::span<const Tensor> targets,
                             const LossConfig& cfg);

// --- differentiable (tape) versions ----------------------------------------

Var dice_score_node(const Var& p, const Var& g, double epsilon);
Var dice_loss_node(const Var& p, const Var& g, const LossConfig& cfg);
Var tversky_index_node(const Var& p, const Var& g, const LossConfig& cfg);
Var tversky_loss_node(const Var& p, const Var& g, const LossConfig& cfg);
Var focal_tversky_loss_node(const Var& p, const Var& g, const LossConfig& cfg);
Var deep_supervision_loss_node(std::span<const Var> outputs, std::span<const Var> targets,
                               const LossConfig& cfg);

// --- loss-vs-TI curve table --------------------------------------------------

struct CurvePoint {
  double ti;
  double gamma;
  double loss;
};

/// Samples TI at resolution+1 equispaced points of [0,1] (endpoints
/// included) and tabulates the focal loss for each gamma, gamma-major.
std::vector<CurvePoint> focal_curve(std::span<const double> gammas, int resolution,
                                    const LossConfig& base);

}  // namespace ftseg
