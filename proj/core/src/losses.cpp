// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#include "ftseg/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace ftseg {

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("loss: alpha must lie in [0,1], got " + std::to_string(alpha));
  if (!(beta >= 0.0 && beta <= 1.0))
    throw std::invalid_argument("loss: beta must lie in [0,1], got " + std::to_string(beta));
  if (!(epsilon > 0.0))
    throw std::invalid_argument("loss: epsilon must be positive, got " + std::to_string(epsilon));
  validate_gamma();
}

void LossConfig::validate_gamma() const {
  if (!(gamma >= 1.0 && gamma <= 3.0))
    throw std::invalid_argument("loss: gamma must lie in [1,3], got " + std::to_string(gamma));
}

PredictionPair::PredictionPair(Tensor p_in, Tensor g_in) : p(std::move(p_in)), g(std::move(g_in)) {
  check_shapes(p.shape == g.shape, "prediction pair: shapes differ, " + shape_str(p.shape) +
                                       " vs " + shape_str(g.shape));
  for (double v : p.data)
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument("prediction pair: probability " + std::to_string(v) +
                                  " outside [0,1]");
  for (double v : g.data)
    if (v != 0.0 && v != 1.0)
      throw std::invalid_argument("prediction pair: ground truth value " + std::to_string(v) +
                                  " is not binary");
}

namespace {

struct OverlapSums {
  double tp = 0.0;  // sum p*g
  double fn = 0.0;  // sum (1-p)*g
  double fp = 0.0;  // sum p*(1-g)
  double sp = 0.0;  // sum p
  double sg = 0.0;  // sum g
};

OverlapSums overlap_sums(const PredictionPair& pair) {
  OverlapSums s;
  const size_t n = pair.p.data.size();
  for (size_t i = 0; i < n; ++i) {
    const double p = pair.p.data[i], g = pair.g.data[i];
    s.tp += p * g;
    s.fn += (1.0 - p) * g;
    s.fp += p * (1.0 - g);
    s.sp += p;
    s.sg += g;
  }
  return s;
}

}  // namespace

double dice_score(const PredictionPair& pair, double epsilon) {
  const OverlapSums s = overlap_sums(pair);
  return (2.0 * s.tp + epsilon) / ((s.sp + s.sg) + epsilon);
}

double dice_score_as_printed(const PredictionPair& pair, double epsilon) {
  const OverlapSums s = overlap_sums(pair);
  return (s.tp + epsilon) / ((s.sp + s.sg) + epsilon);
}

double dice_loss(const PredictionPair& pair, const LossConfig& cfg) {
  return 1.0 - dice_score(pair, cfg.epsilon);
}

double tversky_index(const PredictionPair& pair, const LossConfig& cfg) {
  const OverlapSums s = overlap_sums(pair);
  const double num = s.tp + cfg.epsilon;
  const double den = (s.tp + cfg.alpha * s.fn) + (cfg.beta * s.fp + cfg.epsilon);
  return num / den;
}

double tversky_loss(const PredictionPair& pair, const LossConfig& cfg) {
  return 1.0 - tversky_index(pair, cfg);
}

double focal_tversky_loss(const PredictionPair& pair, const LossConfig& cfg) {
  cfg.validate_gamma();
  const double e = cfg.focal_exponent();
  const double tl = tversky_loss(pair, cfg);
  if (e == 1.0) return tl;
  return std::pow(std::clamp(tl, 0.0, 1.0), e);
}

double focal_loss_from_ti(double ti, const LossConfig& cfg) {
  cfg.validate_gamma();
  const double e = cfg.focal_exponent();
  const double base = 1.0 - ti;
  if (e == 1.0) return base;
  return std::pow(std::clamp(base, 0.0, 1.0), e);
}

double deep_supervision_loss(std::span<const Tensor> outputs, std::span<const Tensor> targets,
                             const LossConfig& cfg) {
  check_shapes(!outputs.empty(), "deep supervision: need at least one output scale");
  check_shapes(outputs.size() == targets.size(),
               "deep supervision: " + std::to_string(outputs.size()) + " outputs vs " +
                   std::to_string(targets.size()) + " targets");
  double total = 0.0;
  for (size_t s = 0; s + 1 < outputs.size(); ++s)
    total += focal_tversky_loss(PredictionPair(outputs[s], targets[s]), cfg);
  total += tversky_loss(PredictionPair(outputs.back(), targets.back()), cfg);
  return total;
}

// --- tape versions -----------------------------------------------------------

namespace {

struct OverlapNodes {
  Var tp, fn, fp, sp, sg;
};

OverlapNodes overlap_nodes(const Var& p, const Var& g) {
  check_shapes(p.value().shape == g.value().shape,
               "loss: prediction " + shape_str(p.value().shape) + " vs target " +
                   shape_str(g.value().shape));
  OverlapNodes n;
  n.tp = sum(mul(p, g));
  n.fn = sum(mul(affine(p, -1.0, 1.0), g));
  n.fp = sum(mul(p, affine(g, -1.0, 1.0)));
  n.sp = sum(p);
  n.sg = sum(g);
  return n;
}

}  // namespace

Var dice_score_node(const Var& p, const Var& g, double epsilon) {
  const OverlapNodes n = overlap_nodes(p, g);
  return div(affine(n.tp, 2.0, epsilon), affine(add(n.sp, n.sg), 1.0, epsilon));
}

Var dice_loss_node(const Var& p, const Var& g, const LossConfig& cfg) {
  return affine(dice_score_node(p, g, cfg.epsilon), -1.0, 1.0);
}

Var tversky_index_node(const Var& p, const Var& g, const LossConfig& cfg) {
  const OverlapNodes n = overlap_nodes(p, g);
  const Var num = affine(n.tp, 1.0, cfg.epsilon);
  const Var den = add(add(n.tp, affine(n.fn, cfg.alpha, 0.0)),
                      affine(n.fp, cfg.beta, cfg.epsilon));
  return div(num, den);
}

Var tversky_loss_node(const Var& p, const Var& g, const LossConfig& cfg) {
  return affine(tversky_index_node(p, g, cfg), -1.0, 1.0);
}

Var focal_tversky_loss_node(const Var& p, const Var& g, const LossConfig& cfg) {
  cfg.validate_gamma();
  const double e = cfg.focal_exponent();
  const Var tl = tversky_loss_node(p, g, cfg);
  if (e == 1.0) return tl;
  return pow_scalar(clamp01(tl), e);
}

Var deep_supervision_loss_node(std::span<const Var> outputs, std::span<const Var> targets,
                               const LossConfig& cfg) {
  check_shapes(!outputs.empty(), "deep supervision: need at least one output scale");
  check_shapes(outputs.size() == targets.size(),
               "deep supervision: " + std::to_string(outputs.size()) + " outputs vs " +
                   std::to_string(targets.size()) + " targets");
  Var total;
  for (size_t s = 0; s + 1 < outputs.size(); ++s) {
    Var term = focal_tversky_loss_node(outputs[s], targets[s], cfg);
    total = total.valid() ? add(total, term) : term;
  }
  Var final_term = tversky_loss_node(outputs.back(), targets.back(), cfg);
  return total.valid() ? add(total, final_term) : final_term;
}

std::vector<CurvePoint> focal_curve(std::span<const double> gammas, int resolution,
                                    const LossConfig& base) {
  if (resolution < 1)
    throw std::invalid_argument("focal curve: resolution must be >= 1, got " +
                                std::to_string(resolution));
  if (gammas.empty()) throw std::invalid_argument("focal curve: need at least one gamma");
  std::vector<CurvePoint> table;
  table.reserve(gammas.size() * static_cast<size_t>(resolution + 1));
  for (double gamma : gammas) {
    LossConfig cfg = base;
    cfg.gamma = gamma;
    cfg.validate_gamma();
    for (int i = 0; i <= resolution; ++i) {
      const double ti = static_cast<double>(i) / resolution;
      table.push_back({ti, gamma, focal_loss_from_ti(ti, cfg)});
    }
  }
  return table;
}

}  // namespace ftseg
