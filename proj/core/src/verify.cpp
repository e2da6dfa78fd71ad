// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#include "ftseg/verify.hpp"

#include <sstream>

#include "ftseg/data.hpp"
#include "ftseg/gradcheck.hpp"
#include "ftseg/losses.hpp"
#include "ftseg/model.hpp"
#include "ftseg/rng.hpp"
#include "ftseg/train.hpp"

namespace ftseg {

namespace {

Tensor random_probabilities(Rng& rng, const Shape& shape, double lo, double hi) {
  Tensor t(shape);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

Tensor random_mask(Rng& rng, const Shape& shape, double density) {
  Tensor t(shape);
  for (double& v : t.data) v = rng.uniform() < density ? 1.0 : 0.0;
  return t;
}

Tensor random_weights(Rng& rng, const Shape& shape, double scale) {
  Tensor t(shape);
  for (double& v : t.data) v = rng.uniform(-scale, scale);
  return t;
}

void fold_in(ScopeReport& report, const GradcheckReport& r, const std::string& what) {
  if (r.max_rel_err > report.max_rel_err) {
    report.max_rel_err = r.max_rel_err;
    std::ostringstream os;
    os << what << ": " << r.describe();
    report.worst = os.str();
  }
}

}  // namespace

ScopeReport verify_losses(uint64_t seed, int trials) {
  ScopeReport report{"losses", 0.0, 1e-4, false, ""};
  for (int t = 0; t < trials; ++t) {
    Rng rng = Rng::keyed(seed, static_cast<uint64_t>(t));
    const Shape shape{1, 1, 4, 4};
    // Interior probabilities keep the perturbed evaluations valid.
    const Tensor p = random_probabilities(rng, shape, 0.05, 0.95);
    const Tensor g = random_mask(rng, shape, 0.35);
    LossConfig cfg;
    cfg.alpha = 0.7;
    cfg.beta = 0.3;
    cfg.gamma = rng.uniform(1.0, 3.0);

    auto check = [&](const char* name, auto&& node_fn) {
      const GradcheckReport r = gradcheck(
          [&](Tape& tape, const Var& x) { return node_fn(x, tape.leaf(g)); }, p, 1e-5, report.tol);
      fold_in(report, r, std::string(name) + " trial " + std::to_string(t));
    };
    check("dice_loss", [&](const Var& x, Var gv) { return dice_loss_node(x, gv, cfg); });
    check("tversky_loss", [&](const Var& x, Var gv) { return tversky_loss_node(x, gv, cfg); });
    check("focal_tversky_loss",
          [&](const Var& x, Var gv) { return focal_tversky_loss_node(x, gv, cfg); });
  }
  report.pass = report.max_rel_err < report.tol;
  return report;
}

ScopeReport verify_gate(uint64_t seed, int trials) {
  ScopeReport report{"gate", 0.0, 1e-4, false, ""};
  for (int t = 0; t < trials; ++t) {
    Rng rng = Rng::keyed(seed, 0x47000000ULL + static_cast<uint64_t>(t));
    const int cx = 2, cg = 4, ci = 2, h = 4, w = 4;
    const Tensor inputs[7] = {
        random_weights(rng, {1, cx, h, w}, 1.0),          // x
        random_weights(rng, {1, cg, h / 2, w / 2}, 1.0),  // g
        random_weights(rng, {ci, cx, 1, 1}, 0.7),         // w_x
        random_weights(rng, {ci, cg, 1, 1}, 0.7),         // w_g
        random_weights(rng, {ci}, 0.3),                   // b_g
        random_weights(rng, {1, ci, 1, 1}, 0.7),          // psi
        random_weights(rng, {1}, 0.3),                    // b_psi
    };
    const GradcheckReport r = gradcheck_multi(
        [&](Tape&, std::span<const Var> v) {
          GateVars gate{v[2], v[3], v[4], v[5], v[6]};
          return sum(attention_gate(v[0], v[1], gate).gated);
        },
        inputs, 1e-5, report.tol);
    fold_in(report, r, "attention_gate trial " + std::to_string(t));
  }
  report.pass = report.max_rel_err < report.tol;
  return report;
}

ScopeReport verify_model(uint64_t seed, int trials) {
  ScopeReport report{"model", 0.0, 1e-3, false, ""};
  for (int t = 0; t < trials; ++t) {
    const uint64_t trial_seed = Rng::mix64(seed + static_cast<uint64_t>(t));
    ModelConfig mc;
    mc.variant = Variant::kAttnUNetMultiInput;
    mc.depth = 3;  // one gate, three scales on a 16x16 input
    mc.base_channels = 2;
    mc.deep_supervision = true;
    mc.input_channels = 1;
    mc.seed = trial_seed;
    Model model = Model::build(mc);
    // Nudge every parameter off the seeded init: zero biases put ReLU
    // pre-activations exactly on the kink, where one-sided numeric slopes
    // legitimately disagree with the subgradient. Checked at a generic point.
    Rng nudge = Rng::keyed(trial_seed, 0xFEED);
    for (Parameter& p : model.parameters())
      for (double& v : p.value.data) v += nudge.uniform(-0.05, 0.05);

    Rng rng = Rng::keyed(trial_seed, 0xB0DE);
    Tensor batch = random_probabilities(rng, {1, 1, 16, 16}, 0.0, 1.0);
    Tensor mask = random_mask(rng, {1, 1, 16, 16}, 0.3);
    LossConfig cfg;

    // Gradcheck over the flattened parameter list; the batch itself is data.
    std::vector<Tensor> params;
    for (const Parameter& p : model.parameters()) params.push_back(p.value);
    const GradcheckReport r = gradcheck_multi(
        [&](Tape& tape, std::span<const Var> vars) {
          Model::Bound bound = model.forward_bound(tape, batch, vars);
          std::vector<Tensor> targets;
          for (const Var& head : bound.heads)
            targets.push_back(downsample_mask(mask, mask.dim(2) / head.value().dim(2)));
          return training_loss_node(bound.heads, targets, LossKind::kFocalTversky, cfg);
        },
        params, 1e-5, report.tol);
    fold_in(report, r, "model trial " + std::to_string(t));
  }
  report.pass = report.max_rel_err < report.tol;
  return report;
}

}  // namespace ftseg
