// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <string>

namespace ftseg {

struct ScopeReport {
  std::string scope;
  double max_rel_err = 0.0;
  double tol = 0.0;
  bool pass = false;
  std::string worst;  // offender description of the worst coordinate
};

/// Central-difference sweeps of the analytic gradients, seeded and
/// repeatable. Trial counts below the defaults are still honest checks;
/// the command line keeps the defaults.

/// Dice/Tversky/focal-Tversky losses w.r.t. the prediction over `trials`
/// random pairs; tolerance 1e-4.
ScopeReport verify_losses(uint64_t seed, int trials = 100);

/// Attention gate w.r.t. query, gating signal and every gate parameter over
/// `trials` random draws; tolerance 1e-4.
ScopeReport verify_gate(uint64_t seed, int trials = 100);

/// Full model loss on a 1x1x16x16 batch w.r.t. every parameter group;
/// tolerance 1e-3.
ScopeReport verify_model(uint64_t seed, int trials = 3);

}  // namespace ftseg
