// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ftseg/tape.hpp"

namespace ftseg {

struct GradcheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  int worst_input = 0;      // which tensor argument held the worst coordinate
  int64_t worst_index = 0;  // flat coordinate within that argument
  double analytic = 0.0;    // analytic gradient at the worst coordinate
  double numeric = 0.0;     // central-difference estimate there
  std::string describe() const;
};

/// Central-difference check of the tape gradient of a scalar-valued function
/// of one tensor. Per coordinate: numeric = (f(x+h e_i) - f(x-h e_i)) / 2h,
/// rel err = |a-n| / max(1e-8, |a|+|n|). h must lie in [1e-6, 1e-4]; f(x)
/// must be finite. Coordinates within half the tolerance are re-estimated at
/// the ends of the admissible step range and keep their best agreement, so
/// ReLU kinks inside the step window and cancellation noise on near-zero
/// gradients do not masquerade as analytic errors.
GradcheckReport gradcheck(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x,
                          double h, double tol);

/// Same check for a function of several tensors; every coordinate of every
/// argument is perturbed.
GradcheckReport gradcheck_multi(const std::function<Var(Tape&, std::span<const Var>)>& f,
                                std::span<const Tensor> xs, double h, double tol);

}  // namespace ftseg
