// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace ftseg {

/// Dimension list, outermost first. Batched images are NCHW.
using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of 64-bit reals: the universal numeric carrier for
/// images, masks, feature maps, parameters and gradients. Double precision
/// keeps finite-difference checks tight; sizes here are desk scale.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::initializer_list<double> values);

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;

  // NCHW element access.
  double& at4(int n, int c, int y, int x) {
    return data[((static_cast<int64_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }
  double at4(int n, int c, int y, int x) const {
    return data[((static_cast<int64_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }

  Shape shape;
  std::vector<double> data;
};

/// Throws std::invalid_argument with a shape-algebra diagnostic when cond is
/// false. Used by every operation so that shape errors carry both operand
/// shapes instead of failing silently.
void check_shapes(bool cond, const std::string& what);

}  // namespace ftseg
