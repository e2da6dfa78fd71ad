// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <functional>
#include <vector>

#include "ftseg/tensor.hpp"

namespace ftseg {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; the tensor itself
/// lives in the tape node.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  /// Gradient of the last backward() target w.r.t. this node. Zero tensor
  /// for nodes the target does not depend on.
  const Tensor& grad() const;
};

enum class Padding { kSame, kValid };

/// Append-only reverse-mode tape. Topological order equals append order, so
/// the backward sweep is a single reverse pass. A tape is built per forward
/// evaluation and cleared only between optimizer steps.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records an input or parameter. Leaves have no backward rule; their
  /// grad slot receives accumulated gradients.
  Var leaf(Tensor value);

  int size() const { return static_cast<int>(nodes_.size()); }
  void clear();

  const Tensor& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Tensor& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }

  /// Reverse-mode accumulation from a scalar loss. Visits nodes in strict
  /// reverse append order; fills the grad slot of every node at or before
  /// the loss. Rejects non-scalar targets.
  void backward(const Var& loss);

  // Internal node plumbing, public for the op implementations.
  using BackwardFn = std::function<void(Tape&, int self)>;
  Var emit(Tensor value, std::vector<int> inputs, BackwardFn backprop, const char* op);
  Tensor& grad_slot(int id) { return nodes_[static_cast<size_t>(id)].grad; }
  const char* op_name(int id) const { return nodes_[static_cast<size_t>(id)].op; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated during backward
    std::vector<int> inputs;
    BackwardFn backprop;  // empty for leaves
    const char* op = "leaf";
  };
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Recorded operations. Every op either returns a tensor of the documented
// shape or throws std::invalid_argument; there is no silent broadcasting
// beyond the channel-bias and coefficient cases documented at add/mul.
// ---------------------------------------------------------------------------

/// 2-D cross-correlation (no kernel flip). input [N,C,H,W], kernel
/// [O,C,kh,kw], optional bias [O]. Same padding pads with zeros and requires
/// odd kh,kw; valid padding shrinks to [N,O,H-kh+1,W-kw+1].
Var conv2d(const Var& input, const Var& kernel, const Var& bias, Padding padding);
Var conv2d(const Var& input, const Var& kernel, Padding padding);  // no bias

/// 2x2 max pooling, stride 2. H and W must be even. Gradient routes to the
/// argmax position, first occurrence in row-major window order on ties.
Var maxpool2d(const Var& input);

/// 2x2 average pooling, stride 2. H and W must be even.
Var avgpool2d(const Var& input);

/// Bilinear x2 upsampling, align-corners=false. Gradient is the transpose of
/// the interpolation weights.
Var upsample_bilinear2x(const Var& input);

Var relu(const Var& x);     // gradient at exactly 0 is 0
Var sigmoid(const Var& x);  // 1/(1+e^-x)

/// Elementwise add/mul. Accepted operand shapes: identical; [N,C,H,W] with a
/// per-channel [C] vector (bias); [N,C,H,W] with [N,1,H,W] (attention
/// coefficients broadcast across channels). Anything else is rejected.
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

/// Elementwise same-shape division.
Var div(const Var& a, const Var& b);

/// scale*x + shift, elementwise.
Var affine(const Var& x, double scale, double shift);

/// Elementwise x^exponent. Rejects negative bases (loss bases live in [0,1]
/// by construction). Gradient convention at x==0: 1 for exponent 1, else 0.
Var pow_scalar(const Var& x, double exponent);

/// Clamp to [0,1]; pass-through gradient strictly inside, 0 where clipped.
Var clamp01(const Var& x);

/// Channel concatenation of [N,Ca,H,W] and [N,Cb,H,W]; a occupies channels
/// [0,Ca). Gradient splits accordingly. A zero-channel operand is legal.
Var concat_channels(const Var& a, const Var& b);

/// Channels [begin,end) of x as a new tensor.
Var slice_channels(const Var& x, int begin, int end);

/// Sum of all elements, as a [1]-shaped scalar.
Var sum(const Var& x);

}  // namespace ftseg
