// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ftseg/tape.hpp"
#include "ftseg/tensor.hpp"

namespace ftseg {

enum class Variant { kUNet, kAttnUNet, kAttnUNetMultiInput };

Variant variant_from_string(const std::string& name);
std::string to_string(Variant v);

struct ModelConfig {
  Variant variant = Variant::kUNet;
  int depth = 4;          // encoder stages; bottleneck is the last one
  int base_channels = 16; // stage 0 width, doubling per stage
  bool deep_supervision = false;
  int input_channels = 1;
  uint64_t seed = 0;

  void validate() const;  // depth >= 2, base_channels >= 1, input_channels >= 1
};

/// 1x1 transforms of one additive attention gate. w_x has no bias; the
/// formula carries b_g and b_psi only.
struct AttentionGateParams {
  Tensor w_x;    // [Ci,Cx,1,1] query transform
  Tensor w_g;    // [Ci,Cg,1,1] gating transform
  Tensor b_g;    // [Ci]
  Tensor psi;    // [1,Ci,1,1]
  Tensor b_psi;  // [1]
};

struct GateVars {
  Var w_x, w_g, b_g, psi, b_psi;
};

struct GateOutput {
  Var gated;         // alpha (*) x, alpha broadcast across channels
  Var coefficients;  // [N,1,H,W], strictly inside (0,1)
};

/// Additive attention gate: the gating signal g, one scale coarser than the
/// query x (2:1 spatial ratio enforced), is brought to x's resolution by
/// bilinear resampling; q = psi^T ReLU(W_x x + W_g g_up + b_g) + b_psi and
/// x is scaled by sigmoid(q).
GateOutput attention_gate(const Var& x, const Var& g, const GateVars& params);

/// Records the gate parameter tensors as tape leaves (test convenience).
GateVars bind_gate(Tape& tape, const AttentionGateParams& params);

struct Parameter {
  std::string name;
  Tensor value;
};

/// Encoder-decoder segmentation network in three flavours: plain U-Net,
/// attention-gated U-Net, and attention U-Net fed with an average-pooled
/// input pyramid at every encoder stage after the first. Two 3x3 conv+ReLU
/// blocks per stage, 2x2 max pooling between encoder stages, bilinear
/// upsampling in the decoder, and sigmoid 1x1 output heads. The first skip
/// connection is never gated. No normalization layers anywhere, so the
/// forward pass is batch-size independent.
class Model {
 public:
  static Model build(const ModelConfig& cfg);

  struct Bound {
    std::vector<Var> params;             // aligned with parameters()
    std::vector<Var> heads;              // coarsest first, finest last
    std::vector<Var> gate_coefficients;  // one per gate, decoder order
  };

  /// Records the whole forward pass for a [N,C,H,W] batch on the tape.
  /// H and W must be divisible by 2^(depth-1).
  Bound forward(Tape& tape, const Tensor& batch) const;

  /// Same, but over caller-supplied parameter leaves (index-aligned with
  /// parameters()); lets verification code differentiate through its own
  /// tensors.
  Bound forward_bound(Tape& tape, const Tensor& batch, std::span<const Var> params) const;

  /// Head probability maps only, on a throwaway tape.
  std::vector<Tensor> predict(const Tensor& batch) const;

  const ModelConfig& config() const { return cfg_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter>& parameters() { return params_; }
  int64_t parameter_count() const;
  /// depth-1 heads under deep supervision, 1 otherwise.
  int head_count() const;
  /// depth-2 for the attention variants, 0 for plain U-Net.
  int attention_gate_count() const;

  void save(const std::string& path) const;
  static Model load(const std::string& path);

 private:
  Model() = default;

  struct ConvSlot {
    int w = -1, b = -1;
  };
  struct StageSlots {
    ConvSlot conv1, conv2;
  };
  struct GateSlots {
    int w_x = -1, w_g = -1, b_g = -1, psi = -1, b_psi = -1;
  };

  int add_conv_param(const std::string& name, int out_ch, int in_ch, int k, class Rng& rng);
  int add_bias_param(const std::string& name, int ch);

  ModelConfig cfg_;
  std::vector<Parameter> params_;
  std::vector<StageSlots> enc_;
  std::vector<StageSlots> dec_;    // decoder order, deepest first
  std::vector<GateSlots> gates_;   // aligned with gated decoder steps
  std::vector<ConvSlot> heads_;    // aligned with emitted heads
};

/// Max-pool downsampling of a binary mask by a power-of-two factor: any
/// positive pixel in the window survives, so small lesions are preserved at
/// every supervised scale. Rejects non-binary input.
Tensor downsample_mask(const Tensor& mask, int factor);

}  // namespace ftseg
