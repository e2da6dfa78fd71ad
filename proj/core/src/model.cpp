// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#include "ftseg/model.hpp"

#include <cmath>
#include <stdexcept>

#include "ftseg/errors.hpp"
#include "ftseg/rng.hpp"

namespace ftseg {

Variant variant_from_string(const std::string& name) {
  if (name == "unet") return Variant::kUNet;
  if (name == "attn_unet") return Variant::kAttnUNet;
  if (name == "attn_unet_multi_input") return Variant::kAttnUNetMultiInput;
  throw std::invalid_argument("unknown variant '" + name +
                              "' (expected unet|attn_unet|attn_unet_multi_input)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kUNet: return "unet";
    case Variant::kAttnUNet: return "attn_unet";
    case Variant::kAttnUNetMultiInput: return "attn_unet_multi_input";
  }
  throw std::invalid_argument("invalid variant value");
}

void ModelConfig::validate() const {
  if (depth < 2) throw std::invalid_argument("model: depth must be >= 2, got " + std::to_string(depth));
  if (base_channels < 1)
    throw std::invalid_argument("model: base_channels must be >= 1, got " +
                                std::to_string(base_channels));
  if (input_channels < 1)
    throw std::invalid_argument("model: input_channels must be >= 1, got " +
                                std::to_string(input_channels));
}

GateOutput attention_gate(const Var& x, const Var& g, const GateVars& params) {
  const Tensor& xv = x.value();
  const Tensor& gv = g.value();
  check_shapes(xv.ndim() == 4 && gv.ndim() == 4, "attention gate: x and g must be [N,C,H,W]");
  check_shapes(xv.dim(2) == 2 * gv.dim(2) && xv.dim(3) == 2 * gv.dim(3),
               "attention gate: gating signal must be one scale coarser (2:1), got x " +
                   shape_str(xv.shape) + " vs g " + shape_str(gv.shape));
  Var g_up = upsample_bilinear2x(g);
  Var joined = add(conv2d(x, params.w_x, Padding::kSame),
                   conv2d(g_up, params.w_g, params.b_g, Padding::kSame));
  Var q = conv2d(relu(joined), params.psi, params.b_psi, Padding::kSame);
  Var coeff = sigmoid(q);
  return {mul(x, coeff), coeff};
}

GateVars bind_gate(Tape& tape, const AttentionGateParams& params) {
  GateVars v;
  v.w_x = tape.leaf(params.w_x);
  v.w_g = tape.leaf(params.w_g);
  v.b_g = tape.leaf(params.b_g);
  v.psi = tape.leaf(params.psi);
  v.b_psi = tape.leaf(params.b_psi);
  return v;
}

int Model::add_conv_param(const std::string& name, int out_ch, int in_ch, int k, Rng& rng) {
  Tensor w({out_ch, in_ch, k, k});
  // Fan-in scaled uniform init, ReLU-corrected so activation variance stays
  // flat through the cascaded convolutions: bound sqrt(6/fan_in).
  const double bound = std::sqrt(6.0 / (static_cast<double>(in_ch) * k * k));
  for (double& v : w.data) v = rng.uniform(-bound, bound);
  params_.push_back({name, std::move(w)});
  return static_cast<int>(params_.size()) - 1;
}

int Model::add_bias_param(const std::string& name, int ch) {
  params_.push_back({name, Tensor({ch})});
  return static_cast<int>(params_.size()) - 1;
}

Model Model::build(const ModelConfig& cfg) {
  cfg.validate();
  Model m;
  m.cfg_ = cfg;
  Rng rng(cfg.seed);
  const int depth = cfg.depth;
  const bool gated = cfg.variant != Variant::kUNet;
  const bool pyramid = cfg.variant == Variant::kAttnUNetMultiInput;
  auto width = [&](int stage) { return cfg.base_channels << stage; };

  auto add_stage = [&](const std::string& prefix, int in_ch, int out_ch) {
    StageSlots s;
    s.conv1.w = m.add_conv_param(prefix + ".conv1.weight", out_ch, in_ch, 3, rng);
    s.conv1.b = m.add_bias_param(prefix + ".conv1.bias", out_ch);
    s.conv2.w = m.add_conv_param(prefix + ".conv2.weight", out_ch, out_ch, 3, rng);
    s.conv2.b = m.add_bias_param(prefix + ".conv2.bias", out_ch);
    return s;
  };

  for (int s = 0; s < depth; ++s) {
    int in_ch = s == 0 ? cfg.input_channels : width(s - 1) + (pyramid ? cfg.input_channels : 0);
    m.enc_.push_back(add_stage("enc" + std::to_string(s), in_ch, width(s)));
  }

  for (int s = depth - 2; s >= 0; --s) {
    if (gated && s >= 1) {
      const int cx = width(s), cg = width(s + 1);
      const int ci = std::max(cx / 2, 1);
      GateSlots g;
      const std::string prefix = "gate" + std::to_string(s);
      g.w_x = m.add_conv_param(prefix + ".w_x", ci, cx, 1, rng);
      g.w_g = m.add_conv_param(prefix + ".w_g", ci, cg, 1, rng);
      g.b_g = m.add_bias_param(prefix + ".b_g", ci);
      g.psi = m.add_conv_param(prefix + ".psi", 1, ci, 1, rng);
      g.b_psi = m.add_bias_param(prefix + ".b_psi", 1);
      m.gates_.push_back(g);
    }
    m.dec_.push_back(add_stage("dec" + std::to_string(s), 3 * width(s), width(s)));
    if (cfg.deep_supervision || s == 0) {
      ConvSlot head;
      const std::string prefix = "head" + std::to_string(s);
      head.w = m.add_conv_param(prefix + ".weight", 1, width(s), 1, rng);
      head.b = m.add_bias_param(prefix + ".bias", 1);
      m.heads_.push_back(head);
    }
  }
  return m;
}

int64_t Model::parameter_count() const {
  int64_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

int Model::head_count() const { return static_cast<int>(heads_.size()); }

int Model::attention_gate_count() const { return static_cast<int>(gates_.size()); }

Model::Bound Model::forward(Tape& tape, const Tensor& batch) const {
  std::vector<Var> params;
  params.reserve(params_.size());
  for (const Parameter& p : params_) params.push_back(tape.leaf(p.value));
  return forward_bound(tape, batch, params);
}

Model::Bound Model::forward_bound(Tape& tape, const Tensor& batch,
                                  std::span<const Var> params) const {
  check_shapes(params.size() == params_.size(),
               "forward: expected " + std::to_string(params_.size()) + " parameter vars, got " +
                   std::to_string(params.size()));
  check_shapes(batch.ndim() == 4, "forward: batch must be [N,C,H,W], got " + shape_str(batch.shape));
  const int stride = 1 << (cfg_.depth - 1);
  if (batch.dim(1) != cfg_.input_channels)
    throw IncompatibleError("forward: batch has " + std::to_string(batch.dim(1)) +
                            " channels but the model expects " +
                            std::to_string(cfg_.input_channels));
  if (batch.dim(2) % stride != 0 || batch.dim(3) % stride != 0)
    throw IncompatibleError("forward: spatial size " + std::to_string(batch.dim(2)) + "x" +
                            std::to_string(batch.dim(3)) + " must be a multiple of " +
                            std::to_string(stride) + " for depth " + std::to_string(cfg_.depth));

  Bound bound;
  bound.params.assign(params.begin(), params.end());
  auto P = [&](int idx) -> const Var& { return bound.params[static_cast<size_t>(idx)]; };
  auto conv_block = [&](const StageSlots& s, Var x) {
    x = relu(conv2d(x, P(s.conv1.w), P(s.conv1.b), Padding::kSame));
    return relu(conv2d(x, P(s.conv2.w), P(s.conv2.b), Padding::kSame));
  };

  const bool gated = cfg_.variant != Variant::kUNet;
  const bool pyramid = cfg_.variant == Variant::kAttnUNetMultiInput;

  Var input = tape.leaf(batch);
  std::vector<Var> skips;
  Var cur = conv_block(enc_[0], input);
  skips.push_back(cur);
  Var pyr = input;
  for (int s = 1; s < cfg_.depth; ++s) {
    cur = maxpool2d(cur);
    if (pyramid) {
      pyr = avgpool2d(pyr);
      cur = concat_channels(cur, pyr);
    }
    cur = conv_block(enc_[static_cast<size_t>(s)], cur);
    skips.push_back(cur);
  }

  cur = skips.back();
  size_t gate_idx = 0;
  size_t head_idx = 0;
  for (int s = cfg_.depth - 2; s >= 0; --s) {
    Var skip = skips[static_cast<size_t>(s)];
    if (gated && s >= 1) {
      const GateSlots& g = gates_[gate_idx++];
      GateVars vars{P(g.w_x), P(g.w_g), P(g.b_g), P(g.psi), P(g.b_psi)};
      GateOutput out = attention_gate(skip, cur, vars);
      skip = out.gated;
      bound.gate_coefficients.push_back(out.coefficients);
    }
    cur = conv_block(dec_[static_cast<size_t>(cfg_.depth - 2 - s)],
                     concat_channels(upsample_bilinear2x(cur), skip));
    if (cfg_.deep_supervision || s == 0) {
      const ConvSlot& h = heads_[head_idx++];
      bound.heads.push_back(sigmoid(conv2d(cur, P(h.w), P(h.b), Padding::kSame)));
    }
  }
  return bound;
}

std::vector<Tensor> Model::predict(const Tensor& batch) const {
  Tape tape;
  Bound bound = forward(tape, batch);
  std::vector<Tensor> heads;
  heads.reserve(bound.heads.size());
  for (const Var& h : bound.heads) heads.push_back(h.value());
  return heads;
}

Tensor downsample_mask(const Tensor& mask, int factor) {
  check_shapes(mask.ndim() == 4, "downsample_mask: mask must be [N,C,H,W], got " +
                                     shape_str(mask.shape));
  check_shapes(factor >= 1 && (factor & (factor - 1)) == 0,
               "downsample_mask: factor must be a power of two, got " + std::to_string(factor));
  for (double v : mask.data)
    if (v != 0.0 && v != 1.0)
      throw std::invalid_argument("downsample_mask: input is not binary (saw " +
                                  std::to_string(v) + ")");
  if (factor == 1) return mask;
  const int n = mask.dim(0), c = mask.dim(1), h = mask.dim(2), w = mask.dim(3);
  check_shapes(h % factor == 0 && w % factor == 0,
               "downsample_mask: factor " + std::to_string(factor) + " does not divide " +
                   shape_str(mask.shape));
  const int ho = h / factor, wo = w / factor;
  Tensor out({n, c, ho, wo});
  for (int i = 0; i < n * c; ++i) {
    const double* plane = mask.data.data() + static_cast<int64_t>(i) * h * w;
    double* oplane = out.data.data() + static_cast<int64_t>(i) * ho * wo;
    for (int y = 0; y < ho; ++y) {
      for (int x = 0; x < wo; ++x) {
        double m = 0.0;
        for (int dy = 0; dy < factor && m == 0.0; ++dy) {
          const double* row = plane + static_cast<int64_t>(y * factor + dy) * w + x * factor;
          for (int dx = 0; dx < factor; ++dx) {
            if (row[dx] != 0.0) {
              m = 1.0;
              break;
            }
          }
        }
        oplane[static_cast<int64_t>(y) * wo + x] = m;
      }
    }
  }
  return out;
}

}  // namespace ftseg
