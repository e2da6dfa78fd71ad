// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#include "ftseg/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>

namespace ftseg {

const Tensor& Var::value() const { return tape->val(id); }
const Tensor& Var::grad() const { return tape->grad(id); }

Var Tape::leaf(Tensor value) { return emit(std::move(value), {}, nullptr, "leaf"); }

Var Tape::emit(Tensor value, std::vector<int> inputs, BackwardFn backprop, const char* op) {
  Node node;
  node.value = std::move(value);
  node.inputs = std::move(inputs);
  node.backprop = std::move(backprop);
  node.op = op;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::clear() { nodes_.clear(); }

void Tape::backward(const Var& loss) {
  if (loss.tape != this || loss.id < 0 || loss.id >= size())
    throw std::invalid_argument("backward: loss is not a node of this tape");
  if (loss.value().size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                shape_str(loss.value().shape));
  for (Node& n : nodes_) {
    n.grad = Tensor(n.value.shape);
  }
  nodes_[static_cast<size_t>(loss.id)].grad.data[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.backprop) n.backprop(*this, i);
  }
}

namespace {

void require_same_tape(const Var& a, const Var& b) {
  if (a.tape != b.tape) throw std::invalid_argument("operands recorded on different tapes");
}

bool is_nchw(const Tensor& t) { return t.ndim() == 4; }

// Zero-pads every [H,W] plane of a NCHW tensor.
Tensor pad_planes(const Tensor& t, int py, int px) {
  const int n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
  Tensor out({n, c, h + 2 * py, w + 2 * px});
  const int wp = w + 2 * px;
  for (int i = 0; i < n * c; ++i) {
    const double* src = t.data.data() + static_cast<int64_t>(i) * h * w;
    double* dst = out.data.data() + static_cast<int64_t>(i) * (h + 2 * py) * wp + py * wp + px;
    for (int y = 0; y < h; ++y) {
      std::copy(src + static_cast<int64_t>(y) * w, src + static_cast<int64_t>(y + 1) * w,
                dst + static_cast<int64_t>(y) * wp);
    }
  }
  return out;
}

struct ConvDims {
  int n, c, h, w, o, kh, kw, py, px, ho, wo;
};

// out[x] += sum_k w[k] * in[x+k]; the 3- and 1-tap forms dominate here and
// fuse into one vectorizable pass per row.
inline void corr_row_acc(double* out, const double* in, const double* w, int kw, int len) {
  if (kw == 3) {
    const double w0 = w[0], w1 = w[1], w2 = w[2];
    for (int x = 0; x < len; ++x) out[x] += w0 * in[x] + w1 * in[x + 1] + w2 * in[x + 2];
  } else if (kw == 1) {
    const double w0 = w[0];
    for (int x = 0; x < len; ++x) out[x] += w0 * in[x];
  } else {
    for (int k = 0; k < kw; ++k) {
      const double wk = w[k];
      for (int x = 0; x < len; ++x) out[x] += wk * in[x + k];
    }
  }
}

// Four independent accumulator chains; the fixed summation order keeps the
// result deterministic while letting the compiler vectorize the reduction.
inline double dot_product(const double* a, const double* b, int len) {
  double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
  int x = 0;
  for (; x + 4 <= len; x += 4) {
    acc0 += a[x] * b[x];
    acc1 += a[x + 1] * b[x + 1];
    acc2 += a[x + 2] * b[x + 2];
    acc3 += a[x + 3] * b[x + 3];
  }
  double tail = 0.0;
  for (; x < len; ++x) tail += a[x] * b[x];
  return ((acc0 + acc2) + (acc1 + acc3)) + tail;
}

inline double sum_array(const double* a, int64_t len) {
  double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
  int64_t x = 0;
  for (; x + 4 <= len; x += 4) {
    acc0 += a[x];
    acc1 += a[x + 1];
    acc2 += a[x + 2];
    acc3 += a[x + 3];
  }
  double tail = 0.0;
  for (; x < len; ++x) tail += a[x];
  return ((acc0 + acc2) + (acc1 + acc3)) + tail;
}

ConvDims conv_dims(const Tensor& input, const Tensor& kernel, const Tensor* bias, Padding pad) {
  check_shapes(is_nchw(input), "conv2d: input must be [N,C,H,W], got " + shape_str(input.shape));
  check_shapes(is_nchw(kernel),
               "conv2d: kernel must be [O,C,kh,kw], got " + shape_str(kernel.shape));
  ConvDims d{};
  d.n = input.dim(0);
  d.c = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.o = kernel.dim(0);
  d.kh = kernel.dim(2);
  d.kw = kernel.dim(3);
  check_shapes(kernel.dim(1) == d.c, "conv2d: kernel channels " + shape_str(kernel.shape) +
                                         " do not match input " + shape_str(input.shape));
  if (bias != nullptr) {
    check_shapes(bias->ndim() == 1 && bias->dim(0) == d.o,
                 "conv2d: bias must be [O]=" + std::to_string(d.o) + ", got " +
                     shape_str(bias->shape));
  }
  if (pad == Padding::kSame) {
    check_shapes(d.kh % 2 == 1 && d.kw % 2 == 1,
                 "conv2d: same padding requires odd kernel, got " + shape_str(kernel.shape));
    d.py = d.kh / 2;
    d.px = d.kw / 2;
    d.ho = d.h;
    d.wo = d.w;
  } else {
    d.py = d.px = 0;
    d.ho = d.h - d.kh + 1;
    d.wo = d.w - d.kw + 1;
    check_shapes(d.ho > 0 && d.wo > 0, "conv2d: valid padding output would be empty for input " +
                                           shape_str(input.shape) + " and kernel " +
                                           shape_str(kernel.shape));
  }
  return d;
}

Tensor conv2d_value(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                    const ConvDims& d) {
  Tensor out({d.n, d.o, d.ho, d.wo});
  const bool padded = d.py > 0 || d.px > 0;
  const Tensor pin = padded ? pad_planes(input, d.py, d.px) : Tensor();
  const Tensor& src = padded ? pin : input;
  const int hp = d.h + 2 * d.py, wp = d.w + 2 * d.px;
  const int64_t plane_in = static_cast<int64_t>(hp) * wp;
  const int64_t plane_out = static_cast<int64_t>(d.ho) * d.wo;
  for (int n = 0; n < d.n; ++n) {
    for (int o = 0; o < d.o; ++o) {
      double* op = out.data.data() + (static_cast<int64_t>(n) * d.o + o) * plane_out;
      if (bias != nullptr) {
        const double b = bias->data[static_cast<size_t>(o)];
        std::fill(op, op + plane_out, b);
      }
      for (int c = 0; c < d.c; ++c) {
        const double* ip = src.data.data() + (static_cast<int64_t>(n) * d.c + c) * plane_in;
        const double* kp =
            kernel.data.data() + (static_cast<int64_t>(o) * d.c + c) * d.kh * d.kw;
        for (int ky = 0; ky < d.kh; ++ky) {
          for (int y = 0; y < d.ho; ++y) {
            corr_row_acc(op + static_cast<int64_t>(y) * d.wo,
                         ip + static_cast<int64_t>(y + ky) * wp, kp + ky * d.kw, d.kw, d.wo);
          }
        }
      }
    }
  }
  return out;
}

void conv2d_backward(Tape& t, int self, int in_id, int k_id, int bias_id, ConvDims d) {
  const Tensor& gout = t.grad(self);
  const Tensor& input = t.val(in_id);
  const Tensor& kernel = t.val(k_id);
  Tensor& gin = t.grad_slot(in_id);
  Tensor& gk = t.grad_slot(k_id);
  const int hp = d.h + 2 * d.py, wp = d.w + 2 * d.px;
  const int64_t plane_in = static_cast<int64_t>(hp) * wp;
  const int64_t plane_out = static_cast<int64_t>(d.ho) * d.wo;

  if (bias_id >= 0) {
    Tensor& gb = t.grad_slot(bias_id);
    for (int n = 0; n < d.n; ++n)
      for (int o = 0; o < d.o; ++o)
        gb.data[static_cast<size_t>(o)] += sum_array(
            gout.data.data() + (static_cast<int64_t>(n) * d.o + o) * plane_out, plane_out);
  }

  const bool padded = d.py > 0 || d.px > 0;
  const Tensor pin = padded ? pad_planes(input, d.py, d.px) : Tensor();
  const Tensor& src = padded ? pin : input;

  // Kernel gradient: per-tap dot of padded-input rows with output-gradient rows.
  for (int n = 0; n < d.n; ++n) {
    for (int o = 0; o < d.o; ++o) {
      const double* gp = gout.data.data() + (static_cast<int64_t>(n) * d.o + o) * plane_out;
      for (int c = 0; c < d.c; ++c) {
        const double* ip = src.data.data() + (static_cast<int64_t>(n) * d.c + c) * plane_in;
        double* gkp = gk.data.data() + (static_cast<int64_t>(o) * d.c + c) * d.kh * d.kw;
        for (int ky = 0; ky < d.kh; ++ky) {
          for (int kx = 0; kx < d.kw; ++kx) {
            double acc = 0.0;
            for (int y = 0; y < d.ho; ++y)
              acc += dot_product(ip + static_cast<int64_t>(y + ky) * wp + kx,
                                 gp + static_cast<int64_t>(y) * d.wo, d.wo);
            gkp[ky * d.kw + kx] += acc;
          }
        }
      }
    }
  }

  // Input gradient in gather form: the full correlation of the zero-padded
  // output gradient with the flipped kernel, evaluated with the same fused
  // row kernel as the forward pass, then cropped back.
  const int gh = d.ho + 2 * (d.kh - 1), gw = d.wo + 2 * (d.kw - 1);
  std::vector<double> gfull(static_cast<size_t>(gh) * gw);
  std::vector<double> kflip(static_cast<size_t>(d.kh) * d.kw);
  std::vector<double> dpin(static_cast<size_t>(d.c) * plane_in);
  for (int n = 0; n < d.n; ++n) {
    std::fill(dpin.begin(), dpin.end(), 0.0);
    for (int o = 0; o < d.o; ++o) {
      const double* gp = gout.data.data() + (static_cast<int64_t>(n) * d.o + o) * plane_out;
      std::fill(gfull.begin(), gfull.end(), 0.0);
      for (int y = 0; y < d.ho; ++y)
        std::copy_n(gp + static_cast<int64_t>(y) * d.wo, d.wo,
                    gfull.data() + static_cast<int64_t>(y + d.kh - 1) * gw + (d.kw - 1));
      for (int c = 0; c < d.c; ++c) {
        const double* kp =
            kernel.data.data() + (static_cast<int64_t>(o) * d.c + c) * d.kh * d.kw;
        for (int ky = 0; ky < d.kh; ++ky)
          for (int kx = 0; kx < d.kw; ++kx)
            kflip[static_cast<size_t>(ky) * d.kw + kx] =
                kp[(d.kh - 1 - ky) * d.kw + (d.kw - 1 - kx)];
        double* dc = dpin.data() + static_cast<int64_t>(c) * plane_in;
        for (int ky = 0; ky < d.kh; ++ky) {
          for (int u = 0; u < hp; ++u) {
            corr_row_acc(dc + static_cast<int64_t>(u) * wp,
                         gfull.data() + static_cast<int64_t>(u + ky) * gw,
                         kflip.data() + static_cast<size_t>(ky) * d.kw, d.kw, wp);
          }
        }
      }
    }
    for (int c = 0; c < d.c; ++c) {
      const double* dc = dpin.data() + static_cast<int64_t>(c) * plane_in;
      double* gi = gin.data.data() + (static_cast<int64_t>(n) * d.c + c) * d.h * d.w;
      for (int y = 0; y < d.h; ++y) {
        const double* srow = dc + static_cast<int64_t>(y + d.py) * wp + d.px;
        double* irow = gi + static_cast<int64_t>(y) * d.w;
        for (int x = 0; x < d.w; ++x) irow[x] += srow[x];
      }
    }
  }
}

Var conv2d_impl(const Var& input, const Var& kernel, const Var* bias, Padding padding) {
  require_same_tape(input, kernel);
  if (bias != nullptr) require_same_tape(input, *bias);
  const Tensor* bt = bias != nullptr ? &bias->value() : nullptr;
  const ConvDims d = conv_dims(input.value(), kernel.value(), bt, padding);
  Tensor out = conv2d_value(input.value(), kernel.value(), bt, d);
  std::vector<int> inputs{input.id, kernel.id};
  if (bias != nullptr) inputs.push_back(bias->id);
  const int in_id = input.id, k_id = kernel.id, b_id = bias != nullptr ? bias->id : -1;
  return input.tape->emit(
      std::move(out), std::move(inputs),
      [=](Tape& t, int self) { conv2d_backward(t, self, in_id, k_id, b_id, d); }, "conv2d");
}

}  // namespace

Var conv2d(const Var& input, const Var& kernel, const Var& bias, Padding padding) {
  return conv2d_impl(input, kernel, &bias, padding);
}

Var conv2d(const Var& input, const Var& kernel, Padding padding) {
  return conv2d_impl(input, kernel, nullptr, padding);
}

Var maxpool2d(const Var& input) {
  const Tensor& in = input.value();
  check_shapes(is_nchw(in), "maxpool2d: input must be [N,C,H,W], got " + shape_str(in.shape));
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  check_shapes(h % 2 == 0 && w % 2 == 0,
               "maxpool2d: H and W must be even, got " + shape_str(in.shape));
  const int ho = h / 2, wo = w / 2;
  Tensor out({n, c, ho, wo});
  std::vector<int64_t> argmax(static_cast<size_t>(out.size()));
  int64_t oi = 0;
  for (int i = 0; i < n * c; ++i) {
    const double* plane = in.data.data() + static_cast<int64_t>(i) * h * w;
    for (int y = 0; y < ho; ++y) {
      for (int x = 0; x < wo; ++x) {
        // Row-major window scan; strict > keeps the first occurrence on ties.
        int64_t best = static_cast<int64_t>(2 * y) * w + 2 * x;
        double bv = plane[best];
        const int64_t cand[3] = {best + 1, best + w, best + w + 1};
        for (int64_t idx : cand) {
          if (plane[idx] > bv) {
            bv = plane[idx];
            best = idx;
          }
        }
        out.data[static_cast<size_t>(oi)] = bv;
        argmax[static_cast<size_t>(oi)] = static_cast<int64_t>(i) * h * w + best;
        ++oi;
      }
    }
  }
  const int in_id = input.id;
  return input.tape->emit(
      std::move(out), {input.id},
      [in_id, argmax = std::move(argmax)](Tape& t, int self) {
        const Tensor& gout = t.grad(self);
        Tensor& gin = t.grad_slot(in_id);
        for (size_t i = 0; i < argmax.size(); ++i)
          gin.data[static_cast<size_t>(argmax[i])] += gout.data[i];
      },
      "maxpool2d");
}

Var avgpool2d(const Var& input) {
  const Tensor& in = input.value();
  check_shapes(is_nchw(in), "avgpool2d: input must be [N,C,H,W], got " + shape_str(in.shape));
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  check_shapes(h % 2 == 0 && w % 2 == 0,
               "avgpool2d: H and W must be even, got " + shape_str(in.shape));
  const int ho = h / 2, wo = w / 2;
  Tensor out({n, c, ho, wo});
  int64_t oi = 0;
  for (int i = 0; i < n * c; ++i) {
    const double* plane = in.data.data() + static_cast<int64_t>(i) * h * w;
    for (int y = 0; y < ho; ++y) {
      const double* r0 = plane + static_cast<int64_t>(2 * y) * w;
      const double* r1 = r0 + w;
      for (int x = 0; x < wo; ++x)
        out.data[static_cast<size_t>(oi++)] =
            0.25 * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]);
    }
  }
  const int in_id = input.id;
  const int nc = n * c;
  return input.tape->emit(
      std::move(out), {input.id},
      [=](Tape& t, int self) {
        const Tensor& gout = t.grad(self);
        Tensor& gin = t.grad_slot(in_id);
        int64_t gi = 0;
        for (int i = 0; i < nc; ++i) {
          double* plane = gin.data.data() + static_cast<int64_t>(i) * h * w;
          for (int y = 0; y < ho; ++y) {
            double* r0 = plane + static_cast<int64_t>(2 * y) * w;
            double* r1 = r0 + w;
            for (int x = 0; x < wo; ++x) {
              const double g = 0.25 * gout.data[static_cast<size_t>(gi++)];
              r0[2 * x] += g;
              r0[2 * x + 1] += g;
              r1[2 * x] += g;
              r1[2 * x + 1] += g;
            }
          }
        }
      },
      "avgpool2d");
}

namespace {

// Source indices and weights for one axis of x2 bilinear resampling with
// align-corners=false: src = (dst + 0.5)/2 - 0.5, clamped to the edge.
struct LerpAxis {
  std::vector<int> i0, i1;
  std::vector<double> w0, w1;
};

LerpAxis lerp_axis_x2(int src_len) {
  LerpAxis a;
  const int dst_len = 2 * src_len;
  a.i0.resize(static_cast<size_t>(dst_len));
  a.i1.resize(static_cast<size_t>(dst_len));
  a.w0.resize(static_cast<size_t>(dst_len));
  a.w1.resize(static_cast<size_t>(dst_len));
  for (int d = 0; d < dst_len; ++d) {
    const double src = (d + 0.5) * 0.5 - 0.5;
    double fl = std::floor(src);
    double frac = src - fl;
    int lo = static_cast<int>(fl);
    int hi = lo + 1;
    lo = std::clamp(lo, 0, src_len - 1);
    hi = std::clamp(hi, 0, src_len - 1);
    a.i0[static_cast<size_t>(d)] = lo;
    a.i1[static_cast<size_t>(d)] = hi;
    a.w0[static_cast<size_t>(d)] = 1.0 - frac;
    a.w1[static_cast<size_t>(d)] = frac;
  }
  return a;
}

}  // namespace

Var upsample_bilinear2x(const Var& input) {
  const Tensor& in = input.value();
  check_shapes(is_nchw(in),
               "upsample_bilinear2x: input must be [N,C,H,W], got " + shape_str(in.shape));
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  const int ho = 2 * h, wo = 2 * w;
  const LerpAxis ay = lerp_axis_x2(h), ax = lerp_axis_x2(w);
  Tensor out({n, c, ho, wo});
  for (int i = 0; i < n * c; ++i) {
    const double* src = in.data.data() + static_cast<int64_t>(i) * h * w;
    double* dst = out.data.data() + static_cast<int64_t>(i) * ho * wo;
    for (int y = 0; y < ho; ++y) {
      const double* r0 = src + static_cast<int64_t>(ay.i0[static_cast<size_t>(y)]) * w;
      const double* r1 = src + static_cast<int64_t>(ay.i1[static_cast<size_t>(y)]) * w;
      const double wy0 = ay.w0[static_cast<size_t>(y)], wy1 = ay.w1[static_cast<size_t>(y)];
      for (int x = 0; x < wo; ++x) {
        const int x0 = ax.i0[static_cast<size_t>(x)], x1 = ax.i1[static_cast<size_t>(x)];
        const double wx0 = ax.w0[static_cast<size_t>(x)], wx1 = ax.w1[static_cast<size_t>(x)];
        dst[static_cast<int64_t>(y) * wo + x] =
            wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
      }
    }
  }
  const int in_id = input.id, nc = n * c;
  return input.tape->emit(
      std::move(out), {input.id},
      [in_id, nc, h, w, ho, wo, ay, ax](Tape& t, int self) {
        const Tensor& gout = t.grad(self);
        Tensor& gin = t.grad_slot(in_id);
        for (int i = 0; i < nc; ++i) {
          const double* gsrc = gout.data.data() + static_cast<int64_t>(i) * ho * wo;
          double* gdst = gin.data.data() + static_cast<int64_t>(i) * h * w;
          for (int y = 0; y < ho; ++y) {
            double* r0 = gdst + static_cast<int64_t>(ay.i0[static_cast<size_t>(y)]) * w;
            double* r1 = gdst + static_cast<int64_t>(ay.i1[static_cast<size_t>(y)]) * w;
            const double wy0 = ay.w0[static_cast<size_t>(y)], wy1 = ay.w1[static_cast<size_t>(y)];
            for (int x = 0; x < wo; ++x) {
              const int x0 = ax.i0[static_cast<size_t>(x)], x1 = ax.i1[static_cast<size_t>(x)];
              const double wx0 = ax.w0[static_cast<size_t>(x)], wx1 = ax.w1[static_cast<size_t>(x)];
              const double g = gsrc[static_cast<int64_t>(y) * wo + x];
              r0[x0] += wy0 * wx0 * g;
              r0[x1] += wy0 * wx1 * g;
              r1[x0] += wy1 * wx0 * g;
              r1[x1] += wy1 * wx1 * g;
            }
          }
        }
      },
      "upsample_bilinear2x");
}

Var relu(const Var& x) {
  const Tensor& in = x.value();
  Tensor out(in.shape);
  for (int64_t i = 0; i < in.size(); ++i) {
    const double v = in.data[static_cast<size_t>(i)];
    out.data[static_cast<size_t>(i)] = v > 0.0 ? v : 0.0;
  }
  const int in_id = x.id;
  return x.tape->emit(
      std::move(out), {x.id},
      [in_id](Tape& t, int self) {
        const Tensor& gout = t.grad(self);
        const Tensor& in = t.val(in_id);
        Tensor& gin = t.grad_slot(in_id);
        for (int64_t i = 0; i < in.size(); ++i) {
          if (in.data[static_cast<size_t>(i)] > 0.0)
            gin.data[static_cast<size_t>(i)] += gout.data[static_cast<size_t>(i)];
        }
      },
      "relu");
}

Var sigmoid(const Var& x) {
  const Tensor& in = x.value();
  Tensor out(in.shape);
  for (int64_t i = 0; i < in.size(); ++i)
    out.data[static_cast<size_t>(i)] = 1.0 / (1.0 + std::exp(-in.data[static_cast<size_t>(i)]));
  const int in_id = x.id;
  return x.tape->emit(
      std::move(out), {x.id},
      [in_id](Tape& t, int self) {
        const Tensor& gout = t.grad(self);
        const Tensor& s = t.val(self);
        Tensor& gin = t.grad_slot(in_id);
        for (int64_t i = 0; i < s.size(); ++i) {
          const double sv = s.data[static_cast<size_t>(i)];
          gin.data[static_cast<size_t>(i)] += gout.data[static_cast<size_t>(i)] * sv * (1.0 - sv);
        }
      },
      "sigmoid");
}

namespace {

enum class Broadcast {
  kSame,      // identical shapes
  kChannel,   // [N,C,H,W] with [C]
  kCoeffMap,  // [N,C,H,W] with [N,1,H,W]
};

// Resolves the documented broadcast cases; the smaller operand is second in
// the returned pair. Rejects everything else.
struct BroadcastPlan {
  Broadcast kind;
  bool swapped;  // true when `a` is the smaller operand
};

BroadcastPlan broadcast_plan(const Tensor& a, const Tensor& b, const char* opname) {
  if (a.shape == b.shape) return {Broadcast::kSame, false};
  auto channel_case = [](const Tensor& big, const Tensor& small) {
    return is_nchw(big) && small.ndim() == 1 && small.dim(0) == big.dim(1);
  };
  auto coeff_case = [](const Tensor& big, const Tensor& small) {
    return is_nchw(big) && is_nchw(small) && small.dim(1) == 1 && big.dim(0) == small.dim(0) &&
           big.dim(2) == small.dim(2) && big.dim(3) == small.dim(3);
  };
  if (channel_case(a, b)) return {Broadcast::kChannel, false};
  if (channel_case(b, a)) return {Broadcast::kChannel, true};
  if (coeff_case(a, b)) return {Broadcast::kCoeffMap, false};
  if (coeff_case(b, a)) return {Broadcast::kCoeffMap, true};
  throw std::invalid_argument(std::string(opname) + ": shapes " + shape_str(a.shape) + " and " +
                              shape_str(b.shape) +
                              " are neither equal nor a documented channel/bias broadcast");
}

template <class Fn>
void for_each_broadcast(const Tensor& big, const Tensor& small, Broadcast kind, Fn&& fn) {
  // fn(big_index, small_index)
  if (kind == Broadcast::kSame) {
    for (int64_t i = 0; i < big.size(); ++i) fn(i, i);
    return;
  }
  const int n = big.dim(0), c = big.dim(1), h = big.dim(2), w = big.dim(3);
  const int64_t plane = static_cast<int64_t>(h) * w;
  if (kind == Broadcast::kChannel) {
    int64_t i = 0;
    for (int ni = 0; ni < n; ++ni)
      for (int ci = 0; ci < c; ++ci)
        for (int64_t p = 0; p < plane; ++p) fn(i++, static_cast<int64_t>(ci));
    return;
  }
  int64_t i = 0;
  for (int ni = 0; ni < n; ++ni)
    for (int ci = 0; ci < c; ++ci)
      for (int64_t p = 0; p < plane; ++p) fn(i++, static_cast<int64_t>(ni) * plane + p);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const BroadcastPlan plan = broadcast_plan(av, bv, "add");
  const Tensor& big = plan.swapped ? bv : av;
  const Tensor& small = plan.swapped ? av : bv;
  Tensor out(big.shape);
  for_each_broadcast(big, small, plan.kind, [&](int64_t bi, int64_t si) {
    out.data[static_cast<size_t>(bi)] =
        big.data[static_cast<size_t>(bi)] + small.data[static_cast<size_t>(si)];
  });
  const int big_id = plan.swapped ? b.id : a.id;
  const int small_id = plan.swapped ? a.id : b.id;
  const Broadcast kind = plan.kind;
  return a.tape->emit(
      std::move(out), {a.id, b.id},
      [big_id, small_id, kind](Tape& t, int self) {
        const Tensor& gout = t.grad(self);
        Tensor& gbig = t.grad_slot(big_id);
        Tensor& gsmall = t.grad_slot(small_id);
        for_each_broadcast(t.val(big_id), t.val(small_id), kind, [&](int64_t bi, int64_t si) {
          gbig.data[static_cast<size_t>(bi)] += gout.data[static_cast<size_t>(bi)];
          gsmall.data[static_cast<size_t>(si)] += gout.data[static_cast<size_t>(bi)];
        });
      },
      "add");
}

Var mul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const BroadcastPlan plan = broadcast_plan(av, bv, "mul");
  const Tensor& big = plan.swapped ? bv : av;
  const Tensor& small = plan.swapped ? av : bv;
  Tensor out(big.shape);
  for_each_broadcast(big, small, plan.kind, [&](int64_t bi, int64_t si) {
    out.data[static_cast<size_t>(bi)] =
        big.data[static_cast<size_t>(bi)] * small.data[static_cast<size_t>(si)];
  });
  const int big_id = plan.swapped ? b.id : a.id;
  const int small_id = plan.swapped ? a.id : b.id;
  const Broadcast kind = plan.kind;
  return a.tape->emit(
      std::move(out), {a.id, b.id},
      [big_id, small_id, kind](Tape& t, int self) {
        const Tensor& gout = t.grad(self);
        const Tensor& big = t.val(big_id);
        const Tensor& small = t.val(small_id);
        Tensor& gbig = t.grad_slot(big_id);
        Tensor& gsmall = t.grad_slot(small_id);
        for_each_broadcast(big, small, kind, [&](int64_t bi, int64_t si) {
          gbig.data[static_cast<size_t>(bi)] +=
              gout.data[static_cast<size_t>(bi)] * small.data[static_cast<size_t>(si)];
          gsmall.data[static_cast<size_t>(si)] +=
              gout.data[static_cast<size_t>(bi)] * big.data[static_cast<size_t>(bi)];
        });
      },
      "mul");
}

Var div(const Var& a, const Var& b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_shapes(av.shape == bv.shape, "div: shapes must match, got " + shape_str(av.shape) +
                                         " and " + shape_str(bv.shape));
  Tensor out(av.shape);
  for (int64_t i = 0; i < av.size(); ++i)
    out.data[static_cast<size_t>(i)] =
        av.data[static_cast<size_t>(i)] / bv.data[static_cast<size_t>(i)];
  const int a_id = a.id, b_id = b.id;
  return a.tape->emit(
      std::move(out), {a.id, b.id},
      [a_id, b_id](Tape& t, int self) {
        const Tensor& gout = t.grad(self);
        const Tensor& av = t.val(a_id);
        const Tensor& bv = t.val(b_id);
        Tensor& ga = t.grad_slot(a_id);
        Tensor& gb = t.grad_slot(b_id);
        for (int64_t i = 0; i < av.size(); ++i) {
          const double g = gout.data[static_cast<size_t>(i)];
          const double bi = bv.data[static_cast<size_t>(i)];
          ga.data[static_cast<size_t>(i)] += g / bi;
          gb.data[static_cast<size_t>(i)] -= g * av.data[static_cast<size_t>(i)] / (bi * bi);
        }
      },
      "div");
}

Var affine(const Var& x, double scale, double shift) {
  const Tensor& in = x.value();
  Tensor out(in.shape);
  for (int64_t i = 0; i < in.size(); ++i)
    out.data[static_cast<size_t>(i)] = scale * in.data[static_cast<size_t>(i)] + shift;
  const int in_id = x.id;
  return x.tape->emit(
      std::move(out), {x.id},
      [in_id, scale](Tape& t, int self) {
        const Tensor& gout = t.grad(self);
        Tensor& gin = t.grad_slot(in_id);
        for (int64_t i = 0; i < gout.size(); ++i)
          gin.data[static_cast<size_t>(i)] += scale * gout.data[static_cast<size_t>(i)];
      },
      "affine");
}

Var pow_scalar(const Var& x, double exponent) {
  const Tensor& in = x.value();
  for (int64_t i = 0; i < in.size(); ++i) {
    if (in.data[static_cast<size_t>(i)] < 0.0)
      throw std::invalid_argument("pow_scalar: negative base " +
                                  std::to_string(in.data[static_cast<size_t>(i)]) +
                                  " at index " + std::to_string(i));
  }
  Tensor out(in.shape);
  if (exponent == 1.0) {
    out.data = in.data;
  } else {
    for (int64_t i = 0; i < in.size(); ++i)
      out.data[static_cast<size_t>(i)] = std::pow(in.data[static_cast<size_t>(i)], exponent);
  }
  const int in_id = x.id;
  return x.tape->emit(
      std::move(out), {x.id},
      [in_id, exponent](Tape& t, int self) {
        const Tensor& gout = t.grad(self);
        const Tensor& in = t.val(in_id);
        Tensor& gin = t.grad_slot(in_id);
        for (int64_t i = 0; i < in.size(); ++i) {
          const double b = in.data[static_cast<size_t>(i)];
          double d;
          if (b > 0.0)
            d = exponent * std::pow(b, exponent - 1.0);
          else
            d = exponent == 1.0 ? 1.0 : 0.0;
          gin.data[static_cast<size_t>(i)] += gout.data[static_cast<size_t>(i)] * d;
        }
      },
      "pow_scalar");
}

Var clamp01(const Var& x) {
  const Tensor& in = x.value();
  Tensor out(in.shape);
  for (int64_t i = 0; i < in.size(); ++i)
    out.data[static_cast<size_t>(i)] = std::clamp(in.data[static_cast<size_t>(i)], 0.0, 1.0);
  const int in_id = x.id;
  return x.tape->emit(
      std::move(out), {x.id},
      [in_id](Tape& t, int self) {
        const Tensor& gout = t.grad(self);
        const Tensor& in = t.val(in_id);
        Tensor& gin = t.grad_slot(in_id);
        for (int64_t i = 0; i < in.size(); ++i) {
          const double v = in.data[static_cast<size_t>(i)];
          if (v > 0.0 && v < 1.0)
            gin.data[static_cast<size_t>(i)] += gout.data[static_cast<size_t>(i)];
        }
      },
      "clamp01");
}

Var concat_channels(const Var& a, const Var& b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_shapes(is_nchw(av) && is_nchw(bv), "concat_channels: operands must be [N,C,H,W], got " +
                                               shape_str(av.shape) + " and " +
                                               shape_str(bv.shape));
  check_shapes(av.dim(0) == bv.dim(0) && av.dim(2) == bv.dim(2) && av.dim(3) == bv.dim(3),
               "concat_channels: N/H/W mismatch between " + shape_str(av.shape) + " and " +
                   shape_str(bv.shape));
  const int n = av.dim(0), ca = av.dim(1), cb = bv.dim(1), h = av.dim(2), w = av.dim(3);
  const int64_t plane = static_cast<int64_t>(h) * w;
  Tensor out({n, ca + cb, h, w});
  for (int ni = 0; ni < n; ++ni) {
    std::copy_n(av.data.data() + static_cast<int64_t>(ni) * ca * plane, ca * plane,
                out.data.data() + static_cast<int64_t>(ni) * (ca + cb) * plane);
    std::copy_n(bv.data.data() + static_cast<int64_t>(ni) * cb * plane, cb * plane,
                out.data.data() + (static_cast<int64_t>(ni) * (ca + cb) + ca) * plane);
  }
  const int a_id = a.id, b_id = b.id;
  return a.tape->emit(
      std::move(out), {a.id, b.id},
      [a_id, b_id, n, ca, cb, plane](Tape& t, int self) {
        const Tensor& gout = t.grad(self);
        Tensor& ga = t.grad_slot(a_id);
        Tensor& gb = t.grad_slot(b_id);
        for (int ni = 0; ni < n; ++ni) {
          const double* src = gout.data.data() + static_cast<int64_t>(ni) * (ca + cb) * plane;
          double* da = ga.data.data() + static_cast<int64_t>(ni) * ca * plane;
          double* db = gb.data.data() + static_cast<int64_t>(ni) * cb * plane;
          for (int64_t i = 0; i < ca * plane; ++i) da[i] += src[i];
          for (int64_t i = 0; i < cb * plane; ++i) db[i] += src[ca * plane + i];
        }
      },
      "concat_channels");
}

Var slice_channels(const Var& x, int begin, int end) {
  const Tensor& in = x.value();
  check_shapes(is_nchw(in), "slice_channels: input must be [N,C,H,W], got " + shape_str(in.shape));
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  check_shapes(0 <= begin && begin <= end && end <= c,
               "slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
                   ") out of bounds for " + shape_str(in.shape));
  const int co = end - begin;
  const int64_t plane = static_cast<int64_t>(h) * w;
  Tensor out({n, co, h, w});
  for (int ni = 0; ni < n; ++ni)
    std::copy_n(in.data.data() + (static_cast<int64_t>(ni) * c + begin) * plane, co * plane,
                out.data.data() + static_cast<int64_t>(ni) * co * plane);
  const int in_id = x.id;
  return x.tape->emit(
      std::move(out), {x.id},
      [in_id, n, c, co, begin, plane](Tape& t, int self) {
        const Tensor& gout = t.grad(self);
        Tensor& gin = t.grad_slot(in_id);
        for (int ni = 0; ni < n; ++ni) {
          const double* src = gout.data.data() + static_cast<int64_t>(ni) * co * plane;
          double* dst = gin.data.data() + (static_cast<int64_t>(ni) * c + begin) * plane;
          for (int64_t i = 0; i < co * plane; ++i) dst[i] += src[i];
        }
      },
      "slice_channels");
}

Var sum(const Var& x) {
  const Tensor& in = x.value();
  double acc = 0.0;
  for (double v : in.data) acc += v;
  Tensor out({1});
  out.data[0] = acc;
  const int in_id = x.id;
  return x.tape->emit(
      std::move(out), {x.id},
      [in_id](Tape& t, int self) {
        const double g = t.grad(self).data[0];
        Tensor& gin = t.grad_slot(in_id);
        for (double& v : gin.data) v += g;
      },
      "sum");
}

}  // namespace ftseg
