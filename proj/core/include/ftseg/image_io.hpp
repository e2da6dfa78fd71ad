// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftseg/tensor.hpp"

namespace ftseg {

/// 8-bit raster, interleaved row-major. channels is 1 (gray) or 3 (rgb).
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<uint8_t> pixels;
};

/// Reads a binary netpbm file (P5 grayscale or P6 rgb, maxval 255).
ImageU8 read_pnm(const std::string& path);

/// Writes P5 for 1-channel images, P6 for 3-channel.
void write_pnm(const std::string& path, const ImageU8& image);

Tensor image_to_tensor(const ImageU8& image);  // [C,H,W], values v/255
ImageU8 tensor_to_image(const Tensor& chw);    // round(v*255), clamped

/// Bilinear resampling to [target_h, target_w], align-corners=false.
Tensor resize_bilinear(const Tensor& chw, int target_h, int target_w);

/// Nearest-neighbour resampling; the right tool for masks, where
/// interpolation would manufacture soft labels.
Tensor resize_nearest(const Tensor& chw, int target_h, int target_w);

}  // namespace ftseg
