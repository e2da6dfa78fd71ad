// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#include "ftseg/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ftseg {

namespace {

// Skips whitespace and '#' comment lines between pnm header tokens.
int next_header_int(std::istream& in, const std::string& path) {
  int c = in.peek();
  while (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#') {
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else {
      in.get();
    }
    c = in.peek();
  }
  int value;
  if (!(in >> value)) throw std::runtime_error("unreadable pnm header in '" + path + "'");
  return value;
}

}  // namespace

ImageU8 read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read image '" + path + "'");
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || (m1 != '5' && m1 != '6'))
    throw std::runtime_error("'" + path + "' is not a binary P5/P6 netpbm file");
  ImageU8 img;
  img.channels = m1 == '5' ? 1 : 3;
  img.width = next_header_int(in, path);
  img.height = next_header_int(in, path);
  const int maxval = next_header_int(in, path);
  if (maxval != 255)
    throw std::runtime_error("'" + path + "': only maxval 255 is supported, got " +
                             std::to_string(maxval));
  if (img.width <= 0 || img.height <= 0)
    throw std::runtime_error("'" + path + "': bad dimensions");
  in.get();  // single whitespace after maxval
  img.pixels.resize(static_cast<size_t>(img.width) * img.height * img.channels);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw std::runtime_error("'" + path + "': truncated pixel data");
  return img;
}

void write_pnm(const std::string& path, const ImageU8& image) {
  if (image.channels != 1 && image.channels != 3)
    throw std::invalid_argument("write_pnm: channels must be 1 or 3, got " +
                                std::to_string(image.channels));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image '" + path + "'");
  out << (image.channels == 1 ? "P5" : "P6") << '\n'
      << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw std::runtime_error("short write on image '" + path + "'");
}

Tensor image_to_tensor(const ImageU8& image) {
  Tensor t({image.channels, image.height, image.width});
  const int64_t plane = static_cast<int64_t>(image.height) * image.width;
  for (int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < image.channels; ++c)
      t.data[static_cast<size_t>(c * plane + i)] =
          image.pixels[static_cast<size_t>(i * image.channels + c)] / 255.0;
  return t;
}

ImageU8 tensor_to_image(const Tensor& chw) {
  check_shapes(chw.ndim() == 3 && (chw.dim(0) == 1 || chw.dim(0) == 3),
               "tensor_to_image: expected [1|3,H,W], got " + shape_str(chw.shape));
  ImageU8 img;
  img.channels = chw.dim(0);
  img.height = chw.dim(1);
  img.width = chw.dim(2);
  const int64_t plane = static_cast<int64_t>(img.height) * img.width;
  img.pixels.resize(static_cast<size_t>(plane * img.channels));
  for (int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < img.channels; ++c) {
      const double v = std::clamp(chw.data[static_cast<size_t>(c * plane + i)], 0.0, 1.0);
      img.pixels[static_cast<size_t>(i * img.channels + c)] =
          static_cast<uint8_t>(std::lround(v * 255.0));
    }
  return img;
}

Tensor resize_bilinear(const Tensor& chw, int target_h, int target_w) {
  check_shapes(chw.ndim() == 3, "resize: expected [C,H,W], got " + shape_str(chw.shape));
  check_shapes(target_h > 0 && target_w > 0, "resize: target must be positive");
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  if (h == target_h && w == target_w) return chw;
  Tensor out({c, target_h, target_w});
  const double sy = static_cast<double>(h) / target_h;
  const double sx = static_cast<double>(w) / target_w;
  for (int ci = 0; ci < c; ++ci) {
    const double* src = chw.data.data() + static_cast<int64_t>(ci) * h * w;
    double* dst = out.data.data() + static_cast<int64_t>(ci) * target_h * target_w;
    for (int y = 0; y < target_h; ++y) {
      const double fy = (y + 0.5) * sy - 0.5;
      int y0 = static_cast<int>(std::floor(fy));
      const double wy = fy - y0;
      int y1 = std::clamp(y0 + 1, 0, h - 1);
      y0 = std::clamp(y0, 0, h - 1);
      for (int x = 0; x < target_w; ++x) {
        const double fx = (x + 0.5) * sx - 0.5;
        int x0 = static_cast<int>(std::floor(fx));
        const double wx = fx - x0;
        int x1 = std::clamp(x0 + 1, 0, w - 1);
        x0 = std::clamp(x0, 0, w - 1);
        dst[static_cast<int64_t>(y) * target_w + x] =
            (1.0 - wy) * ((1.0 - wx) * src[static_cast<int64_t>(y0) * w + x0] +
                          wx * src[static_cast<int64_t>(y0) * w + x1]) +
            wy * ((1.0 - wx) * src[static_cast<int64_t>(y1) * w + x0] +
                  wx * src[static_cast<int64_t>(y1) * w + x1]);
      }
    }
  }
  return out;
}

Tensor resize_nearest(const Tensor& chw, int target_h, int target_w) {
  check_shapes(chw.ndim() == 3, "resize: expected [C,H,W], got " + shape_str(chw.shape));
  check_shapes(target_h > 0 && target_w > 0, "resize: target must be positive");
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  if (h == target_h && w == target_w) return chw;
  Tensor out({c, target_h, target_w});
  const double sy = static_cast<double>(h) / target_h;
  const double sx = static_cast<double>(w) / target_w;
  for (int ci = 0; ci < c; ++ci) {
    const double* src = chw.data.data() + static_cast<int64_t>(ci) * h * w;
    double* dst = out.data.data() + static_cast<int64_t>(ci) * target_h * target_w;
    for (int y = 0; y < target_h; ++y) {
      const int ys = std::min(static_cast<int>(std::floor((y + 0.5) * sy)), h - 1);
      for (int x = 0; x < target_w; ++x) {
        const int xs = std::min(static_cast<int>(std::floor((x + 0.5) * sx)), w - 1);
        dst[static_cast<int64_t>(y) * target_w + x] = src[static_cast<int64_t>(ys) * w + xs];
      }
    }
  }
  return out;
}

}  // namespace ftseg
