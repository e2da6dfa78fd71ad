// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "ftseg/data.hpp"
#include "ftseg/image_io.hpp"
#include "ftseg/rng.hpp"

namespace ftseg {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

int64_t min_foreground_pixels(const SyntheticConfig& cfg) {
  return std::max<int64_t>(
      1, static_cast<int64_t>(std::ceil(cfg.area_lo * cfg.height * cfg.width)));
}

int64_t max_foreground_pixels(const SyntheticConfig& cfg) {
  return static_cast<int64_t>(std::floor(cfg.area_hi * cfg.height * cfg.width));
}

}  // namespace

void SyntheticConfig::validate() const {
  if (count < 0) throw std::invalid_argument("synthetic: count must be >= 0");
  if (height <= 0 || width <= 0) throw std::invalid_argument("synthetic: size must be positive");
  if (channels != 1 && channels != 3)
    throw std::invalid_argument("synthetic: channels must be 1 or 3, got " +
                                std::to_string(channels));
  if (!(area_lo > 0.0 && area_lo <= area_hi && area_hi < 0.5))
    throw std::invalid_argument("synthetic: need 0 < area_lo <= area_hi < 0.5, got (" +
                                std::to_string(area_lo) + ", " + std::to_string(area_hi) + ")");
  if (noise_sigma < 0.0) throw std::invalid_argument("synthetic: noise_sigma must be >= 0");
  if (contrast < 0.0) throw std::invalid_argument("synthetic: contrast must be >= 0");
  if (max_foreground_pixels(*this) < min_foreground_pixels(*this))
    throw std::invalid_argument("synthetic: area range (" + std::to_string(area_lo) + ", " +
                                std::to_string(area_hi) + ") is unattainable at " +
                                std::to_string(width) + "x" + std::to_string(height) +
                                ": no whole pixel count falls inside it");
}

SyntheticConfig bus_like_preset() {
  SyntheticConfig cfg;
  cfg.height = 64;
  cfg.width = 64;
  cfg.channels = 1;
  cfg.area_lo = 0.02;
  cfg.area_hi = 0.10;
  cfg.contrast = 0.25;
  cfg.noise_sigma = 0.05;
  return cfg;
}

SyntheticConfig isic_like_preset() {
  SyntheticConfig cfg;
  cfg.height = 96;
  cfg.width = 128;
  cfg.channels = 3;
  cfg.area_lo = 0.10;
  cfg.area_hi = 0.40;
  cfg.contrast = 0.25;
  cfg.noise_sigma = 0.05;
  return cfg;
}

namespace {

struct Ellipse {
  double cx, cy;     // center, pixels
  double a0, b0;     // unit-scale semi-axes
  double cos_t, sin_t;
};

// Union rasterization at a global axis scale; pixel centers at (x+.5, y+.5).
// Monotone in the scale, which the area search below relies on.
int64_t rasterize(const std::vector<Ellipse>& ellipses, double scale, int h, int w,
                  std::vector<uint8_t>& out) {
  std::fill(out.begin(), out.end(), 0);
  int64_t count = 0;
  for (const Ellipse& e : ellipses) {
    const double a = e.a0 * scale, b = e.b0 * scale;
    const double r = std::max(a, b);
    const int y_lo = std::max(0, static_cast<int>(std::floor(e.cy - r)));
    const int y_hi = std::min(h - 1, static_cast<int>(std::ceil(e.cy + r)));
    const int x_lo = std::max(0, static_cast<int>(std::floor(e.cx - r)));
    const int x_hi = std::min(w - 1, static_cast<int>(std::ceil(e.cx + r)));
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        uint8_t& cell = out[static_cast<size_t>(y) * w + x];
        if (cell) continue;
        const double dx = (x + 0.5) - e.cx;
        const double dy = (y + 0.5) - e.cy;
        const double u = (dx * e.cos_t + dy * e.sin_t) / a;
        const double v = (-dx * e.sin_t + dy * e.cos_t) / b;
        if (u * u + v * v <= 1.0) {
          cell = 1;
          ++count;
        }
      }
    }
  }
  return count;
}

// Smallest scale whose rasterized pixel count reaches the target.
double search_scale(const std::vector<Ellipse>& ellipses, int64_t target, int h, int w,
                    std::vector<uint8_t>& scratch) {
  double hi = 1.0;
  while (rasterize(ellipses, hi, h, w, scratch) < target) {
    hi *= 2.0;
    if (hi > 1e4)
      throw std::invalid_argument("synthetic: lesion target area unreachable while growing");
  }
  double lo = 0.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (rasterize(ellipses, mid, h, w, scratch) >= target)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

}  // namespace

Sample generate_sample(const SyntheticConfig& cfg, int index) {
  cfg.validate();
  const int h = cfg.height, w = cfg.width, c = cfg.channels;
  const int64_t pixels = static_cast<int64_t>(h) * w;

  // Separate streams so the background is untouched by lesion parameters:
  // with contrast 0 the image is the background field, whatever the mask.
  Rng bg = Rng::keyed(cfg.seed, static_cast<uint64_t>(index) * 2);
  Rng lesion = Rng::keyed(cfg.seed, static_cast<uint64_t>(index) * 2 + 1);

  // Smooth low-frequency field from three random cosine waves.
  struct Wave {
    double amp, fx, fy, phase;
  };
  Wave waves[3];
  double amp_total = 0.0;
  for (Wave& wv : waves) {
    wv.amp = bg.uniform(0.5, 1.0);
    wv.fx = bg.uniform(0.5, 2.5);
    wv.fy = bg.uniform(0.5, 2.5);
    wv.phase = bg.uniform(0.0, kTwoPi);
    amp_total += wv.amp;
  }
  std::vector<double> field(static_cast<size_t>(pixels));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = 0.0;
      for (const Wave& wv : waves)
        v += wv.amp * std::cos(kTwoPi * (wv.fx * x / w + wv.fy * y / h) + wv.phase);
      field[static_cast<size_t>(y) * w + x] = 0.5 + 0.15 * (v / amp_total);
    }
  }

  Tensor image({c, h, w});
  for (int ci = 0; ci < c; ++ci) {
    const double tint = c == 1 ? 1.0 : bg.uniform(0.7, 1.0);
    double* plane = image.data.data() + static_cast<int64_t>(ci) * pixels;
    for (int64_t i = 0; i < pixels; ++i)
      plane[i] = tint * field[static_cast<size_t>(i)] + cfg.noise_sigma * bg.gaussian();
  }

  // Lesion: 1-3 ellipses whose union pixel count is pushed to the drawn
  // target fraction, staying inside [area_lo, area_hi] by construction.
  const double fraction = lesion.uniform(cfg.area_lo, cfg.area_hi);
  const int n_ellipses = 1 + static_cast<int>(lesion.below(3));
  std::vector<Ellipse> ellipses;
  double weight_total = 0.0;
  std::vector<double> weights;
  for (int k = 0; k < n_ellipses; ++k) {
    Ellipse e;
    e.cx = lesion.uniform(0.25, 0.75) * w;
    e.cy = lesion.uniform(0.25, 0.75) * h;
    const double aspect = lesion.uniform(0.5, 2.0);
    const double theta = lesion.uniform(0.0, kTwoPi / 2.0);
    e.cos_t = std::cos(theta);
    e.sin_t = std::sin(theta);
    e.a0 = std::sqrt(aspect);  // filled in below once weights are known
    e.b0 = 1.0 / std::sqrt(aspect);
    ellipses.push_back(e);
    weights.push_back(lesion.uniform(0.5, 1.5));
    weight_total += weights.back();
  }
  constexpr double kPi = kTwoPi / 2.0;
  for (int k = 0; k < n_ellipses; ++k) {
    const double area = fraction * pixels * weights[static_cast<size_t>(k)] / weight_total;
    const double radius = std::sqrt(area / kPi);
    ellipses[static_cast<size_t>(k)].a0 *= radius;
    ellipses[static_cast<size_t>(k)].b0 *= radius;
  }
  // Lesions render darker than their surroundings, as in the ultrasound and
  // dermoscopy regimes this benchmark stands in for.
  const double sign = -1.0;

  const int64_t t_min = min_foreground_pixels(cfg);
  const int64_t t_max = max_foreground_pixels(cfg);
  int64_t target = std::clamp(static_cast<int64_t>(std::llround(fraction * pixels)), t_min, t_max);
  std::vector<uint8_t> raster(static_cast<size_t>(pixels));
  double scale = search_scale(ellipses, target, h, w, raster);
  int64_t actual = rasterize(ellipses, scale, h, w, raster);
  if (actual > t_max) {
    // Degenerate alignment made the count jump past the window; retreat to
    // the smallest admissible target.
    scale = search_scale(ellipses, t_min, h, w, raster);
    actual = rasterize(ellipses, scale, h, w, raster);
    if (actual > t_max)
      throw std::invalid_argument("synthetic: could not rasterize a lesion inside the area range");
  }

  Tensor mask({1, h, w});
  for (int64_t i = 0; i < pixels; ++i) mask.data[static_cast<size_t>(i)] = raster[static_cast<size_t>(i)];
  for (int ci = 0; ci < c; ++ci) {
    double* plane = image.data.data() + static_cast<int64_t>(ci) * pixels;
    for (int64_t i = 0; i < pixels; ++i) {
      if (raster[static_cast<size_t>(i)]) plane[i] += sign * cfg.contrast;
      plane[i] = std::clamp(plane[i], 0.0, 1.0);
    }
  }

  char id[32];
  std::snprintf(id, sizeof id, "synth-%06d", index);
  return Sample{std::move(image), std::move(mask), id};
}

std::vector<Sample> generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  std::vector<Sample> samples;
  samples.reserve(static_cast<size_t>(cfg.count));
  for (int i = 0; i < cfg.count; ++i) samples.push_back(generate_sample(cfg, i));
  return samples;
}

void export_dataset(std::span<const Sample> samples, const std::string& root) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(root) / "images");
  fs::create_directories(fs::path(root) / "masks");
  for (const Sample& s : samples) {
    const char* ext = s.image.dim(0) == 1 ? ".pgm" : ".ppm";
    write_pnm((fs::path(root) / "images" / (s.id + ext)).string(), tensor_to_image(s.image));
    write_pnm((fs::path(root) / "masks" / (s.id + ".pgm")).string(), tensor_to_image(s.mask));
  }
}

}  // namespace ftseg
