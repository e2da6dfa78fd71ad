// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ftseg/tensor.hpp"

namespace ftseg {

struct Sample {
  Tensor image;  // [C,H,W], values in [0,1]
  Tensor mask;   // [1,H,W], strictly binary
  std::string id;
};

/// Synthetic imbalanced-lesion benchmark: a smooth low-frequency intensity
/// field plus Gaussian noise, with 1-3 filled random ellipses rendered at
/// background +/- contrast. The rasterized foreground fraction of every
/// sample lands inside [area_lo, area_hi] by construction. Fully determined
/// by (seed, index) through the portable Rng, so datasets are bit-identical
/// across platforms.
struct SyntheticConfig {
  int count = 0;
  int height = 64;
  int width = 64;
  int channels = 1;
  double area_lo = 0.02;
  double area_hi = 0.10;
  double contrast = 0.25;
  double noise_sigma = 0.05;
  uint64_t seed = 0;

  void validate() const;
};

/// 64x64 grayscale, 2-10% lesion area: the small-ROI regime.
SyntheticConfig bus_like_preset();
/// 96x128 rgb, 10-40% lesion area: the large-lesion regime.
SyntheticConfig isic_like_preset();

Sample generate_sample(const SyntheticConfig& cfg, int index);
std::vector<Sample> generate_synthetic(const SyntheticConfig& cfg);

/// Writes `<root>/images/<id>.pgm|ppm` and `<root>/masks/<id>.pgm`.
void export_dataset(std::span<const Sample> samples, const std::string& root);

/// Loads paired rasters from `images/` and `masks/` under the two paths,
/// pairing files by basename and sorting pairs by it. Images are rescaled to
/// [0,1] and bilinearly resampled to target; masks are nearest-neighbour
/// resampled and thresholded at 0.5. Unpaired or unreadable files are
/// rejected with the offender named.
std::vector<Sample> load_image_dir(const std::string& images_path, const std::string& masks_path,
                                   int target_h, int target_w);

struct SplitSpec {
  double train_fraction = 0.75;
  int folds = 5;
  uint64_t seed = 0;

  void validate() const;  // 0 < train_fraction < 1, folds >= 2
};

struct SplitResult {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// Deterministic shuffle by seed, then the first ceil(fraction*n) samples
/// become the training set. Disjoint and exhaustive.
SplitResult split(std::span<const Sample> samples, const SplitSpec& spec);

struct Fold {
  std::vector<Sample> train;
  std::vector<Sample> validation;
};

/// Disjoint, exhaustive validation folds with sizes differing by at most
/// one; the first n%folds folds take the extra sample.
std::vector<Fold> kfold(std::span<const Sample> samples, int folds, uint64_t seed);

}  // namespace ftseg
