// Copyright (c) 2026 ftseg contributors
// Licensed under the Apache License, Version 2.0.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <stdexcept>

#include "ftseg/data.hpp"
#include "ftseg/image_io.hpp"
#include "ftseg/rng.hpp"

namespace ftseg {

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split: train_fraction must lie in (0,1), got " +
                                std::to_string(train_fraction));
  if (folds < 2)
    throw std::invalid_argument("split: folds must be >= 2, got " + std::to_string(folds));
}

namespace {

std::vector<size_t> shuffled_indices(size_t n, uint64_t seed, uint64_t stream) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng = Rng::keyed(seed, stream);
  for (size_t i = n; i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.below(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace

SplitResult split(std::span<const Sample> samples, const SplitSpec& spec) {
  spec.validate();
  const size_t n = samples.size();
  if (n < 2) throw std::invalid_argument("split: need at least 2 samples, got " + std::to_string(n));
  const auto idx = shuffled_indices(n, spec.seed, /*stream=*/1);
  size_t train_count =
      static_cast<size_t>(std::ceil(spec.train_fraction * static_cast<double>(n)));
  train_count = std::clamp<size_t>(train_count, 1, n - 1);
  SplitResult result;
  result.train.reserve(train_count);
  result.test.reserve(n - train_count);
  for (size_t i = 0; i < n; ++i) {
    (i < train_count ? result.train : result.test).push_back(samples[idx[i]]);
  }
  return result;
}

std::vector<Fold> kfold(std::span<const Sample> samples, int folds, uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("kfold: folds must be >= 2, got " + std::to_string(folds));
  const size_t n = samples.size();
  if (n < static_cast<size_t>(folds))
    throw std::invalid_argument("kfold: " + std::to_string(n) + " samples cannot fill " +
                                std::to_string(folds) + " folds");
  const auto idx = shuffled_indices(n, seed, /*stream=*/2);
  const size_t base = n / static_cast<size_t>(folds);
  const size_t rem = n % static_cast<size_t>(folds);
  std::vector<Fold> result(static_cast<size_t>(folds));
  size_t cursor = 0;
  for (size_t f = 0; f < static_cast<size_t>(folds); ++f) {
    const size_t size = base + (f < rem ? 1 : 0);
    const size_t begin = cursor, end = cursor + size;
    cursor = end;
    Fold& fold = result[f];
    fold.validation.reserve(size);
    fold.train.reserve(n - size);
    for (size_t i = 0; i < n; ++i)
      (i >= begin && i < end ? fold.validation : fold.train).push_back(samples[idx[i]]);
  }
  return result;
}

namespace {

namespace fs = std::filesystem;

bool pnm_extension(const fs::path& p) {
  const std::string ext = p.extension().string();
  return ext == ".pgm" || ext == ".ppm";
}

std::map<std::string, fs::path> scan_rasters(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::invalid_argument("'" + dir + "' is not a directory");
  std::map<std::string, fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !pnm_extension(entry.path())) continue;
    const std::string base = entry.path().stem().string();
    if (!files.emplace(base, entry.path()).second)
      throw std::invalid_argument("duplicate basename '" + base + "' in '" + dir + "'");
  }
  return files;
}

}  // namespace

std::vector<Sample> load_image_dir(const std::string& images_path, const std::string& masks_path,
                                   int target_h, int target_w) {
  auto images = scan_rasters(images_path);
  auto masks = scan_rasters(masks_path);

  std::string orphans;
  for (const auto& [base, path] : images)
    if (!masks.count(base)) orphans += " " + path.string();
  for (const auto& [base, path] : masks)
    if (!images.count(base)) orphans += " " + path.string();
  if (!orphans.empty())
    throw std::invalid_argument("unpaired dataset files:" + orphans);

  std::vector<Sample> samples;
  samples.reserve(images.size());
  for (const auto& [base, path] : images) {  // std::map iterates sorted by basename
    Sample s;
    s.id = base;
    s.image = resize_bilinear(image_to_tensor(read_pnm(path.string())), target_h, target_w);
    const ImageU8 mask_img = read_pnm(masks.at(base).string());
    if (mask_img.channels != 1)
      throw std::invalid_argument("mask '" + masks.at(base).string() +
                                  "' must be single-channel 8-bit");
    Tensor mask = resize_nearest(image_to_tensor(mask_img), target_h, target_w);
    for (double& v : mask.data) v = v > 0.5 ? 1.0 : 0.0;
    s.mask = std::move(mask);
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace ftseg
