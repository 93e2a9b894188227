#pragma once

// Synthetic salient-shape data, augmentation, and on-disk datasets
// (images/<stem>.ppm + masks/<stem>.pgm).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "c4net/netpbm.hpp"
#include "c4net/rng.hpp"

namespace c4net {

struct ToySample {
  std::string id;
  Image image;  // (3,H,W) in [0,1]
  Image mask;   // (1,H,W) in {0,1}
};

// 1-3 ellipses / rectangles / triangles on a textured background; mask
// coverage is kept within [0.05, 0.6] and the grey-level contrast between
// every shape colour and the background base colour is at least 0.2.
std::vector<ToySample> generate_dataset(int n, int size, std::uint64_t seed);

inline constexpr double kMinCoverage = 0.05;
inline constexpr double kMaxCoverage = 0.6;
inline constexpr double kMinContrast = 0.2;

double mask_coverage(const Image& mask);

struct AugmentOptions {
  bool crop = true;
  bool flip = true;
  double min_crop = 0.75;
};

// Random square crop of 0.75-1.0 of the extent resized back (bilinear image,
// nearest mask) and a horizontal flip with probability 0.5.
ToySample augment(const ToySample& sample, Rng& rng, const AugmentOptions& opts = {});

// Deterministic building blocks of augment().
ToySample crop_resize(const ToySample& sample, int top, int left, int extent);
ToySample flip_horizontal(const ToySample& sample);

void save_dataset(const std::filesystem::path& dir, const std::vector<ToySample>& samples);
// Loads every images/<stem>.ppm with a matching masks/<stem>.pgm, sorted by
// stem. Masks are binarised at 128/255.
std::vector<ToySample> load_dataset(const std::filesystem::path& dir);

struct DataSplit {
  std::vector<ToySample> train;
  std::vector<ToySample> val;
};

// Uses dir/train and dir/val when both exist; otherwise loads dir and holds
// out the last round(val_fraction * n) samples (sorted by stem).
DataSplit load_split(const std::filesystem::path& dir, double val_fraction);

// Area-average to (size,size) then threshold at 0.5.
Image downsample_mask(const Image& mask, int size);

}  // namespace c4net
