#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "curvebench/tensor.hpp"

namespace curvebench {

// Image classification dataset. Images are CxHxW tensors; after
// mean_normalize they carry i_n = raw_n - mean and the subtracted mean is
// kept for norm reporting and raw recovery.
struct Dataset {
  std::vector<Tensor> images;
  std::vector<int> labels;
  Tensor mean_image;  // empty until normalized
  int class_count = 0;
  double range_lo = 0.0;
  double range_hi = 1.0;
  bool normalized = false;

  std::size_t size() const { return images.size(); }
  const Shape& image_shape() const { return images.front().shape(); }
};

// IDX container files (big-endian magic 0x00000803 for images, 0x00000801
// for labels). Pixel bytes map to [0, 1]. Returns an un-normalized dataset.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Subtracts the per-pixel mean of `raw` itself.
Dataset mean_normalize(const Dataset& raw);

// Subtracts a fixed mean (training-set mean applied to a test split).
Dataset apply_mean(const Dataset& raw, const Tensor& mean);

// Gaussian blobs around orthonormal template images; deterministic per seed,
// linearly separable by construction (template separation far exceeds 6
// noise sigmas). Samples interleave classes: c0, c1, ..., c0, c1, ...
Dataset synth_blobs(int class_count, int per_class, int side, std::uint64_t seed);

// First `train_per_class` samples of each class go to the first dataset,
// the rest to the second. Operates on raw (un-normalized) datasets.
std::pair<Dataset, Dataset> split_per_class(const Dataset& raw, int train_per_class);

// Nearest-template classifier used as the separability oracle for blobs.
std::vector<Tensor> blob_templates(int class_count, int side, std::uint64_t seed);

}  // namespace curvebench
