#include "curvebench/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "curvebench/errors.hpp"
#include "curvebench/io_util.hpp"
#include "curvebench/rng.hpp"

namespace curvebench {

namespace {

std::uint32_t read_be_u32(const std::string& data, std::size_t pos, const std::string& path) {
  if (pos + 4 > data.size()) throw FormatError("idx: truncated file " + path);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v = (v << 8) | static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i]));
  }
  return v;
}

std::string hex_u32(std::uint32_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s = "0x";
  for (int i = 7; i >= 0; --i) s.push_back(digits[(v >> (4 * i)) & 0xf]);
  return s;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const std::string img = read_file(images_path);
  const std::string lab = read_file(labels_path);

  const std::uint32_t img_magic = read_be_u32(img, 0, images_path);
  if (img_magic != 0x00000803u) {
    throw FormatError("idx: bad magic " + hex_u32(img_magic) + " in " + images_path +
                      " (expected 0x00000803 image file)");
  }
  const std::uint32_t lab_magic = read_be_u32(lab, 0, labels_path);
  if (lab_magic != 0x00000801u) {
    throw FormatError("idx: bad magic " + hex_u32(lab_magic) + " in " + labels_path +
                      " (expected 0x00000801 label file)");
  }
  const std::uint32_t count = read_be_u32(img, 4, images_path);
  const std::uint32_t rows = read_be_u32(img, 8, images_path);
  const std::uint32_t cols = read_be_u32(img, 12, images_path);
  const std::uint32_t lab_count = read_be_u32(lab, 4, labels_path);
  if (count != lab_count) {
    throw FormatError("idx: count mismatch, " + std::to_string(count) + " images in " +
                      images_path + " vs " + std::to_string(lab_count) + " labels in " +
                      labels_path);
  }
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  if (img.size() < 16 + static_cast<std::size_t>(count) * pixels) {
    throw FormatError("idx: truncated file " + images_path);
  }
  if (lab.size() < 8 + count) {
    throw FormatError("idx: truncated file " + labels_path);
  }

  Dataset ds;
  ds.images.reserve(count);
  ds.labels.reserve(count);
  int max_label = 0;
  for (std::uint32_t n = 0; n < count; ++n) {
    std::vector<double> px(pixels);
    const std::size_t base = 16 + static_cast<std::size_t>(n) * pixels;
    for (std::size_t i = 0; i < pixels; ++i) {
      px[i] = static_cast<double>(static_cast<unsigned char>(img[base + i])) / 255.0;
    }
    ds.images.push_back(Tensor::unchecked({1, rows, cols}, std::move(px)));
    const int label = static_cast<int>(static_cast<unsigned char>(lab[8 + n]));
    ds.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  ds.class_count = max_label + 1;
  ds.range_lo = 0.0;
  ds.range_hi = 1.0;
  return ds;
}

Dataset mean_normalize(const Dataset& raw) {
  if (raw.images.empty()) throw std::invalid_argument("mean_normalize: empty dataset");
  Tensor mean = Tensor::zeros(raw.image_shape());
  for (const Tensor& im : raw.images) add_in_place(mean, im);
  const double inv = 1.0 / static_cast<double>(raw.images.size());
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] *= inv;
  return apply_mean(raw, mean);
}

Dataset apply_mean(const Dataset& raw, const Tensor& mean) {
  if (raw.images.empty()) throw std::invalid_argument("apply_mean: empty dataset");
  Dataset out;
  out.labels = raw.labels;
  out.class_count = raw.class_count;
  out.range_lo = raw.range_lo;
  out.range_hi = raw.range_hi;
  out.mean_image = mean;
  out.normalized = true;
  out.images.reserve(raw.images.size());
  for (const Tensor& im : raw.images) out.images.push_back(im - mean);
  return out;
}

std::vector<Tensor> blob_templates(int class_count, int side, std::uint64_t seed) {
  const std::size_t dim = static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
  if (static_cast<std::size_t>(class_count) > dim) {
    throw std::invalid_argument("synth_blobs: more classes than pixels");
  }
  Rng rng(mix_seed(seed, 0xb10b));
  std::vector<Tensor> templates;
  templates.reserve(static_cast<std::size_t>(class_count));
  for (int c = 0; c < class_count; ++c) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    Tensor t = Tensor::unchecked({1, static_cast<std::size_t>(side), static_cast<std::size_t>(side)},
                                 std::move(v));
    // Gram-Schmidt against earlier templates: unit norm, exact separation.
    for (const Tensor& prev : templates) axpy_in_place(t, -dot(t, prev), prev);
    const double norm = t.l2_norm();
    if (norm < 1e-8) throw NumericError("synth_blobs: degenerate template draw");
    for (std::size_t i = 0; i < t.size(); ++i) t[i] /= norm;
    templates.push_back(std::move(t));
  }
  return templates;
}

Dataset synth_blobs(int class_count, int per_class, int side, std::uint64_t seed) {
  if (side < 4) throw std::invalid_argument("synth_blobs: side must be >= 4");
  if (class_count < 2) throw std::invalid_argument("synth_blobs: need at least 2 classes");
  if (per_class < 1) throw std::invalid_argument("synth_blobs: per_class must be >= 1");
  // Orthonormal unit templates are sqrt(2) apart; noise sigma keeps the
  // 1-nearest-template margin above 7 sigma.
  constexpr double kSigma = 0.1;
  const std::vector<Tensor> templates = blob_templates(class_count, side, seed);
  Rng rng(mix_seed(seed, 0x5a3d));
  Dataset ds;
  ds.class_count = class_count;
  ds.images.reserve(static_cast<std::size_t>(class_count) * per_class);
  ds.labels.reserve(ds.images.capacity());
  double lo = 0.0, hi = 0.0;
  for (int n = 0; n < per_class; ++n) {
    for (int c = 0; c < class_count; ++c) {
      Tensor im = templates[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < im.size(); ++i) {
        im[i] += kSigma * rng.normal();
        lo = std::min(lo, im[i]);
        hi = std::max(hi, im[i]);
      }
      ds.images.push_back(std::move(im));
      ds.labels.push_back(c);
    }
  }
  ds.range_lo = lo;
  ds.range_hi = hi;
  return ds;
}

std::pair<Dataset, Dataset> split_per_class(const Dataset& raw, int train_per_class) {
  Dataset train, test;
  train.class_count = test.class_count = raw.class_count;
  train.range_lo = test.range_lo = raw.range_lo;
  train.range_hi = test.range_hi = raw.range_hi;
  std::vector<int> seen(static_cast<std::size_t>(raw.class_count), 0);
  for (std::size_t n = 0; n < raw.size(); ++n) {
    const int label = raw.labels[n];
    Dataset& dst = (seen[static_cast<std::size_t>(label)]++ < train_per_class) ? train : test;
    dst.images.push_back(raw.images[n]);
    dst.labels.push_back(label);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace curvebench
