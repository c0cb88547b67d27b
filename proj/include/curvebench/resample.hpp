#pragma once

#include <cstddef>
#include <vector>

#include "curvebench/autodiff.hpp"
#include "curvebench/tensor.hpp"

namespace curvebench {

// Down-then-up resampling bottleneck for square images (any channel count).
//
// Upscaling is bicubic interpolation (Catmull-Rom kernel, a = -0.5,
// edge-clamped taps, pixel centers aligned). Downscaling recovers the
// low-resolution image whose bicubic upscale is closest in least squares, so
// that downscale(upscale(y)) == y and the full round trip is a projection:
// applying it twice equals applying it once up to rounding.
class ResampleUnit final : public LinearOp {
public:
  ResampleUnit(std::size_t d_low, std::size_t d_orig);

  std::size_t d_low() const { return d_low_; }
  std::size_t d_orig() const { return d_orig_; }
  bool is_identity() const { return d_low_ == d_orig_; }

  // [C, d_orig, d_orig] -> [C, d_low, d_low]
  Tensor downscale(const Tensor& image) const;
  // [C, d_low, d_low] -> [C, d_orig, d_orig]
  Tensor upscale(const Tensor& small) const;

  Shape output_shape(const Shape& in) const override;
  // upscale(downscale(image)); exact pass-through when d_low == d_orig.
  Tensor apply(const Tensor& image) const override;
  Tensor apply_transpose(const Tensor& image) const override;

private:
  std::size_t d_low_ = 0;
  std::size_t d_orig_ = 0;
  std::vector<double> up_;    // d_orig x d_low
  std::vector<double> down_;  // d_low x d_orig, left inverse of up_
  std::vector<double> round_; // d_orig x d_orig, up_ * down_
};

// Catmull-Rom (a = -0.5) interpolation weights row for one output sample.
// Exposed for tests.
void bicubic_row(std::size_t n_in, std::size_t n_out, std::size_t out_index,
                 double* row /* n_in, zero-initialized by callee */);

}  // namespace curvebench
