#include "curvebench/resample.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace curvebench {

namespace {

// Keys cubic kernel with a = -0.5 (Catmull-Rom).
double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::fabs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

// out = A(rows x inner) * B(inner x cols), row-major.
void gemm(const double* a, const double* b, double* out, std::size_t rows, std::size_t inner,
          std::size_t cols) {
  std::fill(out, out + rows * cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < inner; ++k) {
      const double av = a[i * inner + k];
      if (av == 0.0) continue;
      const double* brow = b + k * cols;
      double* orow = out + i * cols;
      for (std::size_t j = 0; j < cols; ++j) orow[j] += av * brow[j];
    }
  }
}

// out = A * X * A^T for one channel: X is n x n, A is m x n, out is m x m.
void sandwich(const double* a, const double* x, double* out, std::size_t m, std::size_t n,
              std::vector<double>& scratch) {
  scratch.resize(m * n);
  gemm(a, x, scratch.data(), m, n, n);  // A * X  (m x n)
  // out = scratch * A^T
  std::fill(out, out + m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      const double* srow = scratch.data() + i * n;
      const double* arow = a + j * n;
      for (std::size_t k = 0; k < n; ++k) s += srow[k] * arow[k];
      out[i * m + j] = s;
    }
  }
}

void require_square_image(const Tensor& t, std::size_t side, const char* what) {
  if (t.rank() != 3 || t.shape()[1] != side || t.shape()[2] != side) {
    throw std::invalid_argument(std::string("resample: ") + what + " expects side " +
                                std::to_string(side) + ", got " + shape_str(t.shape()));
  }
}

}  // namespace

void bicubic_row(std::size_t n_in, std::size_t n_out, std::size_t out_index, double* row) {
  const double scale = static_cast<double>(n_in) / static_cast<double>(n_out);
  const double u = (static_cast<double>(out_index) + 0.5) * scale - 0.5;
  const double base = std::floor(u);
  const double t = u - base;
  for (int k = -1; k <= 2; ++k) {
    const double w = cubic_kernel(static_cast<double>(k) - t);
    long idx = static_cast<long>(base) + k;
    idx = std::clamp<long>(idx, 0, static_cast<long>(n_in) - 1);
    row[static_cast<std::size_t>(idx)] += w;
  }
}

ResampleUnit::ResampleUnit(std::size_t d_low, std::size_t d_orig) : d_low_(d_low), d_orig_(d_orig) {
  if (d_low == 0 || d_low > d_orig) {
    throw std::invalid_argument("resample: need 0 < d_low <= d_orig, got d_low=" +
                                std::to_string(d_low) + " d_orig=" + std::to_string(d_orig));
  }
  up_.assign(d_orig * d_low, 0.0);
  for (std::size_t o = 0; o < d_orig; ++o) bicubic_row(d_low, d_orig, o, up_.data() + o * d_low);

  // down_ = (U^T U)^-1 U^T : the coarse image whose upscale best matches.
  Eigen::MatrixXd U(static_cast<Eigen::Index>(d_orig), static_cast<Eigen::Index>(d_low));
  for (std::size_t i = 0; i < d_orig; ++i) {
    for (std::size_t j = 0; j < d_low; ++j) {
      U(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = up_[i * d_low + j];
    }
  }
  Eigen::MatrixXd gram = U.transpose() * U;
  Eigen::MatrixXd D = gram.ldlt().solve(U.transpose());
  down_.assign(d_low * d_orig, 0.0);
  for (std::size_t i = 0; i < d_low; ++i) {
    for (std::size_t j = 0; j < d_orig; ++j) {
      down_[i * d_orig + j] = D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  round_.assign(d_orig * d_orig, 0.0);
  gemm(up_.data(), down_.data(), round_.data(), d_orig, d_low, d_orig);
}

Tensor ResampleUnit::downscale(const Tensor& image) const {
  require_square_image(image, d_orig_, "downscale");
  const std::size_t c = image.shape()[0];
  std::vector<double> out(c * d_low_ * d_low_);
  std::vector<double> scratch;
  for (std::size_t ch = 0; ch < c; ++ch) {
    sandwich(down_.data(), image.data() + ch * d_orig_ * d_orig_,
             out.data() + ch * d_low_ * d_low_, d_low_, d_orig_, scratch);
  }
  return Tensor::unchecked({c, d_low_, d_low_}, std::move(out));
}

Tensor ResampleUnit::upscale(const Tensor& small) const {
  require_square_image(small, d_low_, "upscale");
  const std::size_t c = small.shape()[0];
  std::vector<double> out(c * d_orig_ * d_orig_);
  std::vector<double> scratch;
  for (std::size_t ch = 0; ch < c; ++ch) {
    sandwich(up_.data(), small.data() + ch * d_low_ * d_low_, out.data() + ch * d_orig_ * d_orig_,
             d_orig_, d_low_, scratch);
  }
  return Tensor::unchecked({c, d_orig_, d_orig_}, std::move(out));
}

Shape ResampleUnit::output_shape(const Shape& in) const { return in; }

Tensor ResampleUnit::apply(const Tensor& image) const {
  require_square_image(image, d_orig_, "apply");
  if (is_identity()) return image;
  const std::size_t c = image.shape()[0];
  std::vector<double> out(image.size());
  std::vector<double> scratch;
  for (std::size_t ch = 0; ch < c; ++ch) {
    sandwich(round_.data(), image.data() + ch * d_orig_ * d_orig_,
             out.data() + ch * d_orig_ * d_orig_, d_orig_, d_orig_, scratch);
  }
  return Tensor::unchecked(image.shape(), std::move(out));
}

Tensor ResampleUnit::apply_transpose(const Tensor& image) const {
  require_square_image(image, d_orig_, "apply_transpose");
  if (is_identity()) return image;
  // adjoint of X -> R X R^T is G -> R^T G R
  const std::size_t n = d_orig_;
  std::vector<double> rt(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) rt[i * n + j] = round_[j * n + i];
  }
  const std::size_t c = image.shape()[0];
  std::vector<double> out(image.size());
  std::vector<double> scratch;
  for (std::size_t ch = 0; ch < c; ++ch) {
    sandwich(rt.data(), image.data() + ch * n * n, out.data() + ch * n * n, n, n, scratch);
  }
  return Tensor::unchecked(image.shape(), std::move(out));
}

}  // namespace curvebench
