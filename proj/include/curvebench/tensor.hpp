#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace curvebench {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major tensor of 64-bit floats. Treated as an immutable value once
// shared; mutation happens only at construction sites. The checked
// constructor rejects non-finite entries coming from external data.
class Tensor {
public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(const Shape& shape);
  static Tensor constant(const Shape& shape, double v);
  static Tensor scalar(double v);
  // Internal results of arithmetic; skips the finiteness scan.
  static Tensor unchecked(Shape shape, std::vector<double> data);

  bool empty() const { return shape_.empty(); }
  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  std::span<const double> values() const { return {data_.data(), data_.size()}; }
  const std::vector<double>& vec() const { return data_; }

  Tensor reshaped(Shape shape) const;
  double l2_norm() const;
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
double dot(const Tensor& a, const Tensor& b);
// y += a * x
void axpy_in_place(Tensor& y, double a, const Tensor& x);
void add_in_place(Tensor& y, const Tensor& x);

// Index of the largest entry; ties break to the lowest index.
std::size_t argmax_index(std::span<const double> v);

}  // namespace curvebench
