#include "curvebench/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace curvebench {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data) {
  for (std::size_t e : shape) {
    if (e == 0) throw std::invalid_argument("tensor: zero extent in shape " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match " +
                                std::to_string(data.size()) + " values");
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw std::invalid_argument("tensor: non-finite value rejected");
  }
  shape_ = std::move(shape);
  data_ = std::move(data);
}

Tensor Tensor::unchecked(Shape shape, std::vector<double> data) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::zeros(const Shape& shape) {
  return unchecked(shape, std::vector<double>(shape_numel(shape), 0.0));
}

Tensor Tensor::constant(const Shape& shape, double v) {
  return unchecked(shape, std::vector<double>(shape_numel(shape), v));
}

Tensor Tensor::scalar(double v) { return unchecked({1}, {v}); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw std::invalid_argument("reshape: " + shape_str(shape_) + " to incompatible " + shape_str(shape));
  }
  return unchecked(std::move(shape), data_);
}

double Tensor::l2_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace {
void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}
}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor::unchecked(a.shape(), std::move(out));
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor::unchecked(a.shape(), std::move(out));
}

Tensor operator*(double s, const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * a[i];
  return Tensor::unchecked(a.shape(), std::move(out));
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape("dot", a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void axpy_in_place(Tensor& y, double a, const Tensor& x) {
  require_same_shape("axpy", y, x);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

void add_in_place(Tensor& y, const Tensor& x) {
  require_same_shape("add", y, x);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
}

std::size_t argmax_index(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace curvebench
