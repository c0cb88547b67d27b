#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "curvebench/attacks.hpp"
#include "curvebench/curvature.hpp"
#include "curvebench/dataset.hpp"
#include "curvebench/model.hpp"
#include "curvebench/rng.hpp"
#include "curvebench/train.hpp"

namespace cbtest {

using namespace curvebench;

inline double rel_err(double got, double want) {
  const double scale = std::max({std::fabs(got), std::fabs(want), 1e-12});
  return std::fabs(got - want) / scale;
}

// Central finite differences of a scalar function, step 1e-6 * per-entry scale.
inline Tensor fd_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x) {
  Tensor g = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::fabs(x[i]));
    Tensor plus = x, minus = x;
    plus[i] += h;
    minus[i] -= h;
    g[i] = (f(plus) - f(minus)) / (2.0 * h);
  }
  return g;
}

// Dense Hessian by nested central differences of function values. The outer
// step matches the implementation's hvp step; the inner step is much smaller
// so the column equals the exact gradient difference up to rounding.
inline std::vector<std::vector<double>> fd_dense_hessian(
    const std::function<double(const Tensor&)>& f, const Tensor& x, double outer_h,
    double inner_h = 1e-6) {
  const std::size_t n = x.size();
  std::vector<std::vector<double>> H(n, std::vector<double>(n, 0.0));
  auto grad_at = [&](const Tensor& p) {
    Tensor g = Tensor::zeros(p.shape());
    for (std::size_t i = 0; i < n; ++i) {
      Tensor a = p, b = p;
      a[i] += inner_h;
      b[i] -= inner_h;
      g[i] = (f(a) - f(b)) / (2.0 * inner_h);
    }
    return g;
  };
  for (std::size_t j = 0; j < n; ++j) {
    Tensor plus = x, minus = x;
    plus[j] += outer_h;
    minus[j] -= outer_h;
    const Tensor gp = grad_at(plus);
    const Tensor gm = grad_at(minus);
    for (std::size_t i = 0; i < n; ++i) H[i][j] = (gp[i] - gm[i]) / (2.0 * outer_h);
  }
  return H;
}

inline Tensor random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = scale * rng.normal();
  return Tensor::unchecked(shape, std::move(v));
}

// Test-only quadratic "classifier": F_0(x) = x^T A x, F_1(x) = 0.
class QuadraticModel : public Classifier {
public:
  explicit QuadraticModel(std::vector<std::vector<double>> a) : a_(std::move(a)) {}
  Shape input_shape() const override { return {a_.size()}; }
  int class_count() const override { return 2; }
  Tensor logits(const Tensor& x) const override {
    double q = 0.0;
    for (std::size_t i = 0; i < a_.size(); ++i) {
      for (std::size_t j = 0; j < a_.size(); ++j) q += x[i] * a_[i][j] * x[j];
    }
    return Tensor::unchecked({2}, {q, 0.0});
  }
  Tensor logit_gradient(const Tensor& x, std::span<const double> w) const override {
    Tensor g = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < a_.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < a_.size(); ++j) s += (a_[i][j] + a_[j][i]) * x[j];
      g[i] = w[0] * s;
    }
    return g;
  }

private:
  std::vector<std::vector<double>> a_;
};

// Affine model with chosen weights: logits = W x + b over a flat input.
inline Model affine_model(const std::vector<std::vector<double>>& w, const std::vector<double>& b) {
  const std::size_t classes = w.size();
  const std::size_t dim = w.front().size();
  Model m = Model::make("linear", {dim}, static_cast<int>(classes), 1);
  Tensor& W = m.params()[0];
  Tensor& B = m.params()[1];
  for (std::size_t i = 0; i < classes; ++i) {
    for (std::size_t j = 0; j < dim; ++j) W[i * dim + j] = w[i][j];
  }
  for (std::size_t i = 0; i < classes; ++i) B[i] = b[i];
  return m;
}

// Shared trained fixture: cnn-small on 8x8 blobs, moderate training. Built
// once per test binary.
struct Fixture {
  Dataset train;
  Dataset test;
  Model model;
  AttackConfig attack;
};

inline const Fixture& fixture() {
  static const Fixture fx = [] {
    Dataset all = synth_blobs(3, 90, 8, 11);
    auto [raw_train, raw_test] = split_per_class(all, 60);
    Dataset train_set = mean_normalize(raw_train);
    Dataset test_set = apply_mean(raw_test, train_set.mean_image);
    Model model = Model::make("cnn-small", train_set.image_shape(), train_set.class_count, 3);
    TrainConfig tc;
    tc.learning_rate = 0.05;
    tc.momentum = 0.9;
    tc.weight_decay = 1e-2;
    tc.batch_size = 16;
    tc.epochs = 80;
    tc.seed = 5;
    (void)train(model, train_set, &test_set, tc);
    return Fixture{std::move(train_set), std::move(test_set), std::move(model), AttackConfig{}};
  }();
  return fx;
}

}  // namespace cbtest
