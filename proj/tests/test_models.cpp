#include <doctest.h>

#include <cmath>

#include "curvebench/errors.hpp"
#include "curvebench/dataset.hpp"
#include "curvebench/model.hpp"
#include "curvebench/resample.hpp"
#include "curvebench/subspace.hpp"
#include "curvebench/train.hpp"
#include "test_support.hpp"

using namespace curvebench;
using cbtest::affine_model;
using cbtest::fixture;
using cbtest::random_tensor;

TEST_CASE("zero final layer makes all logits zero") {
  Model m = Model::make("mlp-2x64", {1, 4, 4}, 3, 7);
  auto& params = m.params();
  for (std::size_t p = params.size() - 2; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) params[p][i] = 0.0;
  }
  Rng rng(4);
  for (int t = 0; t < 5; ++t) {
    const Tensor z = m.logits(random_tensor({1, 4, 4}, rng));
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);
  }
}

TEST_CASE("logits are deterministic and shape-checked") {
  Model m = Model::make("cnn-small", {1, 8, 8}, 3, 2);
  Rng rng(5);
  Tensor x = random_tensor({1, 8, 8}, rng);
  CHECK(m.logits(x) == m.logits(x));
  CHECK_THROWS_AS(m.logits(random_tensor({1, 6, 6}, rng)), std::invalid_argument);
}

TEST_CASE("single linear layer equals the dense matmul oracle") {
  Model m = affine_model({{1, 2, 0, -1}, {0.5, -0.5, 1, 0}}, {0.25, -0.75});
  Rng rng(6);
  for (int t = 0; t < 5; ++t) {
    Tensor x = random_tensor({4}, rng);
    const Tensor z = m.logits(x);
    CHECK(z[0] == doctest::Approx(x[0] + 2 * x[1] - x[3] + 0.25).epsilon(1e-12));
    CHECK(z[1] == doctest::Approx(0.5 * x[0] - 0.5 * x[1] + x[2] - 0.75).epsilon(1e-12));
  }
}

TEST_CASE("class_score_along: s=0 anchor, affine in s for linear models, scale invariance") {
  Model m = affine_model({{1, 0, 0}, {0, 1, 0}}, {0, 0});
  Rng rng(7);
  Tensor x = random_tensor({3}, rng);
  Tensor d = random_tensor({3}, rng);
  const std::vector<double> grid{-2, -1, 0, 1, 2};

  const auto curve = class_score_along(m, x, d, 0, grid);
  CHECK(curve[2] == doctest::Approx(m.logits(x)[0]).epsilon(1e-12));

  // affine: uniform first differences; slope equals (W d_hat)_c
  const double slope_oracle = d[0] / d.l2_norm();
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    CHECK((curve[i + 1] - curve[i]) == doctest::Approx(slope_oracle).epsilon(1e-9));
  }

  const auto curve2 = class_score_along(m, x, 2.0 * d, 0, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(curve[i] == doctest::Approx(curve2[i]).epsilon(1e-12));
  }

  CHECK_THROWS_AS(class_score_along(m, x, Tensor::zeros({3}), 0, grid), std::invalid_argument);
}

TEST_CASE("training reaches a separable dataset and is seed-reproducible") {
  Dataset raw = synth_blobs(2, 100, 8, 1);
  Dataset ds = mean_normalize(raw);
  Model m = Model::make("mlp-2x64", ds.image_shape(), ds.class_count, 3);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.seed = 3;
  const auto log = train(m, ds, nullptr, cfg);
  CHECK(log.back().train_accuracy >= 0.99);

  // same seed twice: identical loss logs
  Model m2 = Model::make("mlp-2x64", ds.image_shape(), ds.class_count, 3);
  const auto log2 = train(m2, ds, nullptr, cfg);
  REQUIRE(log.size() == log2.size());
  for (std::size_t e = 0; e < log.size(); ++e) CHECK(log[e].loss == log2[e].loss);

  // zero learning rate leaves parameters unchanged
  Model frozen = Model::make("mlp-2x64", ds.image_shape(), ds.class_count, 3);
  const std::vector<Tensor> before = frozen.params();
  TrainConfig zero = cfg;
  zero.learning_rate = 0.0;
  zero.epochs = 2;
  (void)train(frozen, ds, nullptr, zero);
  for (std::size_t p = 0; p < before.size(); ++p) CHECK(frozen.params()[p] == before[p]);
}

TEST_CASE("accuracy: degenerate and projected cases") {
  // constant-label model on a single-class set scores 1.0
  Model constant = affine_model({{0, 0}, {0, 0}}, {1.0, 0.0});
  Dataset ds;
  ds.class_count = 2;
  Rng rng(8);
  for (int i = 0; i < 10; ++i) {
    ds.images.push_back(random_tensor({2}, rng));
    ds.labels.push_back(0);
  }
  CHECK(accuracy(constant, ds) == 1.0);

  // a projector spanning the full input space equals plain accuracy exactly
  const auto& fx = fixture();
  std::vector<Tensor> columns;
  Rng rng2(9);
  const std::size_t dim = shape_numel(fx.test.image_shape());
  for (std::size_t i = 0; i < dim; ++i) {
    columns.push_back(random_tensor(fx.test.image_shape(), rng2));
  }
  Subspace full;
  full.tag = "custom";
  full.shape = fx.test.image_shape();
  full.basis = orthonormalize(columns);
  REQUIRE(full.dim() == dim);
  CHECK(accuracy(fx.model, fx.test, full) == accuracy(fx.model, fx.test));

  // identity resample unit equals plain accuracy exactly
  ResampleUnit identity(fx.test.image_shape()[1], fx.test.image_shape()[1]);
  CHECK(accuracy(fx.model, fx.test, identity) == accuracy(fx.model, fx.test));
}

TEST_CASE("random-parameter models sit at chance level over seeds") {
  double acc_sum = 0.0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    Dataset raw = synth_blobs(10, 10, 8, 1000 + static_cast<std::uint64_t>(t));
    Dataset ds = mean_normalize(raw);
    Model m = Model::make("mlp-2x64", ds.image_shape(), 10, 2000 + static_cast<std::uint64_t>(t));
    acc_sum += accuracy(m, ds);
  }
  const double mean_acc = acc_sum / trials;
  CHECK(std::fabs(mean_acc - 0.1) <= 0.03);
}

TEST_CASE("softmax argmax equals logits argmax on every sample") {
  const auto& fx = fixture();
  for (const Tensor& im : fx.test.images) {
    const Tensor z = fx.model.logits(im);
    std::vector<double> sm(z.size());
    double zmax = z[0];
    for (std::size_t i = 1; i < z.size(); ++i) zmax = std::max(zmax, z[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      sm[i] = std::exp(z[i] - zmax);
      sum += sm[i];
    }
    for (double& v : sm) v /= sum;
    CHECK(argmax_index(z.values()) == argmax_index(sm));
  }
}

TEST_CASE("reference mlp generalizes on blobs (train/test gap within 5 points)") {
  Dataset raw = synth_blobs(3, 80, 8, 4);
  auto [raw_train, raw_test] = split_per_class(raw, 50);
  Dataset train_set = mean_normalize(raw_train);
  Dataset test_set = apply_mean(raw_test, train_set.mean_image);
  Model m = Model::make("mlp-2x64", train_set.image_shape(), 3, 6);
  TrainConfig cfg;
  cfg.epochs = 25;
  const auto log = train(m, train_set, &test_set, cfg);
  const double gap = std::fabs(log.back().train_accuracy - log.back().test_accuracy);
  CHECK(gap <= 0.05);
}

TEST_CASE("training divergence raises a numeric error naming the epoch") {
  Dataset raw = synth_blobs(2, 30, 8, 2);
  Dataset ds = mean_normalize(raw);
  Model m = Model::make("mlp-2x64", ds.image_shape(), 2, 3);
  TrainConfig cfg;
  // lr * weight_decay far above 2 makes the decay step itself expansive, so
  // parameters blow up geometrically and overflow
  cfg.learning_rate = 1e4;
  cfg.weight_decay = 10.0;
  cfg.epochs = 40;
  CHECK_THROWS_WITH_AS(train(m, ds, nullptr, cfg), doctest::Contains("epoch"), NumericError);
}

TEST_CASE("preprocessed classifier differentiates through the resampling unit") {
  const auto& fx = fixture();
  auto unit = std::make_shared<ResampleUnit>(4, 8);
  PreprocessedClassifier pre(fx.model, unit);
  Rng rng(10);
  Tensor x = random_tensor(fx.test.image_shape(), rng, 0.3);
  std::vector<double> w{1.0, -1.0, 0.0};
  const Tensor got = pre.logit_gradient(x, w);
  const Tensor want = cbtest::fd_gradient(
      [&](const Tensor& p) {
        const Tensor z = pre.logits(p);
        return z[0] - z[1];
      },
      x);
  const double scale = std::max(want.l2_norm(), 1e-9);
  CHECK((got - want).l2_norm() <= 1e-5 * scale);
}
