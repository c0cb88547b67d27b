#include "curvebench/curvature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "curvebench/errors.hpp"
#include "curvebench/rng.hpp"
#include "curvebench/threading.hpp"

namespace curvebench {

HessianOperator::HessianOperator(const Classifier& model, int target_class,
                                 std::vector<Tensor> points, std::vector<int> source_classes,
                                 double fd_step)
    : model_(&model),
      target_class_(target_class),
      points_(std::move(points)),
      source_classes_(std::move(source_classes)),
      fd_step_(fd_step) {
  if (points_.empty()) throw std::invalid_argument("hessian operator: no boundary points");
  if (points_.size() != source_classes_.size()) {
    throw std::invalid_argument("hessian operator: points/source classes size mismatch");
  }
  if (fd_step_ <= 0.0) throw std::invalid_argument("hessian operator: fd step must be > 0");
}

Tensor HessianOperator::apply(const Tensor& v) const {
  const double norm = v.l2_norm();
  if (norm == 0.0) throw std::invalid_argument("hvp: zero direction");
  Tensor unit = (1.0 / norm) * v;
  if (unit.shape() != model_->input_shape()) unit = unit.reshaped(model_->input_shape());
  const int classes = model_->class_count();
  const double h = fd_step_;
  std::vector<Tensor> contributions(points_.size());
  parallel_for(points_.size(), [&](std::size_t n) {
    std::vector<double> w(static_cast<std::size_t>(classes), 0.0);
    w[static_cast<std::size_t>(target_class_)] = 1.0;
    w[static_cast<std::size_t>(source_classes_[n])] = -1.0;
    Tensor plus = points_[n];
    axpy_in_place(plus, h, unit);
    Tensor minus = points_[n];
    axpy_in_place(minus, -h, unit);
    Tensor g = model_->logit_gradient(plus, w) - model_->logit_gradient(minus, w);
    contributions[n] = std::move(g);
  });
  // Fixed-order reduction keeps the result independent of thread count.
  Tensor out = Tensor::zeros(model_->input_shape());
  for (const Tensor& c : contributions) add_in_place(out, c);
  const double scale = norm / (2.0 * h * static_cast<double>(points_.size()));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= scale;
  return out;
}

OperatorBuildResult build_operator(const Classifier& model, const Dataset& ds, int target_class,
                                   const CurvatureConfig& cfg) {
  if (target_class < 0 || target_class >= model.class_count()) {
    throw std::invalid_argument("build_operator: class out of range");
  }
  std::vector<std::size_t> qualifying;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    if (predicted_class(model, ds.images[n]) != target_class) qualifying.push_back(n);
  }
  if (qualifying.empty()) {
    throw NumericError("build_operator: no qualifying samples (every sample already predicted "
                       "as class " + std::to_string(target_class) + ")");
  }
  std::vector<BoundaryPoint> results(qualifying.size());
  parallel_for(qualifying.size(), [&](std::size_t i) {
    results[i] = deepfool_targeted(model, ds.images[qualifying[i]], target_class, cfg.attack);
  });
  std::vector<Tensor> points;
  std::vector<int> sources;
  std::size_t skipped = 0, nonconverged = 0;
  for (BoundaryPoint& bp : results) {
    if (!bp.converged) {
      ++nonconverged;
      continue;
    }
    if (!bp.point.all_finite()) {
      ++skipped;
      continue;
    }
    points.push_back(std::move(bp.point));
    sources.push_back(bp.source_class);
  }
  if (points.empty()) {
    throw NumericError("build_operator: no boundary points accepted for class " +
                       std::to_string(target_class));
  }
  OperatorBuildResult res{
      HessianOperator(model, target_class, std::move(points), std::move(sources), cfg.fd_step),
      qualifying.size(), 0, skipped, nonconverged};
  res.accepted = res.op.sample_count();
  return res;
}

MatrixMap::MatrixMap(Shape shape, std::vector<double> row_major)
    : shape_(std::move(shape)), m_(std::move(row_major)) {
  const std::size_t d = shape_numel(shape_);
  if (m_.size() != d * d) {
    throw std::invalid_argument("matrix map: need a square matrix over the input dimension");
  }
}

Tensor MatrixMap::apply(const Tensor& v) const {
  const std::size_t d = input_dim();
  Tensor out = Tensor::zeros(shape_);
  for (std::size_t i = 0; i < d; ++i) {
    double s = 0.0;
    const double* row = m_.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) s += row[j] * v[j];
    out[i] = s;
  }
  return out;
}

namespace {

void fix_sign_inplace(Tensor& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::fabs(v[i]) > std::fabs(v[best])) best = i;
  }
  if (v[best] < 0.0) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = -v[i];
  }
}

}  // namespace

DirectionSet lanczos_extreme_eigs(const SymmetricMap& op, int k_top, int k_bottom, int iters,
                                  std::uint64_t seed) {
  const std::size_t dim = op.input_dim();
  if (k_top < 0 || k_bottom < 0 || k_top + k_bottom < 1) {
    throw std::invalid_argument("lanczos: need k_top + k_bottom >= 1");
  }
  if (static_cast<std::size_t>(k_top) + static_cast<std::size_t>(k_bottom) > dim) {
    throw std::invalid_argument("lanczos: k_top + k_bottom exceeds input dimension " +
                                std::to_string(dim));
  }
  const std::size_t m = std::min<std::size_t>(dim, iters <= 0 ? dim : static_cast<std::size_t>(iters));
  const Shape shape = op.input_shape();

  Rng rng(mix_seed(seed, 0x1a2c));
  auto random_unit_orthogonal = [&](const std::vector<Tensor>& basis) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      std::vector<double> data(dim);
      for (double& x : data) x = rng.normal();
      Tensor v = Tensor::unchecked(shape, std::move(data));
      for (int pass = 0; pass < 2; ++pass) {
        for (const Tensor& q : basis) axpy_in_place(v, -dot(q, v), q);
      }
      const double n = v.l2_norm();
      if (n > 1e-8) {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] /= n;
        return v;
      }
    }
    throw NumericError("lanczos: failed to draw a fresh start vector");
  };

  std::vector<Tensor> V;
  V.reserve(m);
  std::vector<double> alpha, beta;  // beta[j] couples V[j] and V[j+1]
  V.push_back(random_unit_orthogonal(V));
  for (std::size_t j = 0; j < m; ++j) {
    Tensor w = op.apply(V[j]);
    const double a = dot(w, V[j]);
    alpha.push_back(a);
    if (j + 1 == m) break;
    axpy_in_place(w, -a, V[j]);
    if (j > 0 && beta[j - 1] != 0.0) axpy_in_place(w, -beta[j - 1], V[j - 1]);
    // Full reorthogonalization, two passes.
    for (int pass = 0; pass < 2; ++pass) {
      for (const Tensor& q : V) axpy_in_place(w, -dot(q, w), q);
    }
    const double b = w.l2_norm();
    const double scale_est = std::max(1e-30, std::fabs(a));
    if (b <= 1e-12 * scale_est || b <= 1e-300) {
      // Invariant subspace found: restart with a fresh vector, decoupled block.
      beta.push_back(0.0);
      V.push_back(random_unit_orthogonal(V));
    } else {
      beta.push_back(b);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] /= b;
      V.push_back(std::move(w));
    }
  }

  const std::size_t steps = alpha.size();
  Eigen::VectorXd diag(static_cast<Eigen::Index>(steps));
  Eigen::VectorXd subdiag(std::max<Eigen::Index>(0, static_cast<Eigen::Index>(steps) - 1));
  for (std::size_t i = 0; i < steps; ++i) diag(static_cast<Eigen::Index>(i)) = alpha[i];
  for (std::size_t i = 0; i + 1 < steps; ++i) subdiag(static_cast<Eigen::Index>(i)) = beta[i];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, subdiag, Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success) throw NumericError("lanczos: tridiagonal eigensolver failed");
  const Eigen::VectorXd& theta = es.eigenvalues();  // ascending
  const Eigen::MatrixXd& Y = es.eigenvectors();

  const std::size_t want_top = static_cast<std::size_t>(k_top);
  const std::size_t want_bottom = static_cast<std::size_t>(k_bottom);
  const bool partial = steps < want_top + want_bottom;
  std::vector<std::size_t> take;  // tridiagonal eigen indices, descending value
  {
    const std::size_t avail = steps;
    const std::size_t top_n = std::min(want_top, avail);
    for (std::size_t i = 0; i < top_n; ++i) take.push_back(avail - 1 - i);
    const std::size_t bottom_n = std::min(want_bottom, avail - top_n);
    std::vector<std::size_t> bottoms;
    for (std::size_t i = 0; i < bottom_n; ++i) bottoms.push_back(i);
    // keep overall descending order
    for (std::size_t i = bottoms.size(); i-- > 0;) take.push_back(bottoms[i]);
  }

  DirectionSet ds;
  ds.shape = shape;
  ds.k_top = k_top;
  ds.k_bottom = k_bottom;
  ds.partial = partial;
  ds.source = "curvature";
  double norm_est = 1e-30;
  for (std::size_t i = 0; i < steps; ++i) {
    norm_est = std::max(norm_est, std::fabs(theta(static_cast<Eigen::Index>(i))));
  }
  for (std::size_t idx : take) {
    Tensor ritz = Tensor::zeros(shape);
    for (std::size_t j = 0; j < steps; ++j) {
      axpy_in_place(ritz, Y(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(idx)), V[j]);
    }
    const double n = ritz.l2_norm();
    if (n > 0.0) {
      for (std::size_t i = 0; i < ritz.size(); ++i) ritz[i] /= n;
    }
    fix_sign_inplace(ritz);
    const double lambda = theta(static_cast<Eigen::Index>(idx));
    Tensor resid = op.apply(ritz);
    axpy_in_place(resid, -lambda, ritz);
    ds.residuals.push_back(resid.l2_norm());
    ds.scores.push_back(lambda);
    ds.basis.push_back(std::move(ritz));
  }
  // Residual acceptance per pair; failures mark the set partial.
  for (std::size_t i = 0; i < ds.residuals.size(); ++i) {
    const double bound = 1e-3 * std::max(std::fabs(ds.scores[i]), norm_est * 1e-3);
    if (ds.residuals[i] > bound) ds.partial = true;
  }
  return ds;
}

DirectionSet principal_curvatures(const Classifier& model, const Dataset& ds, int target_class,
                                  const CurvatureConfig& cfg) {
  OperatorBuildResult build = build_operator(model, ds, target_class, cfg);
  const std::size_t dim = build.op.input_dim();
  int k_top = cfg.k_top;
  int k_bottom = cfg.k_bottom;
  if (k_top <= 0 && k_bottom <= 0) {
    // Full spectrum, split so that k_top + k_bottom == dim.
    k_top = static_cast<int>((dim + 1) / 2);
    k_bottom = static_cast<int>(dim / 2);
  }
  DirectionSet out = lanczos_extreme_eigs(build.op, k_top, k_bottom, cfg.lanczos_iters, cfg.seed);
  out.target_class = build.op.target_class();
  out.fd_step = build.op.fd_step();
  out.accept_count = build.accepted;
  out.skip_count = build.skipped;
  out.nonconverged_count = build.nonconverged;
  return out;
}

}  // namespace curvebench
