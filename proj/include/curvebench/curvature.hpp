#pragma once

#include <cstdint>
#include <vector>

#include "curvebench/attacks.hpp"
#include "curvebench/dataset.hpp"
#include "curvebench/directions.hpp"
#include "curvebench/model.hpp"

namespace curvebench {

struct CurvatureConfig {
  double fd_step = 1e-2;  // h for unit directions, in mean-normalized input units
  AttackConfig attack;    // boundary search parameters
  int k_top = 0;          // 0 means "all" (full spectrum) for both counts
  int k_bottom = 0;
  int lanczos_iters = 0;  // 0 means input dimension
  std::uint64_t seed = 1;
};

// Abstract symmetric image-space operator fed to the eigensolver.
class SymmetricMap {
public:
  virtual ~SymmetricMap() = default;
  virtual Shape input_shape() const = 0;
  virtual Tensor apply(const Tensor& v) const = 0;
  std::size_t input_dim() const { return shape_numel(input_shape()); }
};

// Matrix-free sample-mean Hessian of g_n = F_c - F_{chat_n} evaluated at
// boundary points, applied by central finite differences of backpropagated
// gradients. Symmetric up to finite-difference noise.
class HessianOperator : public SymmetricMap {
public:
  HessianOperator(const Classifier& model, int target_class, std::vector<Tensor> points,
                  std::vector<int> source_classes, double fd_step);

  // (1/N) sum_n [grad g_n(p_n + h v^) - grad g_n(p_n - h v^)] / (2h) * ||v||
  Tensor apply(const Tensor& v) const override;

  int target_class() const { return target_class_; }
  double fd_step() const { return fd_step_; }
  std::size_t sample_count() const { return points_.size(); }
  Shape input_shape() const override { return model_->input_shape(); }

private:
  const Classifier* model_;
  int target_class_;
  std::vector<Tensor> points_;
  std::vector<int> source_classes_;
  double fd_step_;
};

// Dense symmetric matrix wrapped as a map (eigensolver harnesses).
class MatrixMap : public SymmetricMap {
public:
  MatrixMap(Shape shape, std::vector<double> row_major);
  Shape input_shape() const override { return shape_; }
  Tensor apply(const Tensor& v) const override;

private:
  Shape shape_;
  std::vector<double> m_;
};

struct OperatorBuildResult {
  HessianOperator op;
  std::size_t qualifying = 0;    // samples with argmax != c
  std::size_t accepted = 0;      // converged boundary points used
  std::size_t skipped = 0;       // converged but rejected (non-finite or off-tolerance)
  std::size_t nonconverged = 0;  // boundary search did not converge
};

// Runs deepfool_targeted on every sample the model does not predict as class
// c and accumulates accepted boundary points. Errors when nothing qualifies
// or nothing is accepted.
OperatorBuildResult build_operator(const Classifier& model, const Dataset& ds, int target_class,
                                   const CurvatureConfig& cfg);

// Lanczos with full reorthogonalization on a symmetric operator; returns the
// k_top largest and k_bottom smallest eigenpairs merged into one descending
// DirectionSet with per-pair residuals. Breakdown before enough pairs
// converge yields a partial result with the flag set.
DirectionSet lanczos_extreme_eigs(const SymmetricMap& op, int k_top, int k_bottom, int iters,
                                  std::uint64_t seed);

// Alg.-style composition: build_operator then lanczos_extreme_eigs, with the
// boundary statistics recorded on the result.
DirectionSet principal_curvatures(const Classifier& model, const Dataset& ds, int target_class,
                                  const CurvatureConfig& cfg);

}  // namespace curvebench
