#pragma once

#include <string>
#include <vector>

#include "curvebench/directions.hpp"
#include "curvebench/perturbation.hpp"
#include "curvebench/resample.hpp"
#include "curvebench/tensor.hpp"

namespace curvebench {

enum class SubspaceVariant { Pos, Neg, NegPos, Flat };
enum class SvdOrdering { Hi, Lo };

std::string variant_tag(SubspaceVariant v);
std::string ordering_tag(SvdOrdering o);

// Orthonormal basis Q of an image-space subspace; the projector is Q Q^T.
// A full-rank basis (m == input dimension) projects as the exact identity.
struct Subspace {
  std::string tag = "custom";  // S_pos, S_neg, S_neg_pos, S_flat, S_hi, S_lo, full, custom
  int d_param = 0;             // dimensionality parameter the basis was built from
  Shape shape;
  std::vector<Tensor> basis;   // orthonormal, image-shaped
  std::vector<double> scores;  // provenance scores per vector (may be empty)

  std::size_t dim() const { return basis.size(); }
  std::size_t input_dim() const { return shape_numel(shape); }
  bool spans_everything() const { return tag == "full" || dim() == input_dim(); }

  static Subspace full(const Shape& shape);
  void validate() const;
};

// Modified Gram-Schmidt with one re-orthogonalization pass. Columns whose
// residual drops below `tol` times their original norm are dropped, so the
// result is a prefix-stable orthonormal basis of the input span.
std::vector<Tensor> orthonormalize(const std::vector<Tensor>& columns, double tol = 1e-8);

// Builds the curvature subspaces of the accuracy analysis: per class, take d
// directions by the variant's criterion (most positive, most negative, both,
// or flattest |score|), interleave round-robin across classes in class-index
// order, then orthonormalize with rank truncation.
Subspace select_per_class(const std::vector<DirectionSet>& per_class, SubspaceVariant variant,
                          int d);

// Q Q^T x, reshaped to the image shape.
Tensor project(const Subspace& subspace, const Tensor& x);

// Right-singular vectors of the stacked deltas, ordered by singular value
// (descending for S_hi, ascending for S_lo); scores carry the singular
// values. Sign fixed: largest-magnitude entry positive.
Subspace svd_basis(const std::vector<PerturbationRecord>& perturbations, SvdOrdering ordering);

// SVD on deltas passed through the resampling bottleneck's downscale; the
// singular vectors are upscaled back and re-orthonormalized in order, so the
// subspace lives in the original image space but spans only resampled
// content.
Subspace svd_basis_downsampled(const std::vector<PerturbationRecord>& perturbations,
                               const ResampleUnit& unit, SvdOrdering ordering);

// First m basis vectors (prefix of the stored order).
Subspace prefix_subspace(const Subspace& s, std::size_t m, int d_param);

// Mean over vectors of ||project(v)|| / ||v||. Zero vectors are an error.
double norm_fraction(const Subspace& subspace, const std::vector<Tensor>& vectors);

// CBSUB1 container: variant tag, d, m, shape, scores, basis vectors.
void save_subspace(const std::string& path, const Subspace& s);
Subspace load_subspace(const std::string& path);

}  // namespace curvebench
