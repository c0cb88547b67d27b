#pragma once

#include <string>
#include <vector>

#include "curvebench/tensor.hpp"

namespace curvebench {

// Ordered unit image-space directions with signed curvature (or singular)
// scores, sorted by descending score. Output of the mean-Hessian
// eigenanalysis (source == "curvature") or of the SVD path ("svd").
struct DirectionSet {
  int target_class = -1;
  Shape shape;
  std::vector<Tensor> basis;    // unit vectors, image-shaped
  std::vector<double> scores;   // descending
  std::vector<double> residuals;  // eigensolver residual per pair (may be empty)
  int k_top = 0;
  int k_bottom = 0;
  std::size_t accept_count = 0;
  std::size_t skip_count = 0;
  std::size_t nonconverged_count = 0;
  double fd_step = 0.0;
  bool partial = false;  // eigensolver breakdown before all pairs converged
  std::string source = "curvature";

  std::size_t count() const { return basis.size(); }
  std::size_t input_dim() const { return shape_numel(shape); }
  // True when every eigenpair of the operator was extracted, which is what
  // flattest-direction selection requires.
  bool complete_spectrum() const {
    return static_cast<std::size_t>(k_top) + static_cast<std::size_t>(k_bottom) >= input_dim() &&
           count() == input_dim();
  }
  void validate() const;
};

// CBDIR1 container: class, count, shape, scores, vectors, then the
// generation metadata block. A plain-text sidecar with accept/skip/residual
// statistics is written next to it.
void save_directions(const std::string& path, const DirectionSet& ds);
DirectionSet load_directions(const std::string& path);
std::string direction_sidecar_text(const DirectionSet& ds);

}  // namespace curvebench
