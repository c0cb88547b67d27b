#pragma once

#include <string>
#include <vector>

#include "curvebench/tensor.hpp"

namespace curvebench {

// Per-sample attack result. l2_norm always equals ||delta|| at construction
// time; converged implies end_label != source_label for label attacks.
struct PerturbationRecord {
  Tensor delta;
  int source_label = -1;
  int end_label = -1;
  int iterations = 0;
  double l2_norm = 0.0;
  std::string method;
  bool converged = false;
};

PerturbationRecord make_record(Tensor delta, int source_label, int end_label, int iterations,
                               std::string method, bool converged);

// CBPRT1 container: magic, method tag, count, shape, then one record after
// another (delta doubles, labels, iteration count, norm, converged flag).
void save_perturbations(const std::string& path, const std::vector<PerturbationRecord>& records);
std::vector<PerturbationRecord> load_perturbations(const std::string& path);

}  // namespace curvebench
