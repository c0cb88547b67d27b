#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "curvebench/dataset.hpp"
#include "curvebench/directions.hpp"
#include "curvebench/model.hpp"
#include "curvebench/perturbation.hpp"
#include "curvebench/subspace.hpp"
#include "curvebench/tensor.hpp"

namespace curvebench {

struct AttackConfig {
  int max_iterations = 50;
  double overshoot = 0.02;      // eta
  double boundary_tol = 1e-4;   // tau, relative in logit units
  double uap_target_rate = 0.8;
  int uap_pass_limit = 10;
  std::uint64_t seed = 1;
  void validate() const;
};

// delta = epsilon * sign(d/di cross_entropy(F(i), label)); sign(0) = 0.
PerturbationRecord fgsm(const Classifier& model, const Tensor& image, int label, double epsilon);

// Smallest epsilon along the fixed FGSM sign direction that changes the
// predicted label, found by bracketing + bisection up to eps_hi. Empty when
// even eps_hi does not fool.
std::optional<double> fgsm_min_epsilon(const Classifier& model, const Tensor& image, int label,
                                       double eps_hi, double rel_tol = 1e-3);

// Untargeted multiclass DeepFool: iterates the linearized minimal step
// toward the nearest class boundary, overshooting the accumulated
// perturbation by (1 + eta) until the predicted label flips.
PerturbationRecord deepfool(const Classifier& model, const Tensor& image, const AttackConfig& cfg);

// DeepFool with every step gradient replaced by its projection onto the
// subspace; the returned delta lies in the subspace. A full-span subspace
// reproduces deepfool() bit for bit.
PerturbationRecord deepfool_confined(const Classifier& model, const Tensor& image,
                                     const Subspace& subspace, const AttackConfig& cfg);

struct BoundaryPoint {
  Tensor point;        // approximate nearest point on {F_c - F_chat = 0}
  int iterations = 0;
  bool converged = false;
  double g_entry = 0.0;
  double g_exit = 0.0;
  int source_class = -1;  // chat, frozen at entry
};

// Binary DeepFool toward target class c on g = F_c - F_chat with chat the
// predicted class frozen at entry. Stops once |g| <= tau * (|g at entry| +
// tau); returns the boundary point itself (no overshoot). Precondition:
// the model must not already predict c.
BoundaryPoint deepfool_targeted(const Classifier& model, const Tensor& image, int target_class,
                                const AttackConfig& cfg);

// Universal perturbation by iterative DeepFool aggregation with an l2 ball
// projection of radius xi; sequential over shuffled samples, deterministic
// per cfg.seed. Returns the best vector seen (highest fooling rate).
Tensor uap_iterative(const Classifier& model, const Dataset& ds, double xi,
                     const AttackConfig& cfg);

// Random unit combination of the top-m directions, scaled to norm xi.
Tensor uap_subspace(const DirectionSet& directions, int m, double xi, std::uint64_t seed);

// Gradient of the predicted class score w.r.t. the image, image-shaped.
Tensor saliency(const Classifier& model, const Tensor& image);

// Percentage-as-fraction of samples whose predicted label changes when the
// fixed perturbation is added (relative to the clean prediction).
double fooling_rate(const Classifier& model, const Dataset& ds, const Tensor& perturbation);

// Attack every sample of the dataset; parallel over samples.
std::vector<PerturbationRecord> deepfool_all(const Classifier& model, const Dataset& ds,
                                             const AttackConfig& cfg);
std::vector<PerturbationRecord> deepfool_confined_all(const Classifier& model, const Dataset& ds,
                                                      const Subspace& subspace,
                                                      const AttackConfig& cfg);
std::vector<PerturbationRecord> fgsm_all(const Classifier& model, const Dataset& ds,
                                         double epsilon);
std::vector<PerturbationRecord> saliency_all(const Classifier& model, const Dataset& ds);

}  // namespace curvebench
