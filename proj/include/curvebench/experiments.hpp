#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "curvebench/attacks.hpp"
#include "curvebench/curvature.hpp"
#include "curvebench/dataset.hpp"
#include "curvebench/model.hpp"
#include "curvebench/subspace.hpp"

namespace curvebench {

// Which samples feed the class-score statistics, selected by the model's
// clean prediction (the same convention fooling rates use).
enum class TracePopulation { NonTarget, Target, All };

// Population statistics of F_c along one direction, per grid point.
struct TraceResult {
  int direction_id = -1;
  int target_class = -1;
  std::vector<double> s;
  std::vector<double> median;      // of F_c over the population
  std::vector<double> p30;
  std::vector<double> p70;
  std::vector<double> sup_nontarget_median;  // median of max_{k != c} F_k
  std::vector<double> transition_in;         // non-target samples predicted c
  std::vector<double> retention;             // target samples still predicted c
  std::vector<double> softmax_median;        // median softmax_c over non-target samples
  std::size_t population_count = 0;
  std::size_t target_population = 0;
  std::size_t nontarget_population = 0;
};

// Nearest-rank percentile (no interpolation); p in [0, 100].
double nearest_rank_percentile(std::vector<double> values, double p);

TraceResult run_trace(const Classifier& model, const Dataset& ds, const Tensor& direction,
                      int target_class, const std::vector<double>& s_grid,
                      TracePopulation population);

// Raw per-sample score curves for the same population filter.
std::vector<std::vector<double>> trace_sample_curves(const Classifier& model, const Dataset& ds,
                                                     const Tensor& direction, int target_class,
                                                     const std::vector<double>& s_grid,
                                                     TracePopulation population);

struct SymmetryResult {
  double s0 = 0.0;
  double score = 0.0;
};

// Per curve: the grid point s0 minimizing the RMS mismatch between the curve
// and its mirror about s0, over offsets present on the grid; the score is
// that RMS divided by the curve's value range. Constant curves score 0 at
// s0 = 0.
SymmetryResult symmetry_score(const std::vector<double>& s_grid, const std::vector<double>& curve);
std::vector<SymmetryResult> symmetry_scores(const std::vector<double>& s_grid,
                                            const std::vector<std::vector<double>>& curves);

// Cross-sample agreement of the curves after centering each at its own
// s = 0 value: median pairwise RMS difference divided by the median curve
// range. Low means the score function separates additively along the
// direction.
double separability_score(const std::vector<double>& s_grid,
                          const std::vector<std::vector<double>>& curves);

// Symmetric grid of `points` samples spanning [-s_max, s_max].
std::vector<double> symmetric_grid(double s_max, int points);

struct AccuracyVsDRow {
  std::string source;   // "curvature" or "svd"
  std::string variant;  // S_pos / S_neg / S_neg_pos / S_flat / S_hi / S_lo
  int d = 0;
  std::size_t m = 0;  // effective basis size
  std::string split;  // "train" or "test"
  double accuracy = 0.0;
};

// Accuracy of the model on images projected onto curvature subspaces.
// d counts directions per class.
std::vector<AccuracyVsDRow> run_accuracy_vs_d(const Classifier& model, const Dataset& train,
                                              const Dataset& test,
                                              const std::vector<DirectionSet>& per_class,
                                              const std::vector<SubspaceVariant>& variants,
                                              const std::vector<int>& d_grid);

// Accuracy on SVD subspaces; d counts total directions.
std::vector<AccuracyVsDRow> run_accuracy_vs_d_svd(const Classifier& model, const Dataset& train,
                                                  const Dataset& test, const Subspace& hi_basis,
                                                  const std::vector<int>& d_grid);

struct NormFractionRow {
  std::string method;
  std::string variant;
  int d = 0;
  std::size_t m = 0;
  double fraction = 0.0;
  std::int64_t excluded = 0;  // zero-norm vectors dropped
};

// Mean ||P v|| / ||v|| per (method, subspace); zero-norm vectors are skipped
// and counted. The "random" method provides the isotropic baseline.
std::vector<NormFractionRow> run_norm_fractions(
    const std::vector<std::pair<std::string, std::vector<Tensor>>>& method_vectors,
    const std::vector<Subspace>& subspaces);

// Isotropic Gaussian vectors for the sqrt(m/D) calibration column.
std::vector<Tensor> random_direction_set(const Shape& shape, std::size_t count,
                                         std::uint64_t seed);

struct ConfinedNormRow {
  std::string ordering;  // S_hi / S_lo / full
  int d = 0;
  std::size_t m = 0;
  double mean_confined_norm = 0.0;  // over converged attacks
  double convergence_rate = 0.0;
  double mean_projected_image_norm = 0.0;
  std::int64_t converged = 0;
  std::int64_t total = 0;
};

ConfinedNormRow run_confined_norms(const Classifier& model, const Dataset& ds,
                                   const Subspace& subspace, const AttackConfig& cfg);

struct ResampleTableRow {
  int d_low = 0;
  double mean_image_norm = 0.0;  // in the upscaled space
  double mean_pert_norm = 0.0;   // resampled perturbations, upscaled space
  double accuracy = 0.0;         // through the resampling unit
  std::vector<double> fooling;   // one per f, over converged DeepFool samples
};

// Robustness-to-downsampling table: per d_low, accuracy through the unit and
// fooling rates of i + f * delta for each norm scale f. Fooling is counted
// against the unit's own clean predictions, over samples whose DeepFool
// converged on the original model.
ResampleTableRow run_resampling_table_row(const Classifier& model, const Dataset& ds,
                                          const std::vector<PerturbationRecord>& deepfools,
                                          int d_low, const std::vector<double>& f_grid);

// Per-channel affine rescale to [0, 255] written as binary PGM (1 channel)
// or PPM (3 channels). Constant channels map to mid-gray 128.
void visualize_direction(const Tensor& direction, const std::string& path);
std::vector<std::uint8_t> direction_to_bytes(const Tensor& direction);

// Minimal binary PGM/PPM reader (test and tooling support).
std::pair<Shape, std::vector<std::uint8_t>> read_pnm(const std::string& path);

}  // namespace curvebench
