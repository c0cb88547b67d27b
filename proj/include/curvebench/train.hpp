#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "curvebench/dataset.hpp"
#include "curvebench/model.hpp"
#include "curvebench/resample.hpp"
#include "curvebench/subspace_fwd.hpp"

namespace curvebench {

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int batch_size = 16;
  int epochs = 20;
  std::uint64_t seed = 1;
  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = -1.0;  // negative when no test split was supplied
};

// SGD with momentum on cross-entropy. Single-threaded over batches;
// deterministic given the seed. Throws NumericError naming the epoch if the
// loss or any parameter goes non-finite.
std::vector<EpochStats> train(Model& model, const Dataset& train_set, const Dataset* test_set,
                              const TrainConfig& cfg);

// Fraction of samples whose argmax logit matches the label (ties to the
// lowest class index). Optional preprocessing: resampling bottleneck or
// subspace projection applied to each image first.
double accuracy(const Classifier& model, const Dataset& ds);
double accuracy(const Classifier& model, const Dataset& ds, const ResampleUnit& unit);
double accuracy(const Classifier& model, const Dataset& ds, const Subspace& subspace);

}  // namespace curvebench
