#include "curvebench/train.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "curvebench/errors.hpp"
#include "curvebench/rng.hpp"
#include "curvebench/subspace.hpp"
#include "curvebench/threading.hpp"

namespace curvebench {

void TrainConfig::validate() const {
  if (learning_rate < 0.0 || momentum < 0.0 || weight_decay < 0.0) {
    throw std::invalid_argument("train config: negative rate/momentum/decay");
  }
  if (batch_size < 1 || epochs < 1) {
    throw std::invalid_argument("train config: batch size and epochs must be positive");
  }
}

std::vector<EpochStats> train(Model& model, const Dataset& train_set, const Dataset* test_set,
                              const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.images.empty()) throw std::invalid_argument("train: empty dataset");

  std::vector<Tensor>& params = model.params();
  std::vector<Tensor> velocity;
  velocity.reserve(params.size());
  for (const Tensor& p : params) velocity.push_back(Tensor::zeros(p.shape()));

  Rng shuffle_rng(mix_seed(cfg.seed, 0x5feed));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochStats> log;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t cursor = 0;
    while (cursor < order.size()) {
      const std::size_t batch_end = std::min(order.size(), cursor + static_cast<std::size_t>(cfg.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(batch_end - cursor);
      std::vector<Tensor> grad_sum;
      grad_sum.reserve(params.size());
      for (const Tensor& p : params) grad_sum.push_back(Tensor::zeros(p.shape()));
      for (std::size_t i = cursor; i < batch_end; ++i) {
        const std::size_t n = order[i];
        Tape tape;
        std::vector<Tape::Id> param_ids;
        const Tape::Id in = tape.leaf(train_set.images[n]);
        const Tape::Id out = model.forward(tape, in, &param_ids);
        const Tape::Id loss = tape.cross_entropy(out, train_set.labels[n]);
        loss_sum += tape.value(loss)[0];
        GradientMap grads = tape.backward(loss);
        for (std::size_t p = 0; p < params.size(); ++p) {
          axpy_in_place(grad_sum[p], inv_batch, grads.at(param_ids[p]));
        }
      }
      for (std::size_t p = 0; p < params.size(); ++p) {
        if (cfg.weight_decay > 0.0) axpy_in_place(grad_sum[p], cfg.weight_decay, params[p]);
        for (std::size_t i = 0; i < params[p].size(); ++i) {
          velocity[p][i] = cfg.momentum * velocity[p][i] + grad_sum[p][i];
          params[p][i] -= cfg.learning_rate * velocity[p][i];
        }
      }
      cursor = batch_end;
    }
    const double mean_loss = loss_sum / static_cast<double>(train_set.size());
    if (!std::isfinite(mean_loss)) {
      throw NumericError("train: loss diverged (non-finite) at epoch " + std::to_string(epoch));
    }
    for (const Tensor& p : params) {
      if (!p.all_finite()) {
        throw NumericError("train: parameters non-finite at epoch " + std::to_string(epoch));
      }
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = mean_loss;
    stats.train_accuracy = accuracy(model, train_set);
    if (test_set) stats.test_accuracy = accuracy(model, *test_set);
    log.push_back(stats);
  }
  return log;
}

namespace {

double accuracy_with(const Classifier& model, const Dataset& ds,
                     const std::function<Tensor(const Tensor&)>& pre) {
  if (ds.images.empty()) return 0.0;
  std::vector<int> hit(ds.size(), 0);
  parallel_for(ds.size(), [&](std::size_t n) {
    const Tensor input = pre ? pre(ds.images[n]) : ds.images[n];
    hit[n] = predicted_class(model, input) == ds.labels[n] ? 1 : 0;
  });
  std::size_t correct = 0;
  for (int h : hit) correct += static_cast<std::size_t>(h);
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace

double accuracy(const Classifier& model, const Dataset& ds) {
  return accuracy_with(model, ds, nullptr);
}

double accuracy(const Classifier& model, const Dataset& ds, const ResampleUnit& unit) {
  return accuracy_with(model, ds, [&](const Tensor& im) { return unit.apply(im); });
}

double accuracy(const Classifier& model, const Dataset& ds, const Subspace& subspace) {
  return accuracy_with(model, ds, [&](const Tensor& im) { return project(subspace, im); });
}

}  // namespace curvebench
