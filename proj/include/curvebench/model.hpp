#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "curvebench/autodiff.hpp"
#include "curvebench/resample.hpp"
#include "curvebench/tensor.hpp"

namespace curvebench {

// Anything that maps an image to pre-softmax class scores and can supply
// input gradients of weighted score combinations. Attacks and curvature
// analysis run against this interface.
class Classifier {
public:
  virtual ~Classifier() = default;
  virtual Shape input_shape() const = 0;
  virtual int class_count() const = 0;
  virtual Tensor logits(const Tensor& image) const = 0;
  // Gradient w.r.t. the image of sum_k weights[k] * F_k(image).
  virtual Tensor logit_gradient(const Tensor& image, std::span<const double> weights) const = 0;
};

// One gradient per class, in class order.
std::vector<Tensor> all_logit_gradients(const Classifier& model, const Tensor& image);
int predicted_class(const Classifier& model, const Tensor& image);

struct LayerSpec {
  enum class Kind { Dense, Conv, Relu, MaxPool, Flatten };
  Kind kind = Kind::Relu;
  // Dense: units; Conv: out_channels, ksize, stride, pad.
  int units = 0;
  int ksize = 0, stride = 1, pad = 0;
};

// Feed-forward net over tape primitives. Parameters are a flat list in layer
// declaration order (dense: W then b; conv: K then b).
class Model : public Classifier {
public:
  // Named reference architectures.
  //   mlp-2x64:  flatten, dense 64, relu, dense 64, relu, dense C
  //   cnn-small: conv 8@3x3/p1, relu, maxpool, conv 16@3x3/p1, relu, maxpool,
  //              flatten, dense C
  //   linear:    flatten, dense C
  static Model make(const std::string& arch, const Shape& input_shape, int classes,
                    std::uint64_t seed);
  // Multi-line descriptor: "input CxHxW classes N" header then layer lines.
  static Model from_descriptor(const std::string& text);

  std::string descriptor() const;
  const std::string& arch_name() const { return arch_name_; }

  Shape input_shape() const override { return input_shape_; }
  int class_count() const override { return classes_; }
  Tensor logits(const Tensor& image) const override;
  Tensor logit_gradient(const Tensor& image, std::span<const double> weights) const override;

  // Records the forward pass from an existing tape node; returns the logits
  // node. When param_ids is non-null the parameter leaves are reported there
  // in declaration order.
  Tape::Id forward(Tape& tape, Tape::Id input, std::vector<Tape::Id>* param_ids = nullptr) const;

  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  // He-style fan-in initialization, biases zero.
  void random_init(std::uint64_t seed);

private:
  Model() = default;
  void build(const Shape& input_shape, int classes, std::vector<LayerSpec> layers);

  std::string arch_name_ = "custom";
  Shape input_shape_;
  int classes_ = 0;
  std::vector<LayerSpec> layers_;
  std::vector<Tensor> params_;
};

// A classifier with a fixed linear preprocessing stage in front (the
// resampling bottleneck of the robustness analysis). Gradients flow through
// the stage's adjoint.
class PreprocessedClassifier : public Classifier {
public:
  PreprocessedClassifier(const Classifier& model, std::shared_ptr<const LinearOp> pre);
  Shape input_shape() const override;
  int class_count() const override;
  Tensor logits(const Tensor& image) const override;
  Tensor logit_gradient(const Tensor& image, std::span<const double> weights) const override;

private:
  const Classifier& model_;
  std::shared_ptr<const LinearOp> pre_;
};

// F_c(i + s * d / ||d||) for each s in s_grid.
std::vector<double> class_score_along(const Classifier& model, const Tensor& image,
                                      const Tensor& direction, int target_class,
                                      std::span<const double> s_grid);

}  // namespace curvebench
