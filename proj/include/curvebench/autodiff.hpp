#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "curvebench/tensor.hpp"

namespace curvebench {

// Fixed linear map on tensors, used to record arbitrary linear preprocessing
// (e.g. resampling) as a differentiable primitive. apply_transpose must be
// the exact adjoint of apply.
class LinearOp {
public:
  virtual ~LinearOp() = default;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual Tensor apply(const Tensor& x) const = 0;
  virtual Tensor apply_transpose(const Tensor& y) const = 0;
};

class Tape;

// Gradients of one backward pass, indexed by tape node id.
class GradientMap {
public:
  explicit GradientMap(std::vector<Tensor> grads) : grads_(std::move(grads)) {}
  bool has(int id) const {
    return id >= 0 && static_cast<std::size_t>(id) < grads_.size() && !grads_[id].empty();
  }
  // Gradient of the backward root w.r.t. node `id`; zero-filled if the node
  // does not influence the root.
  const Tensor& at(int id) const;

private:
  std::vector<Tensor> grads_;
};

// Record of a forward computation supporting exactly one reverse sweep.
// Nodes are visited in exact reverse order of recording during backward().
// A tape is single-owner; share tensors, not tapes.
class Tape {
public:
  using Id = int;

  Id leaf(Tensor value);
  const Tensor& value(Id id) const;
  std::size_t node_count() const { return nodes_.size(); }

  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id scale(Id a, double s);
  Id matmul(Id a, Id b);  // [m,k]x[k,n] -> [m,n] or [m,k]x[k] -> [m]
  Id conv2d(Id x, Id kernel, int stride, int pad);
  Id relu(Id a);  // backward uses gradient 0 at exactly 0
  Id maxpool2x2(Id a);  // ties broken by first index in row-major scan
  Id flatten(Id a);
  Id bias_add(Id a, Id bias);  // [n]+[n], [m,n]+[n] per row, or [C,H,W]+[C] per channel
  Id softmax(Id logits);  // rank-1, length >= 2, max-subtracted
  Id cross_entropy(Id logits, int label);  // scalar -log softmax[label]
  Id weighted_sum(Id a, std::vector<double> weights);  // scalar sum_i w_i a_i
  Id linear(Id a, std::shared_ptr<const LinearOp> op);

  // Reverse sweep from a scalar output. One call per tape; a second call or
  // a non-scalar root is an error.
  GradientMap backward(Id output);

private:
  struct Node {
    Tensor value;
    // Accumulates parent adjoints given this node's adjoint; null for leaves.
    std::function<void(Tape&, const Tensor&)> vjp;
  };

  Id push(Tensor value, std::function<void(Tape&, const Tensor&)> vjp);
  void check_id(Id id) const;
  void accumulate(Id id, const Tensor& g);
  void accumulate_scaled(Id id, double s, const Tensor& g);

  std::vector<Node> nodes_;
  std::vector<Tensor> adjoints_;
  bool backward_done_ = false;
};

}  // namespace curvebench
