#include "curvebench/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace curvebench {

const Tensor& GradientMap::at(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= grads_.size()) {
    throw std::invalid_argument("gradient map: unknown node id " + std::to_string(id));
  }
  return grads_[static_cast<std::size_t>(id)];
}

Tape::Id Tape::push(Tensor value, std::function<void(Tape&, const Tensor&)> vjp) {
  nodes_.push_back(Node{std::move(value), std::move(vjp)});
  return static_cast<Id>(nodes_.size() - 1);
}

void Tape::check_id(Id id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw std::invalid_argument("tape: invalid node id " + std::to_string(id));
  }
}

Tape::Id Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

const Tensor& Tape::value(Id id) const {
  check_id(id);
  return nodes_[static_cast<std::size_t>(id)].value;
}

void Tape::accumulate(Id id, const Tensor& g) {
  Tensor& slot = adjoints_[static_cast<std::size_t>(id)];
  if (slot.empty()) {
    slot = g;
  } else {
    add_in_place(slot, g);
  }
}

void Tape::accumulate_scaled(Id id, double s, const Tensor& g) {
  Tensor& slot = adjoints_[static_cast<std::size_t>(id)];
  if (slot.empty()) {
    slot = s * g;
  } else {
    axpy_in_place(slot, s, g);
  }
}

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

Tape::Id Tape::add(Id a, Id b) {
  check_id(a);
  check_id(b);
  Tensor out = value(a) + value(b);
  return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Tape::Id Tape::sub(Id a, Id b) {
  check_id(a);
  check_id(b);
  Tensor out = value(a) - value(b);
  return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate_scaled(b, -1.0, g);
  });
}

Tape::Id Tape::scale(Id a, double s) {
  check_id(a);
  Tensor out = s * value(a);
  return push(std::move(out), [a, s](Tape& t, const Tensor& g) {
    t.accumulate_scaled(a, s, g);
  });
}

Tape::Id Tape::matmul(Id a, Id b) {
  check_id(a);
  check_id(b);
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.rank() == 2, "matmul: left operand must be rank-2, got " + shape_str(A.shape()));
  require(B.rank() == 1 || B.rank() == 2,
          "matmul: right operand must be rank-1 or rank-2, got " + shape_str(B.shape()));
  const std::size_t m = A.shape()[0];
  const std::size_t k = A.shape()[1];
  require(B.shape()[0] == k, "matmul: inner dimensions differ, " + shape_str(A.shape()) + " vs " +
                                 shape_str(B.shape()));
  if (B.rank() == 1) {
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      const double* row = A.data() + i * k;
      for (std::size_t j = 0; j < k; ++j) s += row[j] * B[j];
      out[i] = s;
    }
    return push(Tensor::unchecked({m}, std::move(out)), [a, b, m, k](Tape& t, const Tensor& g) {
      const Tensor& A2 = t.value(a);
      const Tensor& B2 = t.value(b);
      std::vector<double> ga(m * k), gb(k, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          ga[i * k + j] = g[i] * B2[j];
          gb[j] += g[i] * A2[i * k + j];
        }
      }
      t.accumulate(a, Tensor::unchecked({m, k}, std::move(ga)));
      t.accumulate(b, Tensor::unchecked({k}, std::move(gb)));
    });
  }
  const std::size_t n = B.shape()[1];
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * B[p * n + j];
    }
  }
  return push(Tensor::unchecked({m, n}, std::move(out)), [a, b, m, k, n](Tape& t, const Tensor& g) {
    const Tensor& A2 = t.value(a);
    const Tensor& B2 = t.value(b);
    std::vector<double> ga(m * k, 0.0), gb(k * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B2[p * n + j];
        ga[i * k + p] = s;
      }
    }
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t i = 0; i < m; ++i) {
        const double av = A2[i * k + p];
        for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
      }
    }
    t.accumulate(a, Tensor::unchecked({m, k}, std::move(ga)));
    t.accumulate(b, Tensor::unchecked({k, n}, std::move(gb)));
  });
}

Tape::Id Tape::conv2d(Id x, Id kernel, int stride, int pad) {
  check_id(x);
  check_id(kernel);
  const Tensor& X = value(x);
  const Tensor& K = value(kernel);
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(pad >= 0, "conv2d: padding must be >= 0");
  require(X.rank() == 3, "conv2d: input must be CxHxW, got " + shape_str(X.shape()));
  require(K.rank() == 4, "conv2d: kernel must be OxCxKhxKw, got " + shape_str(K.shape()));
  const std::size_t cin = X.shape()[0], h = X.shape()[1], w = X.shape()[2];
  const std::size_t cout = K.shape()[0], kh = K.shape()[2], kw = K.shape()[3];
  require(K.shape()[1] == cin, "conv2d: input channels " + shape_str(X.shape()) +
                                   " vs kernel channels " + shape_str(K.shape()));
  const long ho_l = (static_cast<long>(h) + 2 * pad - static_cast<long>(kh)) / stride + 1;
  const long wo_l = (static_cast<long>(w) + 2 * pad - static_cast<long>(kw)) / stride + 1;
  require(ho_l >= 1 && wo_l >= 1, "conv2d: kernel " + shape_str(K.shape()) +
                                      " too large for input " + shape_str(X.shape()));
  const std::size_t ho = static_cast<std::size_t>(ho_l), wo = static_cast<std::size_t>(wo_l);
  std::vector<double> out(cout * ho * wo, 0.0);
  for (std::size_t oc = 0; oc < cout; ++oc) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double s = 0.0;
        for (std::size_t ic = 0; ic < cin; ++ic) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              s += X[(ic * h + iy) * w + ix] * K[((oc * cin + ic) * kh + ky) * kw + kx];
            }
          }
        }
        out[(oc * ho + oy) * wo + ox] = s;
      }
    }
  }
  auto vjp = [x, kernel, stride, pad, cin, h, w, cout, kh, kw, ho, wo](Tape& t, const Tensor& g) {
    const Tensor& X2 = t.value(x);
    const Tensor& K2 = t.value(kernel);
    std::vector<double> gx(cin * h * w, 0.0), gk(cout * cin * kh * kw, 0.0);
    for (std::size_t oc = 0; oc < cout; ++oc) {
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const double go = g[(oc * ho + oy) * wo + ox];
          if (go == 0.0) continue;
          for (std::size_t ic = 0; ic < cin; ++ic) {
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
              if (iy < 0 || iy >= static_cast<long>(h)) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
                if (ix < 0 || ix >= static_cast<long>(w)) continue;
                gx[(ic * h + iy) * w + ix] += go * K2[((oc * cin + ic) * kh + ky) * kw + kx];
                gk[((oc * cin + ic) * kh + ky) * kw + kx] += go * X2[(ic * h + iy) * w + ix];
              }
            }
          }
        }
      }
    }
    t.accumulate(x, Tensor::unchecked({cin, h, w}, std::move(gx)));
    t.accumulate(kernel, Tensor::unchecked({cout, cin, kh, kw}, std::move(gk)));
  };
  return push(Tensor::unchecked({cout, ho, wo}, std::move(out)), std::move(vjp));
}

Tape::Id Tape::relu(Id a) {
  check_id(a);
  const Tensor& X = value(a);
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) out[i] = X[i] > 0.0 ? X[i] : 0.0;
  return push(Tensor::unchecked(X.shape(), std::move(out)), [a](Tape& t, const Tensor& g) {
    const Tensor& X2 = t.value(a);
    std::vector<double> gx(X2.size());
    for (std::size_t i = 0; i < X2.size(); ++i) gx[i] = X2[i] > 0.0 ? g[i] : 0.0;
    t.accumulate(a, Tensor::unchecked(X2.shape(), std::move(gx)));
  });
}

Tape::Id Tape::maxpool2x2(Id a) {
  check_id(a);
  const Tensor& X = value(a);
  require(X.rank() == 3, "maxpool2x2: input must be CxHxW, got " + shape_str(X.shape()));
  const std::size_t c = X.shape()[0], h = X.shape()[1], w = X.shape()[2];
  require(h % 2 == 0 && w % 2 == 0,
          "maxpool2x2: spatial extents must be even, got " + shape_str(X.shape()));
  const std::size_t ho = h / 2, wo = w / 2;
  std::vector<double> out(c * ho * wo);
  auto arg = std::make_shared<std::vector<std::size_t>>(c * ho * wo);
  for (std::size_t ic = 0; ic < c; ++ic) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (ic * h + 2 * oy) * w + 2 * ox;
        double bv = X[best];
        const std::size_t cands[3] = {(ic * h + 2 * oy) * w + 2 * ox + 1,
                                      (ic * h + 2 * oy + 1) * w + 2 * ox,
                                      (ic * h + 2 * oy + 1) * w + 2 * ox + 1};
        for (std::size_t cand : cands) {
          if (X[cand] > bv) {
            bv = X[cand];
            best = cand;
          }
        }
        out[(ic * ho + oy) * wo + ox] = bv;
        (*arg)[(ic * ho + oy) * wo + ox] = best;
      }
    }
  }
  const Shape in_shape = X.shape();
  return push(Tensor::unchecked({c, ho, wo}, std::move(out)),
              [a, arg, in_shape](Tape& t, const Tensor& g) {
                std::vector<double> gx(shape_numel(in_shape), 0.0);
                for (std::size_t i = 0; i < arg->size(); ++i) gx[(*arg)[i]] += g[i];
                t.accumulate(a, Tensor::unchecked(in_shape, std::move(gx)));
              });
}

Tape::Id Tape::flatten(Id a) {
  check_id(a);
  const Tensor& X = value(a);
  const Shape in_shape = X.shape();
  Tensor out = X.reshaped({X.size()});
  return push(std::move(out), [a, in_shape](Tape& t, const Tensor& g) {
    t.accumulate(a, g.reshaped(in_shape));
  });
}

Tape::Id Tape::bias_add(Id a, Id bias) {
  check_id(a);
  check_id(bias);
  const Tensor& X = value(a);
  const Tensor& B = value(bias);
  require(B.rank() == 1, "bias_add: bias must be rank-1, got " + shape_str(B.shape()));
  const std::size_t n = B.shape()[0];
  std::vector<double> out(X.size());
  if (X.rank() == 1) {
    require(X.shape()[0] == n, "bias_add: shape mismatch " + shape_str(X.shape()) + " vs " +
                                   shape_str(B.shape()));
    for (std::size_t i = 0; i < n; ++i) out[i] = X[i] + B[i];
    return push(Tensor::unchecked(X.shape(), std::move(out)), [a, bias](Tape& t, const Tensor& g) {
      t.accumulate(a, g);
      t.accumulate(bias, g);
    });
  }
  if (X.rank() == 2) {
    require(X.shape()[1] == n, "bias_add: shape mismatch " + shape_str(X.shape()) + " vs " +
                                   shape_str(B.shape()));
    const std::size_t m = X.shape()[0];
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] = X[i * n + j] + B[j];
    }
    return push(Tensor::unchecked(X.shape(), std::move(out)),
                [a, bias, m, n](Tape& t, const Tensor& g) {
                  t.accumulate(a, g);
                  std::vector<double> gb(n, 0.0);
                  for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                  }
                  t.accumulate(bias, Tensor::unchecked({n}, std::move(gb)));
                });
  }
  require(X.rank() == 3 && X.shape()[0] == n, "bias_add: shape mismatch " + shape_str(X.shape()) +
                                                  " vs " + shape_str(B.shape()));
  const std::size_t hw = X.shape()[1] * X.shape()[2];
  for (std::size_t ch = 0; ch < n; ++ch) {
    for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] = X[ch * hw + i] + B[ch];
  }
  return push(Tensor::unchecked(X.shape(), std::move(out)),
              [a, bias, n, hw](Tape& t, const Tensor& g) {
                t.accumulate(a, g);
                std::vector<double> gb(n, 0.0);
                for (std::size_t ch = 0; ch < n; ++ch) {
                  for (std::size_t i = 0; i < hw; ++i) gb[ch] += g[ch * hw + i];
                }
                t.accumulate(bias, Tensor::unchecked({n}, std::move(gb)));
              });
}

namespace {

std::vector<double> softmax_values(const Tensor& z) {
  const std::size_t n = z.size();
  double zmax = z[0];
  for (std::size_t i = 1; i < n; ++i) zmax = std::max(zmax, z[i]);
  std::vector<double> y(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(z[i] - zmax);
    sum += y[i];
  }
  for (std::size_t i = 0; i < n; ++i) y[i] /= sum;
  return y;
}

}  // namespace

Tape::Id Tape::softmax(Id logits) {
  check_id(logits);
  const Tensor& Z = value(logits);
  require(Z.rank() == 1 && Z.size() >= 2,
          "softmax: input must be rank-1 with length >= 2, got " + shape_str(Z.shape()));
  std::vector<double> y = softmax_values(Z);
  Tensor out = Tensor::unchecked(Z.shape(), y);
  return push(std::move(out), [logits, y = std::move(y)](Tape& t, const Tensor& g) {
    const std::size_t n = y.size();
    double gy = 0.0;
    for (std::size_t i = 0; i < n; ++i) gy += g[i] * y[i];
    std::vector<double> gz(n);
    for (std::size_t i = 0; i < n; ++i) gz[i] = y[i] * (g[i] - gy);
    t.accumulate(logits, Tensor::unchecked({n}, std::move(gz)));
  });
}

Tape::Id Tape::cross_entropy(Id logits, int label) {
  check_id(logits);
  const Tensor& Z = value(logits);
  require(Z.rank() == 1 && Z.size() >= 2,
          "cross_entropy: logits must be rank-1 with length >= 2, got " + shape_str(Z.shape()));
  require(label >= 0 && static_cast<std::size_t>(label) < Z.size(),
          "cross_entropy: label " + std::to_string(label) + " out of range for " +
              shape_str(Z.shape()));
  const std::size_t n = Z.size();
  double zmax = Z[0];
  for (std::size_t i = 1; i < n; ++i) zmax = std::max(zmax, Z[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += std::exp(Z[i] - zmax);
  const double loss = std::log(sum) - (Z[static_cast<std::size_t>(label)] - zmax);
  return push(Tensor::scalar(loss), [logits, label](Tape& t, const Tensor& g) {
    const Tensor& Z2 = t.value(logits);
    std::vector<double> gz = softmax_values(Z2);
    gz[static_cast<std::size_t>(label)] -= 1.0;
    for (double& v : gz) v *= g[0];
    t.accumulate(logits, Tensor::unchecked(Z2.shape(), std::move(gz)));
  });
}

Tape::Id Tape::weighted_sum(Id a, std::vector<double> weights) {
  check_id(a);
  const Tensor& X = value(a);
  require(X.rank() == 1, "weighted_sum: input must be rank-1, got " + shape_str(X.shape()));
  require(X.size() == weights.size(), "weighted_sum: " + std::to_string(weights.size()) +
                                          " weights vs input " + shape_str(X.shape()));
  double s = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) s += weights[i] * X[i];
  return push(Tensor::scalar(s), [a, w = std::move(weights)](Tape& t, const Tensor& g) {
    std::vector<double> gx(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) gx[i] = g[0] * w[i];
    t.accumulate(a, Tensor::unchecked({w.size()}, std::move(gx)));
  });
}

Tape::Id Tape::linear(Id a, std::shared_ptr<const LinearOp> op) {
  check_id(a);
  require(op != nullptr, "linear: null operator");
  Tensor out = op->apply(value(a));
  return push(std::move(out), [a, op](Tape& t, const Tensor& g) {
    t.accumulate(a, op->apply_transpose(g));
  });
}

GradientMap Tape::backward(Id output) {
  check_id(output);
  if (backward_done_) {
    throw std::logic_error("tape: backward called twice on one recording");
  }
  const Tensor& out = value(output);
  if (out.size() != 1) {
    throw std::invalid_argument("tape: backward requires a scalar output, got " +
                                shape_str(out.shape()));
  }
  backward_done_ = true;
  adjoints_.assign(nodes_.size(), Tensor());
  adjoints_[static_cast<std::size_t>(output)] = Tensor::scalar(1.0);
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    const Tensor& g = adjoints_[i];
    if (g.empty()) continue;
    if (nodes_[i].vjp) nodes_[i].vjp(*this, g);
  }
  // Nodes the root does not depend on get zero gradients of their own shape.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (adjoints_[i].empty()) adjoints_[i] = Tensor::zeros(nodes_[i].value.shape());
  }
  return GradientMap(std::move(adjoints_));
}

}  // namespace curvebench
