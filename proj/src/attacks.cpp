#include "curvebench/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "curvebench/errors.hpp"
#include "curvebench/rng.hpp"
#include "curvebench/threading.hpp"

namespace curvebench {

void AttackConfig::validate() const {
  if (overshoot < 0.0) throw std::invalid_argument("attack config: overshoot must be >= 0");
  if (boundary_tol <= 0.0) throw std::invalid_argument("attack config: boundary tolerance must be > 0");
  if (max_iterations < 1) throw std::invalid_argument("attack config: max_iterations must be >= 1");
  if (uap_target_rate <= 0.0 || uap_pass_limit < 1) {
    throw std::invalid_argument("attack config: bad universal-perturbation limits");
  }
}

PerturbationRecord fgsm(const Classifier& model, const Tensor& image, int label, double epsilon) {
  if (epsilon < 0.0) throw std::invalid_argument("fgsm: epsilon must be >= 0");
  const int source = predicted_class(model, image);
  // d/di CE(F(i), label) = (softmax - onehot)^T dF/di
  Tensor z = model.logits(image);
  std::vector<double> w(z.size());
  double zmax = z[0];
  for (std::size_t i = 1; i < z.size(); ++i) zmax = std::max(zmax, z[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    w[i] = std::exp(z[i] - zmax);
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  w[static_cast<std::size_t>(label)] -= 1.0;
  Tensor grad = model.logit_gradient(image, w);
  Tensor delta = Tensor::zeros(grad.shape());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    delta[i] = grad[i] > 0.0 ? epsilon : (grad[i] < 0.0 ? -epsilon : 0.0);
  }
  const int end = predicted_class(model, image + delta);
  return make_record(std::move(delta), source, end, 1, "fgsm", end != source);
}

std::optional<double> fgsm_min_epsilon(const Classifier& model, const Tensor& image, int label,
                                       double eps_hi, double rel_tol) {
  PerturbationRecord probe = fgsm(model, image, label, eps_hi);
  if (!probe.converged) return std::nullopt;
  const Tensor sign_dir = (1.0 / eps_hi) * probe.delta;
  const int source = probe.source_label;
  auto fools = [&](double eps) {
    return predicted_class(model, image + eps * sign_dir) != source;
  };
  double lo = 0.0, hi = eps_hi;
  while ((hi - lo) > rel_tol * hi) {
    const double mid = 0.5 * (lo + hi);
    if (fools(mid)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

namespace {

struct DeepfoolStep {
  Tensor direction;   // w_{k*}, possibly projected
  double offset;      // |f_{k*}|
  double grad_norm;   // ||w_{k*}||
  bool degenerate = false;
};

// One linearized DeepFool step at point x against source class `src`.
DeepfoolStep deepfool_step(const Classifier& model, const Tensor& x, int src,
                           const Subspace* subspace) {
  const Tensor z = model.logits(x);
  const std::vector<Tensor> grads = all_logit_gradients(model, x);
  const int classes = model.class_count();
  std::vector<Tensor> w_all;
  double max_raw_norm = 0.0;
  for (int k = 0; k < classes; ++k) {
    if (k == src) {
      w_all.emplace_back();
      continue;
    }
    Tensor w = grads[static_cast<std::size_t>(k)] - grads[static_cast<std::size_t>(src)];
    max_raw_norm = std::max(max_raw_norm, w.l2_norm());
    if (subspace) w = project(*subspace, w);
    w_all.push_back(std::move(w));
  }
  DeepfoolStep best;
  double best_ratio = 0.0;
  bool have = false;
  for (int k = 0; k < classes; ++k) {
    if (k == src) continue;
    Tensor& w = w_all[static_cast<std::size_t>(k)];
    const double wn = w.l2_norm();
    if (wn <= 1e-12 * std::max(1.0, max_raw_norm)) continue;
    const double f = z[static_cast<std::size_t>(k)] - z[static_cast<std::size_t>(src)];
    const double ratio = std::fabs(f) / wn;
    if (!have || ratio < best_ratio) {
      have = true;
      best_ratio = ratio;
      best.direction = std::move(w);
      best.offset = std::fabs(f);
      best.grad_norm = wn;
    }
  }
  best.degenerate = !have;
  return best;
}

PerturbationRecord deepfool_impl(const Classifier& model, const Tensor& image,
                                 const Subspace* subspace, const AttackConfig& cfg,
                                 const std::string& method) {
  cfg.validate();
  const int src = predicted_class(model, image);
  Tensor accum = Tensor::zeros(image.shape());
  int iter = 0;
  bool converged = false;
  const double scale = 1.0 + cfg.overshoot;
  while (iter < cfg.max_iterations) {
    Tensor probe = image;
    axpy_in_place(probe, scale, accum);
    if (predicted_class(model, probe) != src) {
      converged = true;
      break;
    }
    DeepfoolStep step = deepfool_step(model, probe, src, subspace);
    ++iter;
    if (step.degenerate) break;  // nothing to move along (e.g. fully projected out)
    const double magnitude = step.offset / (step.grad_norm * step.grad_norm);
    axpy_in_place(accum, magnitude, step.direction);
  }
  if (!converged) {
    Tensor probe = image;
    axpy_in_place(probe, scale, accum);
    converged = predicted_class(model, probe) != src;
  }
  Tensor delta = scale * accum;
  const int end = predicted_class(model, image + delta);
  return make_record(std::move(delta), src, end, iter, method, converged && end != src);
}

}  // namespace

PerturbationRecord deepfool(const Classifier& model, const Tensor& image, const AttackConfig& cfg) {
  return deepfool_impl(model, image, nullptr, cfg, "deepfool");
}

PerturbationRecord deepfool_confined(const Classifier& model, const Tensor& image,
                                     const Subspace& subspace, const AttackConfig& cfg) {
  if (subspace.spans_everything()) {
    // Q Q^T = I: identical to the unconfined attack, including bit-wise.
    PerturbationRecord r = deepfool_impl(model, image, nullptr, cfg, "deepfool_confined");
    return r;
  }
  return deepfool_impl(model, image, &subspace, cfg, "deepfool_confined");
}

BoundaryPoint deepfool_targeted(const Classifier& model, const Tensor& image, int target_class,
                                const AttackConfig& cfg) {
  cfg.validate();
  if (target_class < 0 || target_class >= model.class_count()) {
    throw std::invalid_argument("deepfool_targeted: class out of range");
  }
  const int chat = predicted_class(model, image);
  if (chat == target_class) {
    throw std::invalid_argument("deepfool_targeted: sample already predicted as the target class");
  }
  const int classes = model.class_count();
  std::vector<double> weights(static_cast<std::size_t>(classes), 0.0);
  weights[static_cast<std::size_t>(target_class)] = 1.0;
  weights[static_cast<std::size_t>(chat)] = -1.0;
  auto g_value = [&](const Tensor& x) {
    const Tensor z = model.logits(x);
    return z[static_cast<std::size_t>(target_class)] - z[static_cast<std::size_t>(chat)];
  };
  BoundaryPoint bp;
  bp.source_class = chat;
  bp.point = image;
  bp.g_entry = g_value(image);
  const double tol = cfg.boundary_tol * (std::fabs(bp.g_entry) + cfg.boundary_tol);
  double g = bp.g_entry;
  while (std::fabs(g) > tol && bp.iterations < cfg.max_iterations) {
    const Tensor grad = model.logit_gradient(bp.point, weights);
    const double gn2 = dot(grad, grad);
    if (gn2 <= 1e-30) break;  // flat g, cannot make progress
    axpy_in_place(bp.point, -g / gn2, grad);
    ++bp.iterations;
    g = g_value(bp.point);
  }
  bp.g_exit = g;
  bp.converged = std::fabs(g) <= tol && bp.point.all_finite();
  return bp;
}

double fooling_rate(const Classifier& model, const Dataset& ds, const Tensor& perturbation) {
  if (ds.images.empty()) return 0.0;
  std::vector<int> fooled(ds.size(), 0);
  parallel_for(ds.size(), [&](std::size_t n) {
    const int clean = predicted_class(model, ds.images[n]);
    const int pert = predicted_class(model, ds.images[n] + perturbation);
    fooled[n] = pert != clean ? 1 : 0;
  });
  std::size_t count = 0;
  for (int f : fooled) count += static_cast<std::size_t>(f);
  return static_cast<double>(count) / static_cast<double>(ds.size());
}

Tensor uap_iterative(const Classifier& model, const Dataset& ds, double xi,
                     const AttackConfig& cfg) {
  cfg.validate();
  if (xi <= 0.0) throw std::invalid_argument("uap_iterative: xi must be > 0");
  if (ds.images.empty()) throw std::invalid_argument("uap_iterative: empty dataset");
  Rng rng(mix_seed(cfg.seed, 0x0a9f));
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  Tensor v = Tensor::zeros(ds.image_shape());
  Tensor best = v;
  double best_rate = 0.0;
  for (int pass = 0; pass < cfg.uap_pass_limit; ++pass) {
    rng.shuffle(order);
    for (std::size_t n : order) {
      const Tensor& img = ds.images[n];
      const int clean = predicted_class(model, img);
      Tensor shifted = img + v;
      if (predicted_class(model, shifted) != clean) continue;
      PerturbationRecord r = deepfool(model, shifted, cfg);
      if (!r.converged) continue;
      add_in_place(v, r.delta);
      const double norm = v.l2_norm();
      if (norm > xi) {
        const double s = xi / norm;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] *= s;
      }
    }
    const double rate = fooling_rate(model, ds, v);
    if (rate > best_rate) {
      best_rate = rate;
      best = v;
    }
    if (best_rate >= cfg.uap_target_rate) break;
  }
  return best;
}

Tensor uap_subspace(const DirectionSet& directions, int m, double xi, std::uint64_t seed) {
  if (m < 1 || static_cast<std::size_t>(m) > directions.count()) {
    throw std::invalid_argument("uap_subspace: m=" + std::to_string(m) + " with " +
                                std::to_string(directions.count()) + " directions");
  }
  if (xi <= 0.0) throw std::invalid_argument("uap_subspace: xi must be > 0");
  Rng rng(mix_seed(seed, 0x0a9));
  Tensor v = Tensor::zeros(directions.shape);
  for (int j = 0; j < m; ++j) {
    axpy_in_place(v, rng.normal(), directions.basis[static_cast<std::size_t>(j)]);
  }
  const double norm = v.l2_norm();
  if (norm == 0.0) throw NumericError("uap_subspace: degenerate random combination");
  const double s = xi / norm;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= s;
  return v;
}

Tensor saliency(const Classifier& model, const Tensor& image) {
  const int c = predicted_class(model, image);
  std::vector<double> w(static_cast<std::size_t>(model.class_count()), 0.0);
  w[static_cast<std::size_t>(c)] = 1.0;
  return model.logit_gradient(image, w);
}

std::vector<PerturbationRecord> deepfool_all(const Classifier& model, const Dataset& ds,
                                             const AttackConfig& cfg) {
  std::vector<PerturbationRecord> out(ds.size());
  parallel_for(ds.size(), [&](std::size_t n) { out[n] = deepfool(model, ds.images[n], cfg); });
  return out;
}

std::vector<PerturbationRecord> deepfool_confined_all(const Classifier& model, const Dataset& ds,
                                                      const Subspace& subspace,
                                                      const AttackConfig& cfg) {
  std::vector<PerturbationRecord> out(ds.size());
  parallel_for(ds.size(),
               [&](std::size_t n) { out[n] = deepfool_confined(model, ds.images[n], subspace, cfg); });
  return out;
}

std::vector<PerturbationRecord> fgsm_all(const Classifier& model, const Dataset& ds,
                                         double epsilon) {
  std::vector<PerturbationRecord> out(ds.size());
  parallel_for(ds.size(), [&](std::size_t n) {
    out[n] = fgsm(model, ds.images[n], predicted_class(model, ds.images[n]), epsilon);
  });
  return out;
}

std::vector<PerturbationRecord> saliency_all(const Classifier& model, const Dataset& ds) {
  std::vector<PerturbationRecord> out(ds.size());
  parallel_for(ds.size(), [&](std::size_t n) {
    Tensor g = saliency(model, ds.images[n]);
    const int src = predicted_class(model, ds.images[n]);
    out[n] = make_record(std::move(g), src, src, 0, "saliency", false);
  });
  return out;
}

}  // namespace curvebench
