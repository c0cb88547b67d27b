#include "curvebench/subspace.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "curvebench/errors.hpp"
#include "curvebench/io_util.hpp"

namespace curvebench {

std::string variant_tag(SubspaceVariant v) {
  switch (v) {
    case SubspaceVariant::Pos: return "S_pos";
    case SubspaceVariant::Neg: return "S_neg";
    case SubspaceVariant::NegPos: return "S_neg_pos";
    case SubspaceVariant::Flat: return "S_flat";
  }
  return "custom";
}

std::string ordering_tag(SvdOrdering o) { return o == SvdOrdering::Hi ? "S_hi" : "S_lo"; }

Subspace Subspace::full(const Shape& shape) {
  Subspace s;
  s.tag = "full";
  s.shape = shape;
  s.d_param = static_cast<int>(shape_numel(shape));
  return s;
}

void Subspace::validate() const {
  for (const Tensor& v : basis) {
    if (v.shape() != shape) {
      throw std::invalid_argument("subspace: vector shape " + shape_str(v.shape()) +
                                  " vs declared " + shape_str(shape));
    }
  }
  for (std::size_t i = 0; i < basis.size(); ++i) {
    for (std::size_t j = i; j < basis.size(); ++j) {
      const double d = dot(basis[i], basis[j]);
      const double expect = i == j ? 1.0 : 0.0;
      if (std::fabs(d - expect) > 1e-8) {
        throw std::invalid_argument("subspace: basis not orthonormal at pair (" +
                                    std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }
}

std::vector<Tensor> orthonormalize(const std::vector<Tensor>& columns, double tol) {
  std::vector<Tensor> basis;
  for (const Tensor& col : columns) {
    const double original = col.l2_norm();
    if (original == 0.0) continue;
    Tensor w = col;
    for (int pass = 0; pass < 2; ++pass) {
      for (const Tensor& q : basis) axpy_in_place(w, -dot(q, w), q);
    }
    const double r = w.l2_norm();
    if (r <= tol * original) continue;  // linearly dependent, drop
    for (std::size_t i = 0; i < w.size(); ++i) w[i] /= r;
    basis.push_back(std::move(w));
  }
  return basis;
}

Subspace select_per_class(const std::vector<DirectionSet>& per_class, SubspaceVariant variant,
                          int d) {
  if (per_class.empty()) throw std::invalid_argument("select_per_class: no direction sets");
  if (d < 1) throw std::invalid_argument("select_per_class: d must be >= 1");
  const Shape shape = per_class.front().shape;
  // Per class, the column list in selection order.
  std::vector<std::vector<const Tensor*>> picks(per_class.size());
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const DirectionSet& ds = per_class[c];
    if (ds.shape != shape) {
      throw std::invalid_argument("select_per_class: direction sets with mixed shapes");
    }
    const std::size_t n = ds.count();
    auto need = [&](std::size_t want, const char* pool) {
      if (want > n) {
        throw std::invalid_argument("select_per_class: d=" + std::to_string(d) + " exceeds " +
                                    pool + " directions available for class " +
                                    std::to_string(ds.target_class));
      }
    };
    switch (variant) {
      case SubspaceVariant::Pos: {
        need(static_cast<std::size_t>(d), "top");
        if (d > ds.k_top) {
          throw std::invalid_argument("select_per_class: d=" + std::to_string(d) +
                                      " exceeds k_top=" + std::to_string(ds.k_top) +
                                      " for class " + std::to_string(ds.target_class));
        }
        for (int i = 0; i < d; ++i) picks[c].push_back(&ds.basis[static_cast<std::size_t>(i)]);
        break;
      }
      case SubspaceVariant::Neg: {
        need(static_cast<std::size_t>(d), "bottom");
        if (d > ds.k_bottom) {
          throw std::invalid_argument("select_per_class: d=" + std::to_string(d) +
                                      " exceeds k_bottom=" + std::to_string(ds.k_bottom) +
                                      " for class " + std::to_string(ds.target_class));
        }
        for (int i = 0; i < d; ++i) picks[c].push_back(&ds.basis[n - 1 - static_cast<std::size_t>(i)]);
        break;
      }
      case SubspaceVariant::NegPos: {
        need(static_cast<std::size_t>(2 * d), "top+bottom");
        if (d > ds.k_top || d > ds.k_bottom) {
          throw std::invalid_argument("select_per_class: d=" + std::to_string(d) +
                                      " exceeds k_top/k_bottom for class " +
                                      std::to_string(ds.target_class));
        }
        for (int i = 0; i < d; ++i) {
          picks[c].push_back(&ds.basis[static_cast<std::size_t>(i)]);
          picks[c].push_back(&ds.basis[n - 1 - static_cast<std::size_t>(i)]);
        }
        break;
      }
      case SubspaceVariant::Flat: {
        if (!ds.complete_spectrum()) {
          throw std::invalid_argument(
              "select_per_class: flattest-direction selection requires the full spectrum "
              "(k_top + k_bottom == input dimension) for class " +
              std::to_string(ds.target_class));
        }
        need(static_cast<std::size_t>(d), "flat");
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          return std::fabs(ds.scores[a]) < std::fabs(ds.scores[b]);
        });
        for (int i = 0; i < d; ++i) picks[c].push_back(&ds.basis[order[static_cast<std::size_t>(i)]]);
        break;
      }
    }
  }
  // Round-robin interleave across classes so that growing d extends the
  // aggregated column list as a prefix.
  std::vector<Tensor> columns;
  const std::size_t rounds = picks.front().size();
  for (std::size_t r = 0; r < rounds; ++r) {
    for (std::size_t c = 0; c < picks.size(); ++c) columns.push_back(*picks[c][r]);
  }
  Subspace s;
  s.tag = variant_tag(variant);
  s.d_param = d;
  s.shape = shape;
  s.basis = orthonormalize(columns);
  return s;
}

Tensor project(const Subspace& subspace, const Tensor& x) {
  if (shape_numel(x.shape()) != subspace.input_dim()) {
    throw std::invalid_argument("project: input " + shape_str(x.shape()) +
                                " vs subspace over " + shape_str(subspace.shape));
  }
  // A full-rank orthonormal basis satisfies Q Q^T = I; apply it exactly.
  if (subspace.spans_everything()) {
    return x.reshaped(subspace.shape);
  }
  Tensor out = Tensor::zeros(subspace.shape);
  const Tensor xs = x.shape() == subspace.shape ? x : x.reshaped(subspace.shape);
  for (const Tensor& q : subspace.basis) axpy_in_place(out, dot(q, xs), q);
  return out;
}

namespace {

void fix_sign(std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::fabs(v[i]) > std::fabs(v[best])) best = i;
  }
  if (v[best] < 0.0) {
    for (double& x : v) x = -x;
  }
}

Subspace svd_of_rows(const std::vector<Tensor>& rows, const Shape& out_shape,
                     SvdOrdering ordering) {
  const std::size_t n = rows.size();
  const std::size_t dim = rows.front().size();
  double total = 0.0;
  for (const Tensor& r : rows) total += r.l2_norm();
  if (total == 0.0) throw NumericError("svd_basis: all stacked vectors are zero");
  Eigen::MatrixXd A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinV);
  const Eigen::MatrixXd& V = svd.matrixV();     // dim x k, descending singular values
  const Eigen::VectorXd& sigma = svd.singularValues();
  const std::size_t k = static_cast<std::size_t>(sigma.size());
  Subspace s;
  s.tag = ordering_tag(ordering);
  s.shape = out_shape;
  s.d_param = static_cast<int>(k);
  s.basis.reserve(k);
  s.scores.reserve(k);
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t col = ordering == SvdOrdering::Hi ? r : k - 1 - r;
    std::vector<double> v(dim);
    for (std::size_t j = 0; j < dim; ++j) v[j] = V(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(col));
    fix_sign(v);
    s.basis.push_back(Tensor::unchecked(out_shape, std::move(v)));
    s.scores.push_back(sigma(static_cast<Eigen::Index>(col)));
  }
  return s;
}

}  // namespace

Subspace svd_basis(const std::vector<PerturbationRecord>& perturbations, SvdOrdering ordering) {
  if (perturbations.size() < 2) {
    throw std::invalid_argument("svd_basis: need at least 2 perturbation records");
  }
  const Shape shape = perturbations.front().delta.shape();
  std::vector<Tensor> rows;
  rows.reserve(perturbations.size());
  for (const PerturbationRecord& r : perturbations) {
    if (r.delta.shape() != shape) {
      throw std::invalid_argument("svd_basis: inconsistent delta shapes " + shape_str(shape) +
                                  " vs " + shape_str(r.delta.shape()));
    }
    rows.push_back(r.delta);
  }
  return svd_of_rows(rows, shape, ordering);
}

Subspace svd_basis_downsampled(const std::vector<PerturbationRecord>& perturbations,
                               const ResampleUnit& unit, SvdOrdering ordering) {
  if (perturbations.size() < 2) {
    throw std::invalid_argument("svd_basis: need at least 2 perturbation records");
  }
  std::vector<Tensor> rows;
  rows.reserve(perturbations.size());
  for (const PerturbationRecord& r : perturbations) rows.push_back(unit.downscale(r.delta));
  const Shape low_shape = rows.front().shape();
  Subspace low = svd_of_rows(rows, low_shape, ordering);
  // Upscale each singular vector in order and re-orthonormalize; the span is
  // exactly the upscaled span, the order follows the singular values.
  std::vector<Tensor> upscaled;
  upscaled.reserve(low.basis.size());
  for (const Tensor& v : low.basis) upscaled.push_back(unit.upscale(v));
  Subspace s;
  s.tag = low.tag;
  s.shape = perturbations.front().delta.shape();
  s.basis = orthonormalize(upscaled);
  s.d_param = static_cast<int>(s.basis.size());
  s.scores.assign(low.scores.begin(), low.scores.begin() + static_cast<long>(s.basis.size()));
  return s;
}

Subspace prefix_subspace(const Subspace& s, std::size_t m, int d_param) {
  if (m > s.dim()) {
    throw std::invalid_argument("prefix_subspace: m=" + std::to_string(m) + " exceeds basis of " +
                                std::to_string(s.dim()));
  }
  Subspace out;
  out.tag = s.tag;
  out.d_param = d_param;
  out.shape = s.shape;
  out.basis.assign(s.basis.begin(), s.basis.begin() + static_cast<long>(m));
  if (s.scores.size() >= m) out.scores.assign(s.scores.begin(), s.scores.begin() + static_cast<long>(m));
  return out;
}

double norm_fraction(const Subspace& subspace, const std::vector<Tensor>& vectors) {
  if (vectors.empty()) throw std::invalid_argument("norm_fraction: empty vector list");
  double sum = 0.0;
  for (const Tensor& v : vectors) {
    const double n = v.l2_norm();
    if (n == 0.0) throw std::invalid_argument("norm_fraction: zero vector in input");
    sum += project(subspace, v).l2_norm() / n;
  }
  return sum / static_cast<double>(vectors.size());
}

namespace {
constexpr const char kMagic[] = "CBSUB1";
}

void save_subspace(const std::string& path, const Subspace& s) {
  std::string out;
  out += kMagic;
  put_u32(out, static_cast<std::uint32_t>(s.tag.size()));
  out += s.tag;
  put_i32(out, s.d_param);
  put_u32(out, static_cast<std::uint32_t>(s.dim()));
  put_u32(out, static_cast<std::uint32_t>(s.shape.size()));
  for (std::size_t e : s.shape) put_u32(out, static_cast<std::uint32_t>(e));
  put_u32(out, static_cast<std::uint32_t>(s.scores.size()));
  for (double v : s.scores) put_f64(out, v);
  for (const Tensor& q : s.basis) {
    for (std::size_t i = 0; i < q.size(); ++i) put_f64(out, q[i]);
  }
  write_file(path, out);
}

Subspace load_subspace(const std::string& path) {
  ByteReader r(read_file(path), path);
  r.expect_magic(kMagic, "subspace");
  Subspace s;
  const std::uint32_t tag_len = r.u32();
  s.tag = r.bytes(tag_len);
  s.d_param = r.i32();
  const std::uint32_t m = r.u32();
  const std::uint32_t rank = r.u32();
  for (std::uint32_t i = 0; i < rank; ++i) s.shape.push_back(r.u32());
  const std::uint32_t n_scores = r.u32();
  s.scores.resize(n_scores);
  for (std::uint32_t i = 0; i < n_scores; ++i) s.scores[i] = r.f64();
  const std::size_t numel = shape_numel(s.shape);
  s.basis.reserve(m);
  for (std::uint32_t q = 0; q < m; ++q) {
    std::vector<double> data(numel);
    for (std::size_t i = 0; i < numel; ++i) data[i] = r.f64();
    s.basis.push_back(Tensor::unchecked(s.shape, std::move(data)));
  }
  return s;
}

}  // namespace curvebench
