#include "curvebench/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "curvebench/errors.hpp"
#include "curvebench/io_util.hpp"
#include "curvebench/rng.hpp"
#include "curvebench/threading.hpp"
#include "curvebench/train.hpp"

namespace curvebench {

double nearest_rank_percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile: empty sample");
  std::sort(values.begin(), values.end());
  if (p <= 0.0) return values.front();
  const std::size_t n = values.size();
  std::size_t rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
  rank = std::min(std::max<std::size_t>(rank, 1), n);
  return values[rank - 1];
}

namespace {

std::vector<double> softmax_of(const Tensor& z) {
  std::vector<double> y(z.size());
  double zmax = z[0];
  for (std::size_t i = 1; i < z.size(); ++i) zmax = std::max(zmax, z[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    y[i] = std::exp(z[i] - zmax);
    sum += y[i];
  }
  for (double& v : y) v /= sum;
  return y;
}

Tensor unit_direction(const Tensor& direction, const Shape& image_shape) {
  const double norm = direction.l2_norm();
  if (norm == 0.0) throw std::invalid_argument("trace: zero direction");
  Tensor unit = (1.0 / norm) * direction;
  if (unit.shape() != image_shape) unit = unit.reshaped(image_shape);
  return unit;
}

}  // namespace

TraceResult run_trace(const Classifier& model, const Dataset& ds, const Tensor& direction,
                      int target_class, const std::vector<double>& s_grid,
                      TracePopulation population) {
  if (s_grid.empty()) throw std::invalid_argument("trace: empty s grid");
  if (ds.images.empty()) throw std::invalid_argument("trace: empty dataset");
  const Tensor unit = unit_direction(direction, ds.image_shape());

  std::vector<int> clean(ds.size());
  parallel_for(ds.size(), [&](std::size_t n) { clean[n] = predicted_class(model, ds.images[n]); });

  std::vector<std::size_t> pop, target_pop, nontarget_pop;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const bool is_target = clean[n] == target_class;
    if (is_target) target_pop.push_back(n);
    else nontarget_pop.push_back(n);
    if (population == TracePopulation::All || (population == TracePopulation::Target && is_target) ||
        (population == TracePopulation::NonTarget && !is_target)) {
      pop.push_back(n);
    }
  }
  if (pop.empty()) throw NumericError("trace: population empty after filtering");

  TraceResult res;
  res.target_class = target_class;
  res.s = s_grid;
  res.population_count = pop.size();
  res.target_population = target_pop.size();
  res.nontarget_population = nontarget_pop.size();

  // logits for every sample at every s, sample-parallel
  std::vector<std::vector<Tensor>> logits(ds.size());
  parallel_for(ds.size(), [&](std::size_t n) {
    logits[n].reserve(s_grid.size());
    for (double s : s_grid) {
      Tensor probe = ds.images[n];
      axpy_in_place(probe, s, unit);
      logits[n].push_back(model.logits(probe));
    }
  });

  const std::size_t ct = static_cast<std::size_t>(target_class);
  for (std::size_t si = 0; si < s_grid.size(); ++si) {
    std::vector<double> target_scores, sup_scores, softmax_scores;
    target_scores.reserve(pop.size());
    sup_scores.reserve(pop.size());
    for (std::size_t n : pop) {
      const Tensor& z = logits[n][si];
      target_scores.push_back(z[ct]);
      double sup = -1e300;
      for (std::size_t k = 0; k < z.size(); ++k) {
        if (k != ct) sup = std::max(sup, z[k]);
      }
      sup_scores.push_back(sup);
    }
    res.median.push_back(nearest_rank_percentile(target_scores, 50.0));
    res.p30.push_back(nearest_rank_percentile(target_scores, 30.0));
    res.p70.push_back(nearest_rank_percentile(target_scores, 70.0));
    res.sup_nontarget_median.push_back(nearest_rank_percentile(sup_scores, 50.0));

    std::size_t into = 0;
    for (std::size_t n : nontarget_pop) {
      const Tensor& z = logits[n][si];
      if (argmax_index(z.values()) == ct) ++into;
      softmax_scores.push_back(softmax_of(z)[ct]);
    }
    res.transition_in.push_back(
        nontarget_pop.empty() ? 0.0 : static_cast<double>(into) / static_cast<double>(nontarget_pop.size()));
    res.softmax_median.push_back(
        softmax_scores.empty() ? 0.0 : nearest_rank_percentile(softmax_scores, 50.0));

    std::size_t kept = 0;
    for (std::size_t n : target_pop) {
      if (argmax_index(logits[n][si].values()) == ct) ++kept;
    }
    res.retention.push_back(
        target_pop.empty() ? 0.0 : static_cast<double>(kept) / static_cast<double>(target_pop.size()));
  }
  return res;
}

std::vector<std::vector<double>> trace_sample_curves(const Classifier& model, const Dataset& ds,
                                                     const Tensor& direction, int target_class,
                                                     const std::vector<double>& s_grid,
                                                     TracePopulation population) {
  if (s_grid.empty()) throw std::invalid_argument("trace: empty s grid");
  const Tensor unit = unit_direction(direction, ds.image_shape());
  std::vector<std::size_t> pop;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const bool is_target = predicted_class(model, ds.images[n]) == target_class;
    if (population == TracePopulation::All || (population == TracePopulation::Target && is_target) ||
        (population == TracePopulation::NonTarget && !is_target)) {
      pop.push_back(n);
    }
  }
  if (pop.empty()) throw NumericError("trace: population empty after filtering");
  std::vector<std::vector<double>> curves(pop.size());
  parallel_for(pop.size(), [&](std::size_t i) {
    curves[i] = class_score_along(model, ds.images[pop[i]], unit, target_class, s_grid);
  });
  return curves;
}

SymmetryResult symmetry_score(const std::vector<double>& s_grid, const std::vector<double>& curve) {
  if (s_grid.size() < 5) throw std::invalid_argument("symmetry_score: need at least 5 grid points");
  if (curve.size() != s_grid.size()) {
    throw std::invalid_argument("symmetry_score: curve/grid length mismatch");
  }
  const std::size_t n = s_grid.size();
  double lo = curve[0], hi = curve[0];
  for (double v : curve) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double range = hi - lo;
  if (range == 0.0) return {0.0, 0.0};

  SymmetryResult best;
  double best_rms = 0.0;
  bool have = false;
  for (std::size_t j = 1; j + 1 < n; ++j) {
    const std::size_t offsets = std::min(j, n - 1 - j);
    if (offsets == 0) continue;
    double ss = 0.0;
    for (std::size_t u = 1; u <= offsets; ++u) {
      const double d = curve[j + u] - curve[j - u];
      ss += d * d;
    }
    const double rms = std::sqrt(ss / static_cast<double>(offsets));
    const bool better = !have || rms < best_rms ||
                        (rms == best_rms && std::fabs(s_grid[j]) < std::fabs(best.s0));
    if (better) {
      best.s0 = s_grid[j];
      best_rms = rms;
      best.score = rms / range;
      have = true;
    }
  }
  return best;
}

std::vector<SymmetryResult> symmetry_scores(const std::vector<double>& s_grid,
                                            const std::vector<std::vector<double>>& curves) {
  std::vector<SymmetryResult> out;
  out.reserve(curves.size());
  for (const auto& c : curves) out.push_back(symmetry_score(s_grid, c));
  return out;
}

double separability_score(const std::vector<double>& s_grid,
                          const std::vector<std::vector<double>>& curves) {
  if (s_grid.size() < 2) throw std::invalid_argument("separability_score: degenerate grid");
  if (curves.size() < 2) throw std::invalid_argument("separability_score: need >= 2 samples");
  // offset of s = 0 (or the nearest grid point)
  std::size_t zero_idx = 0;
  for (std::size_t i = 1; i < s_grid.size(); ++i) {
    if (std::fabs(s_grid[i]) < std::fabs(s_grid[zero_idx])) zero_idx = i;
  }
  std::vector<std::vector<double>> centered(curves.size());
  std::vector<double> ranges;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    if (curves[i].size() != s_grid.size()) {
      throw std::invalid_argument("separability_score: curve/grid length mismatch");
    }
    centered[i].resize(s_grid.size());
    const double c0 = curves[i][zero_idx];
    double lo = 1e300, hi = -1e300;
    for (std::size_t j = 0; j < s_grid.size(); ++j) {
      centered[i][j] = curves[i][j] - c0;
      lo = std::min(lo, curves[i][j]);
      hi = std::max(hi, curves[i][j]);
    }
    ranges.push_back(hi - lo);
  }
  const double med_range = nearest_rank_percentile(ranges, 50.0);
  std::vector<double> pair_rms;
  for (std::size_t a = 0; a < centered.size(); ++a) {
    for (std::size_t b = a + 1; b < centered.size(); ++b) {
      double ss = 0.0;
      for (std::size_t j = 0; j < s_grid.size(); ++j) {
        const double d = centered[a][j] - centered[b][j];
        ss += d * d;
      }
      pair_rms.push_back(std::sqrt(ss / static_cast<double>(s_grid.size())));
    }
  }
  const double med = nearest_rank_percentile(pair_rms, 50.0);
  if (med_range == 0.0) return med == 0.0 ? 0.0 : 1e300;
  return med / med_range;
}

std::vector<double> symmetric_grid(double s_max, int points) {
  if (points < 3 || points % 2 == 0) {
    throw std::invalid_argument("symmetric_grid: need an odd point count >= 3");
  }
  if (s_max <= 0.0) throw std::invalid_argument("symmetric_grid: s_max must be > 0");
  std::vector<double> g(static_cast<std::size_t>(points));
  const int half = points / 2;
  for (int i = 0; i < points; ++i) {
    g[static_cast<std::size_t>(i)] = s_max * static_cast<double>(i - half) / static_cast<double>(half);
  }
  g[static_cast<std::size_t>(half)] = 0.0;
  return g;
}

std::vector<AccuracyVsDRow> run_accuracy_vs_d(const Classifier& model, const Dataset& train,
                                              const Dataset& test,
                                              const std::vector<DirectionSet>& per_class,
                                              const std::vector<SubspaceVariant>& variants,
                                              const std::vector<int>& d_grid) {
  std::vector<AccuracyVsDRow> rows;
  for (SubspaceVariant variant : variants) {
    for (int d : d_grid) {
      Subspace s;
      if (d == 0) {
        s.tag = variant_tag(variant);
        s.d_param = 0;
        s.shape = train.image_shape();
      } else {
        s = select_per_class(per_class, variant, d);
      }
      for (int split = 0; split < 2; ++split) {
        const Dataset& ds = split == 0 ? train : test;
        AccuracyVsDRow row;
        row.source = "curvature";
        row.variant = variant_tag(variant);
        row.d = d;
        row.m = s.dim();
        row.split = split == 0 ? "train" : "test";
        row.accuracy = accuracy(model, ds, s);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::vector<AccuracyVsDRow> run_accuracy_vs_d_svd(const Classifier& model, const Dataset& train,
                                                  const Dataset& test, const Subspace& hi_basis,
                                                  const std::vector<int>& d_grid) {
  if (hi_basis.tag != "S_hi") {
    throw std::invalid_argument("run_accuracy_vs_d_svd: expected an S_hi basis");
  }
  std::vector<AccuracyVsDRow> rows;
  const std::size_t total = hi_basis.dim();
  for (int ordering = 0; ordering < 2; ++ordering) {
    for (int d : d_grid) {
      const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(std::max(d, 0)), total);
      Subspace s;
      s.shape = hi_basis.shape;
      s.d_param = d;
      if (ordering == 0) {
        s.tag = "S_hi";
        s.basis.assign(hi_basis.basis.begin(), hi_basis.basis.begin() + static_cast<long>(m));
      } else {
        s.tag = "S_lo";
        s.basis.assign(hi_basis.basis.end() - static_cast<long>(m), hi_basis.basis.end());
        std::reverse(s.basis.begin(), s.basis.end());
      }
      for (int split = 0; split < 2; ++split) {
        const Dataset& ds = split == 0 ? train : test;
        AccuracyVsDRow row;
        row.source = "svd";
        row.variant = s.tag;
        row.d = d;
        row.m = s.dim();
        row.split = split == 0 ? "train" : "test";
        row.accuracy = accuracy(model, ds, s);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::vector<NormFractionRow> run_norm_fractions(
    const std::vector<std::pair<std::string, std::vector<Tensor>>>& method_vectors,
    const std::vector<Subspace>& subspaces) {
  std::vector<NormFractionRow> rows;
  for (const auto& [method, vectors] : method_vectors) {
    if (vectors.empty()) throw std::invalid_argument("norm fractions: empty set for " + method);
    std::vector<Tensor> usable;
    std::int64_t excluded = 0;
    for (const Tensor& v : vectors) {
      if (v.l2_norm() == 0.0) {
        ++excluded;
      } else {
        usable.push_back(v);
      }
    }
    for (const Subspace& s : subspaces) {
      NormFractionRow row;
      row.method = method;
      row.variant = s.tag;
      row.d = s.d_param;
      row.m = s.dim();
      row.excluded = excluded;
      row.fraction = usable.empty() ? 0.0 : norm_fraction(s, usable);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<Tensor> random_direction_set(const Shape& shape, std::size_t count,
                                         std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x150));
  std::vector<Tensor> out;
  out.reserve(count);
  const std::size_t dim = shape_numel(shape);
  for (std::size_t n = 0; n < count; ++n) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    out.push_back(Tensor::unchecked(shape, std::move(v)));
  }
  return out;
}

ConfinedNormRow run_confined_norms(const Classifier& model, const Dataset& ds,
                                   const Subspace& subspace, const AttackConfig& cfg) {
  const std::vector<PerturbationRecord> records = deepfool_confined_all(model, ds, subspace, cfg);
  ConfinedNormRow row;
  row.ordering = subspace.tag;
  row.d = subspace.d_param;
  row.m = subspace.dim();
  row.total = static_cast<std::int64_t>(records.size());
  double norm_sum = 0.0;
  for (const PerturbationRecord& r : records) {
    if (r.converged) {
      ++row.converged;
      norm_sum += r.l2_norm;
    }
  }
  row.convergence_rate =
      records.empty() ? 0.0 : static_cast<double>(row.converged) / static_cast<double>(records.size());
  row.mean_confined_norm = row.converged > 0 ? norm_sum / static_cast<double>(row.converged) : 0.0;
  double proj_sum = 0.0;
  for (const Tensor& im : ds.images) proj_sum += project(subspace, im).l2_norm();
  row.mean_projected_image_norm =
      ds.images.empty() ? 0.0 : proj_sum / static_cast<double>(ds.size());
  return row;
}

ResampleTableRow run_resampling_table_row(const Classifier& model, const Dataset& ds,
                                          const std::vector<PerturbationRecord>& deepfools,
                                          int d_low, const std::vector<double>& f_grid) {
  if (deepfools.size() != ds.size()) {
    throw std::invalid_argument("resample table: need one DeepFool record per sample");
  }
  const std::size_t side = ds.image_shape()[1];
  ResampleUnit unit(static_cast<std::size_t>(d_low), side);
  ResampleTableRow row;
  row.d_low = d_low;
  row.accuracy = accuracy(model, ds, unit);

  std::vector<std::size_t> converged_idx;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    if (deepfools[n].converged) converged_idx.push_back(n);
  }
  double img_norm_sum = 0.0;
  for (const Tensor& im : ds.images) img_norm_sum += unit.apply(im).l2_norm();
  row.mean_image_norm = ds.images.empty() ? 0.0 : img_norm_sum / static_cast<double>(ds.size());
  double pert_norm_sum = 0.0;
  for (std::size_t n : converged_idx) pert_norm_sum += unit.apply(deepfools[n].delta).l2_norm();
  row.mean_pert_norm =
      converged_idx.empty() ? 0.0 : pert_norm_sum / static_cast<double>(converged_idx.size());

  // Clean predictions of the resampling network.
  std::vector<int> clean(ds.size());
  parallel_for(ds.size(), [&](std::size_t n) {
    clean[n] = predicted_class(model, unit.apply(ds.images[n]));
  });
  for (double f : f_grid) {
    std::vector<int> fooled(converged_idx.size(), 0);
    parallel_for(converged_idx.size(), [&](std::size_t i) {
      const std::size_t n = converged_idx[i];
      Tensor attacked = ds.images[n];
      axpy_in_place(attacked, f, deepfools[n].delta);
      fooled[i] = predicted_class(model, unit.apply(attacked)) != clean[n] ? 1 : 0;
    });
    std::size_t count = 0;
    for (int v : fooled) count += static_cast<std::size_t>(v);
    row.fooling.push_back(converged_idx.empty()
                              ? 0.0
                              : static_cast<double>(count) / static_cast<double>(converged_idx.size()));
  }
  return row;
}

std::vector<std::uint8_t> direction_to_bytes(const Tensor& direction) {
  if (direction.rank() != 3) {
    throw std::invalid_argument("visualize: direction must be CxHxW, got " +
                                shape_str(direction.shape()));
  }
  const std::size_t c = direction.shape()[0];
  const std::size_t hw = direction.shape()[1] * direction.shape()[2];
  std::vector<std::uint8_t> bytes(c * hw);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double lo = direction[ch * hw], hi = direction[ch * hw];
    for (std::size_t i = 0; i < hw; ++i) {
      lo = std::min(lo, direction[ch * hw + i]);
      hi = std::max(hi, direction[ch * hw + i]);
    }
    for (std::size_t i = 0; i < hw; ++i) {
      if (hi == lo) {
        bytes[ch * hw + i] = 128;
      } else {
        const double t = (direction[ch * hw + i] - lo) / (hi - lo);
        bytes[ch * hw + i] = static_cast<std::uint8_t>(std::lround(255.0 * t));
      }
    }
  }
  return bytes;
}

void visualize_direction(const Tensor& direction, const std::string& path) {
  const std::size_t c = direction.shape().empty() ? 0 : direction.shape()[0];
  if (c != 1 && c != 3) {
    throw std::invalid_argument("visualize: only 1- or 3-channel directions supported, got " +
                                shape_str(direction.shape()));
  }
  const std::vector<std::uint8_t> bytes = direction_to_bytes(direction);
  const std::size_t h = direction.shape()[1], w = direction.shape()[2];
  std::ostringstream os;
  os << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
  std::string out = os.str();
  if (c == 1) {
    out.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  } else {
    // interleave channels per pixel
    const std::size_t hw = h * w;
    for (std::size_t i = 0; i < hw; ++i) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        out.push_back(static_cast<char>(bytes[ch * hw + i]));
      }
    }
  }
  write_file(path, out);
}

std::pair<Shape, std::vector<std::uint8_t>> read_pnm(const std::string& path) {
  const std::string data = read_file(path);
  std::istringstream in(data);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if ((magic != "P5" && magic != "P6") || maxval != 255 || w == 0 || h == 0) {
    throw FormatError("pnm: unsupported header in " + path);
  }
  in.get();  // single whitespace byte after the header
  const std::size_t c = magic == "P5" ? 1 : 3;
  const std::size_t offset = static_cast<std::size_t>(in.tellg());
  if (data.size() < offset + c * w * h) throw FormatError("pnm: truncated file " + path);
  std::vector<std::uint8_t> bytes(c * w * h);
  if (c == 1) {
    for (std::size_t i = 0; i < w * h; ++i) bytes[i] = static_cast<std::uint8_t>(data[offset + i]);
  } else {
    for (std::size_t i = 0; i < w * h; ++i) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        bytes[ch * w * h + i] = static_cast<std::uint8_t>(data[offset + 3 * i + ch]);
      }
    }
  }
  return {Shape{c, h, w}, std::move(bytes)};
}

}  // namespace curvebench
