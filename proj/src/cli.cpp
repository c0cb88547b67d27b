#include "curvebench/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "curvebench/attacks.hpp"
#include "curvebench/checkpoint.hpp"
#include "curvebench/config.hpp"
#include "curvebench/csv.hpp"
#include "curvebench/curvature.hpp"
#include "curvebench/dataset.hpp"
#include "curvebench/errors.hpp"
#include "curvebench/experiments.hpp"
#include "curvebench/io_util.hpp"
#include "curvebench/subspace.hpp"
#include "curvebench/threading.hpp"
#include "curvebench/train.hpp"

namespace curvebench {

const char* kToolVersion = "0.1.0";

namespace {

namespace fs = std::filesystem;

struct Invocation {
  std::string subcommand;
  Config cfg;
  fs::path out_dir;
  std::vector<std::pair<std::string, std::vector<std::string>>> csv_schemas;
  std::vector<std::string> outputs;

  fs::path out_path(const std::string& name) const { return out_dir / name; }

  void note_csv(const CsvWriter& w) {
    csv_schemas.emplace_back(fs::path(w.path()).filename().string(), w.header());
    outputs.push_back(fs::path(w.path()).filename().string());
  }
  void note_output(const std::string& name) { outputs.push_back(name); }

  void write_manifest() const {
    Config manifest;
    manifest.set("tool", "curvebench");
    manifest.set("version", kToolVersion);
    manifest.set("subcommand", subcommand);
    manifest.set("threads", std::to_string(max_threads()));
    const std::string canon = subcommand + "\n" + cfg.canonical_text();
    manifest.set("config_hash", hex64(fnv1a_hash(canon)));
    for (const auto& [k, v] : cfg.entries()) manifest.set("config." + k, v);
    for (const auto& [file, cols] : csv_schemas) {
      std::string joined;
      for (std::size_t i = 0; i < cols.size(); ++i) {
        if (i) joined += ",";
        joined += cols[i];
      }
      manifest.set("csv." + file + ".columns", joined);
      manifest.set("csv." + file + ".schema_version", "1");
    }
    std::string files;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      if (i) files += ",";
      files += outputs[i];
    }
    manifest.set("outputs", files);
    write_file((out_dir / "manifest.txt").string(), manifest.canonical_text());
  }
};

// ---- dataset loading -------------------------------------------------------

struct LoadedData {
  Dataset train;
  Dataset test;
};

Dataset limit_per_class(const Dataset& ds, std::int64_t limit) {
  if (limit <= 0) return ds;
  Dataset out;
  out.class_count = ds.class_count;
  out.range_lo = ds.range_lo;
  out.range_hi = ds.range_hi;
  std::vector<std::int64_t> seen(static_cast<std::size_t>(ds.class_count), 0);
  for (std::size_t n = 0; n < ds.size(); ++n) {
    if (seen[static_cast<std::size_t>(ds.labels[n])]++ < limit) {
      out.images.push_back(ds.images[n]);
      out.labels.push_back(ds.labels[n]);
    }
  }
  return out;
}

LoadedData load_data(const Config& cfg) {
  const std::string kind = cfg.get_or("dataset", "synth");
  Dataset raw_train, raw_test;
  if (kind == "synth") {
    const int classes = static_cast<int>(cfg.get_int_or("synth_classes", 3));
    const int per_class = static_cast<int>(cfg.get_int_or("synth_per_class", 150));
    const int test_per_class = static_cast<int>(cfg.get_int_or("synth_test_per_class", 50));
    const int side = static_cast<int>(cfg.get_int_or("synth_side", 8));
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int_or("synth_seed", 7));
    Dataset all = synth_blobs(classes, per_class + test_per_class, side, seed);
    auto [tr, te] = split_per_class(all, per_class);
    raw_train = std::move(tr);
    raw_test = std::move(te);
  } else if (kind == "idx") {
    raw_train = load_idx(cfg.get("idx_train_images"), cfg.get("idx_train_labels"));
    raw_train = limit_per_class(raw_train, cfg.get_int_or("limit_train_per_class", 0));
    if (cfg.has("idx_test_images")) {
      raw_test = load_idx(cfg.get("idx_test_images"), cfg.get("idx_test_labels"));
      raw_test = limit_per_class(raw_test, cfg.get_int_or("limit_test_per_class", 0));
      raw_test.class_count = raw_train.class_count =
          std::max(raw_train.class_count, raw_test.class_count);
    }
  } else {
    throw ConfigError("config: dataset must be 'synth' or 'idx', got '" + kind + "'");
  }
  LoadedData out;
  out.train = mean_normalize(raw_train);
  if (!raw_test.images.empty()) {
    out.test = apply_mean(raw_test, out.train.mean_image);
  }
  return out;
}

const Dataset& pick_split(const LoadedData& data, const Config& cfg, const char* fallback) {
  const std::string split = cfg.get_or("split", fallback);
  if (split == "train") return data.train;
  if (split == "test") {
    if (data.test.images.empty()) throw ConfigError("config: no test split available");
    return data.test;
  }
  throw ConfigError("config: split must be 'train' or 'test', got '" + split + "'");
}

Model load_model(const Config& cfg) {
  return load_checkpoint(cfg.get("model"));
}

AttackConfig attack_config(const Config& cfg) {
  AttackConfig a;
  a.max_iterations = static_cast<int>(cfg.get_int_or("max_iterations", a.max_iterations));
  a.overshoot = cfg.get_double_or("overshoot", a.overshoot);
  a.boundary_tol = cfg.get_double_or("boundary_tol", a.boundary_tol);
  a.uap_target_rate = cfg.get_double_or("uap_target_rate", a.uap_target_rate);
  a.uap_pass_limit = static_cast<int>(cfg.get_int_or("uap_pass_limit", a.uap_pass_limit));
  a.seed = static_cast<std::uint64_t>(cfg.get_int_or("seed", 1));
  a.validate();
  return a;
}

std::vector<int> default_d_grid(std::size_t limit) {
  std::vector<int> g{0};
  for (std::size_t d = 1; d < limit; d *= 2) g.push_back(static_cast<int>(d));
  g.push_back(static_cast<int>(limit));
  return g;
}

std::vector<int> config_d_grid(const Config& cfg, std::size_t limit) {
  if (!cfg.has("d_grid")) return default_d_grid(limit);
  std::vector<int> g;
  for (std::int64_t v : cfg.get_int_list_or("d_grid", {})) g.push_back(static_cast<int>(v));
  return g;
}

std::vector<PerturbationRecord> converged_only(std::vector<PerturbationRecord> records) {
  std::vector<PerturbationRecord> out;
  for (auto& r : records) {
    if (r.converged) out.push_back(std::move(r));
  }
  return out;
}

double median_converged_norm(const std::vector<PerturbationRecord>& records) {
  std::vector<double> norms;
  for (const auto& r : records) {
    if (r.converged) norms.push_back(r.l2_norm);
  }
  if (norms.empty()) throw NumericError("no converged perturbations to derive a scale from");
  return nearest_rank_percentile(norms, 50.0);
}

// ---- subcommands -----------------------------------------------------------

void cmd_train(Invocation& inv) {
  const Config& cfg = inv.cfg;
  LoadedData data = load_data(cfg);
  Model model = Model::make(cfg.get_or("arch", "cnn-small"), data.train.image_shape(),
                            data.train.class_count,
                            static_cast<std::uint64_t>(cfg.get_int_or("seed", 1)));
  TrainConfig tc;
  tc.learning_rate = cfg.get_double_or("lr", tc.learning_rate);
  tc.momentum = cfg.get_double_or("momentum", tc.momentum);
  tc.weight_decay = cfg.get_double_or("weight_decay", tc.weight_decay);
  tc.batch_size = static_cast<int>(cfg.get_int_or("batch_size", tc.batch_size));
  tc.epochs = static_cast<int>(cfg.get_int_or("epochs", tc.epochs));
  tc.seed = static_cast<std::uint64_t>(cfg.get_int_or("seed", 1));
  const std::vector<EpochStats> log =
      train(model, data.train, data.test.images.empty() ? nullptr : &data.test, tc);

  const std::string model_name = cfg.get_or("out_model", "model.ckpt");
  save_checkpoint(model, inv.out_path(model_name).string());
  inv.note_output(model_name);

  CsvWriter csv(inv.out_path(cfg.get_or("out_log", "train_log.csv")).string(),
                {"epoch", "loss", "train_acc", "test_acc"});
  for (const EpochStats& e : log) {
    csv.row({static_cast<std::int64_t>(e.epoch), e.loss, e.train_accuracy,
             e.test_accuracy < 0 ? std::string("") : csv_format_cell(e.test_accuracy)});
  }
  csv.flush();
  inv.note_csv(csv);
  std::cout << "trained " << model.arch_name() << ": final train acc " << log.back().train_accuracy;
  if (log.back().test_accuracy >= 0) std::cout << ", test acc " << log.back().test_accuracy;
  std::cout << "\n";
}

void cmd_attack(Invocation& inv) {
  const Config& cfg = inv.cfg;
  LoadedData data = load_data(cfg);
  const Dataset& ds = pick_split(data, cfg, "test");
  Model model = load_model(cfg);
  const AttackConfig acfg = attack_config(cfg);
  const std::string method = cfg.get("method");

  std::vector<PerturbationRecord> records;
  if (method == "deepfool") {
    records = deepfool_all(model, ds, acfg);
  } else if (method == "fgsm") {
    records = fgsm_all(model, ds, cfg.get_double_or("fgsm_epsilon", 0.1));
  } else if (method == "saliency") {
    records = saliency_all(model, ds);
  } else if (method == "uap-iterative") {
    const double xi = cfg.get_double("uap_xi");
    Tensor v = uap_iterative(model, ds, xi, acfg);
    const double rate = fooling_rate(model, ds, v);
    records.push_back(make_record(std::move(v), -1, -1, acfg.uap_pass_limit, "uap", rate > 0.0));
  } else if (method == "uap-subspace") {
    DirectionSet dirs = load_directions(cfg.get("directions"));
    const double xi = cfg.get_double("uap_xi");
    const int m = static_cast<int>(cfg.get_int_or("uap_m", 1));
    Tensor v = uap_subspace(dirs, m, xi, static_cast<std::uint64_t>(cfg.get_int_or("seed", 1)));
    const double rate = fooling_rate(model, ds, v);
    records.push_back(make_record(std::move(v), -1, -1, 0, "uap_subspace", rate > 0.0));
  } else {
    throw ConfigError("config: unknown attack method '" + method + "'");
  }

  const std::string pert_name = cfg.get_or("out_perturbations", method + ".cbprt");
  save_perturbations(inv.out_path(pert_name).string(), records);
  inv.note_output(pert_name);

  std::size_t converged = 0;
  double norm_sum = 0.0, iter_sum = 0.0;
  for (const auto& r : records) {
    converged += r.converged ? 1u : 0u;
    norm_sum += r.l2_norm;
    iter_sum += r.iterations;
  }
  CsvWriter csv(inv.out_path(cfg.get_or("out_summary", "attack_summary.csv")).string(),
                {"method", "count", "converged", "mean_norm", "mean_iterations"});
  csv.row({method, static_cast<std::int64_t>(records.size()),
           static_cast<std::int64_t>(converged),
           norm_sum / static_cast<double>(records.size()),
           iter_sum / static_cast<double>(records.size())});
  csv.flush();
  inv.note_csv(csv);
}

void cmd_curvature(Invocation& inv) {
  const Config& cfg = inv.cfg;
  LoadedData data = load_data(cfg);
  const Dataset& ds = pick_split(data, cfg, "train");
  Model model = load_model(cfg);
  CurvatureConfig ccfg;
  ccfg.fd_step = cfg.get_double_or("fd_step", ccfg.fd_step);
  ccfg.attack = attack_config(cfg);
  ccfg.k_top = static_cast<int>(cfg.get_int_or("k_top", 0));
  ccfg.k_bottom = static_cast<int>(cfg.get_int_or("k_bottom", 0));
  ccfg.lanczos_iters = static_cast<int>(cfg.get_int_or("lanczos_iters", 0));
  ccfg.seed = static_cast<std::uint64_t>(cfg.get_int_or("seed", 1));

  std::vector<int> classes;
  const std::string cls = cfg.get_or("class", "all");
  if (cls == "all") {
    for (int c = 0; c < model.class_count(); ++c) classes.push_back(c);
  } else {
    classes.push_back(static_cast<int>(std::stol(cls)));
  }

  CsvWriter csv(inv.out_path("curvature_summary.csv").string(),
                {"class", "qualifying", "accepted", "skipped", "nonconverged", "top_score",
                 "bottom_score", "residual_max", "partial"});
  for (int c : classes) {
    DirectionSet dirs = principal_curvatures(model, ds, c, ccfg);
    const std::string name = "directions_class" + std::to_string(c) + ".cbdir";
    save_directions(inv.out_path(name).string(), dirs);
    inv.note_output(name);
    double res_max = 0.0;
    for (double r : dirs.residuals) res_max = std::max(res_max, r);
    csv.row({static_cast<std::int64_t>(c),
             static_cast<std::int64_t>(dirs.accept_count + dirs.skip_count + dirs.nonconverged_count),
             static_cast<std::int64_t>(dirs.accept_count),
             static_cast<std::int64_t>(dirs.skip_count),
             static_cast<std::int64_t>(dirs.nonconverged_count), dirs.scores.front(),
             dirs.scores.back(), res_max, static_cast<std::int64_t>(dirs.partial ? 1 : 0)});
  }
  csv.flush();
  inv.note_csv(csv);
}

void cmd_svd_basis(Invocation& inv) {
  const Config& cfg = inv.cfg;
  std::vector<PerturbationRecord> records = load_perturbations(cfg.get("perturbations"));
  if (cfg.get_or("converged_only", "true") == "true") records = converged_only(std::move(records));
  if (records.size() < 2) throw NumericError("svd-basis: fewer than 2 usable perturbations");
  const std::int64_t d_low = cfg.get_int_or("d_low", 0);

  CsvWriter csv(inv.out_path("svd_summary.csv").string(),
                {"ordering", "m", "sigma_max", "sigma_min"});
  for (const std::string& ord : cfg.get_list_or("orderings", {"hi", "lo"})) {
    const SvdOrdering ordering = ord == "hi" ? SvdOrdering::Hi : SvdOrdering::Lo;
    Subspace s;
    if (d_low > 0) {
      const std::size_t side = records.front().delta.shape()[1];
      ResampleUnit unit(static_cast<std::size_t>(d_low), side);
      s = svd_basis_downsampled(records, unit, ordering);
    } else {
      s = svd_basis(records, ordering);
    }
    const std::string name = "subspace_" + ordering_tag(ordering) + ".cbsub";
    save_subspace(inv.out_path(name).string(), s);
    inv.note_output(name);
    csv.row({s.tag, static_cast<std::int64_t>(s.dim()),
             s.scores.empty() ? 0.0 : *std::max_element(s.scores.begin(), s.scores.end()),
             s.scores.empty() ? 0.0 : *std::min_element(s.scores.begin(), s.scores.end())});
  }
  csv.flush();
  inv.note_csv(csv);
}

std::vector<double> trace_s_grid(const Config& cfg) {
  const int points = static_cast<int>(cfg.get_int_or("s_points", 41));
  double s_max;
  if (cfg.has("s_max")) {
    s_max = cfg.get_double("s_max");
  } else if (cfg.has("perturbations")) {
    s_max = 5.0 * median_converged_norm(load_perturbations(cfg.get("perturbations")));
  } else {
    throw ConfigError("config: trace needs 's_max' or 'perturbations' to set the sweep scale");
  }
  return symmetric_grid(s_max, points);
}

std::size_t pick_direction_index(const Config& cfg, const DirectionSet& dirs) {
  const std::string sel = cfg.get_or("direction_select", "top-pos");
  if (sel == "top-pos") return 0;
  if (sel == "top-neg") return dirs.count() - 1;
  if (sel == "flattest") {
    std::size_t best = 0;
    for (std::size_t i = 1; i < dirs.count(); ++i) {
      if (std::fabs(dirs.scores[i]) < std::fabs(dirs.scores[best])) best = i;
    }
    return best;
  }
  if (sel.rfind("index:", 0) == 0) {
    const std::size_t idx = static_cast<std::size_t>(std::stoul(sel.substr(6)));
    if (idx >= dirs.count()) throw ConfigError("config: direction index out of range");
    return idx;
  }
  throw ConfigError("config: direction_select must be top-pos, top-neg, flattest or index:N");
}

void cmd_trace(Invocation& inv) {
  const Config& cfg = inv.cfg;
  LoadedData data = load_data(cfg);
  const Dataset& ds = pick_split(data, cfg, "test");
  Model model = load_model(cfg);
  DirectionSet dirs = load_directions(cfg.get("directions"));
  const std::size_t index = pick_direction_index(cfg, dirs);
  const int target_class = static_cast<int>(cfg.get_int_or("class", dirs.target_class));
  const std::string pop_name = cfg.get_or("population", "non_target");
  TracePopulation pop = TracePopulation::NonTarget;
  if (pop_name == "target") pop = TracePopulation::Target;
  else if (pop_name == "all") pop = TracePopulation::All;
  else if (pop_name != "non_target") throw ConfigError("config: bad population '" + pop_name + "'");

  const std::vector<double> s_grid = trace_s_grid(cfg);
  const Tensor& direction = dirs.basis[index];
  TraceResult tr = run_trace(model, ds, direction, target_class, s_grid, pop);
  tr.direction_id = static_cast<int>(index);

  CsvWriter csv(inv.out_path(cfg.get_or("out_trace", "trace.csv")).string(),
                {"direction_id", "class", "s", "median", "p30", "p70", "sup_nontarget_median",
                 "transition_in", "retention", "softmax_median", "population"});
  for (std::size_t i = 0; i < s_grid.size(); ++i) {
    csv.row({static_cast<std::int64_t>(tr.direction_id), static_cast<std::int64_t>(tr.target_class),
             tr.s[i], tr.median[i], tr.p30[i], tr.p70[i], tr.sup_nontarget_median[i],
             tr.transition_in[i], tr.retention[i], tr.softmax_median[i],
             static_cast<std::int64_t>(tr.population_count)});
  }
  csv.flush();
  inv.note_csv(csv);

  const auto curves = trace_sample_curves(model, ds, direction, target_class, s_grid, pop);
  const auto syms = symmetry_scores(s_grid, curves);
  std::vector<double> sym_scores, s0_abs;
  for (const auto& s : syms) {
    sym_scores.push_back(s.score);
    s0_abs.push_back(std::fabs(s.s0));
  }
  CsvWriter scores(inv.out_path(cfg.get_or("out_scores", "trace_scores.csv")).string(),
                   {"direction_id", "class", "samples", "median_symmetry_score",
                    "median_abs_s0", "separability_score"});
  scores.row({static_cast<std::int64_t>(tr.direction_id),
              static_cast<std::int64_t>(tr.target_class), static_cast<std::int64_t>(curves.size()),
              nearest_rank_percentile(sym_scores, 50.0), nearest_rank_percentile(s0_abs, 50.0),
              separability_score(s_grid, curves)});
  scores.flush();
  inv.note_csv(scores);
}

std::vector<DirectionSet> load_direction_sets(const Config& cfg) {
  std::vector<DirectionSet> sets;
  for (const std::string& path : cfg.get_list_or("directions", {})) {
    sets.push_back(load_directions(path));
  }
  if (sets.empty()) throw ConfigError("config: missing required key 'directions'");
  return sets;
}

void cmd_acc_vs_d(Invocation& inv) {
  const Config& cfg = inv.cfg;
  LoadedData data = load_data(cfg);
  if (data.test.images.empty()) throw ConfigError("config: acc-vs-d needs a test split");
  Model model = load_model(cfg);
  const std::string source = cfg.get_or("source", "curvature");

  std::vector<AccuracyVsDRow> rows;
  if (source == "curvature") {
    const std::vector<DirectionSet> sets = load_direction_sets(cfg);
    std::size_t per_class_limit = sets.front().count();
    for (const auto& s : sets) per_class_limit = std::min(per_class_limit, s.count());
    const std::size_t dim = sets.front().input_dim();
    const std::size_t cap = std::min<std::size_t>(
        per_class_limit, (dim + sets.size() - 1) / sets.size());
    std::vector<SubspaceVariant> variants;
    for (const std::string& v : cfg.get_list_or("variants", {"pos", "neg", "negpos", "flat"})) {
      if (v == "pos") variants.push_back(SubspaceVariant::Pos);
      else if (v == "neg") variants.push_back(SubspaceVariant::Neg);
      else if (v == "negpos") variants.push_back(SubspaceVariant::NegPos);
      else if (v == "flat") variants.push_back(SubspaceVariant::Flat);
      else throw ConfigError("config: unknown variant '" + v + "'");
    }
    rows = run_accuracy_vs_d(model, data.train, data.test, sets, variants,
                             config_d_grid(cfg, cap));
  } else if (source == "svd") {
    std::vector<PerturbationRecord> records = load_perturbations(cfg.get("perturbations"));
    if (cfg.get_or("converged_only", "true") == "true") records = converged_only(std::move(records));
    const Subspace hi = svd_basis(records, SvdOrdering::Hi);
    rows = run_accuracy_vs_d_svd(model, data.train, data.test, hi, config_d_grid(cfg, hi.dim()));
  } else {
    throw ConfigError("config: source must be 'curvature' or 'svd'");
  }

  CsvWriter csv(inv.out_path(cfg.get_or("out_csv", "accuracy_vs_d.csv")).string(),
                {"source", "variant", "d", "m", "split", "accuracy"});
  for (const auto& r : rows) {
    csv.row({r.source, r.variant, static_cast<std::int64_t>(r.d), static_cast<std::int64_t>(r.m),
             r.split, r.accuracy});
  }
  csv.flush();
  inv.note_csv(csv);
}

void cmd_norm_fractions(Invocation& inv) {
  const Config& cfg = inv.cfg;
  // subspaces from SVD of a reference perturbation set
  std::vector<PerturbationRecord> basis_records = load_perturbations(cfg.get("perturbations"));
  if (cfg.get_or("converged_only", "true") == "true") {
    basis_records = converged_only(std::move(basis_records));
  }
  const Subspace hi = svd_basis(basis_records, SvdOrdering::Hi);
  const std::vector<int> d_grid = config_d_grid(cfg, hi.dim());
  std::vector<Subspace> subspaces;
  for (int d : d_grid) {
    if (d == 0) continue;
    const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(d), hi.dim());
    subspaces.push_back(prefix_subspace(hi, m, d));
    Subspace lo;
    lo.tag = "S_lo";
    lo.d_param = d;
    lo.shape = hi.shape;
    lo.basis.assign(hi.basis.end() - static_cast<long>(m), hi.basis.end());
    std::reverse(lo.basis.begin(), lo.basis.end());
    subspaces.push_back(std::move(lo));
  }

  std::vector<std::pair<std::string, std::vector<Tensor>>> methods;
  for (const std::string& method : {"deepfool", "fgsm", "uap", "saliency"}) {
    const std::string key = "pert_" + method;
    if (!cfg.has(key)) continue;
    std::vector<PerturbationRecord> records = load_perturbations(cfg.get(key));
    std::vector<Tensor> vectors;
    for (auto& r : records) {
      if (method == "deepfool" && !r.converged) continue;
      vectors.push_back(std::move(r.delta));
    }
    methods.emplace_back(method, std::move(vectors));
  }
  if (methods.empty()) {
    throw ConfigError("config: norm-fractions needs at least one pert_<method> input");
  }
  if (cfg.get_or("include_random", "true") == "true") {
    methods.emplace_back("random",
                         random_direction_set(hi.shape, methods.front().second.size(),
                                              static_cast<std::uint64_t>(cfg.get_int_or("seed", 1))));
  }
  const std::vector<NormFractionRow> rows = run_norm_fractions(methods, subspaces);
  CsvWriter csv(inv.out_path(cfg.get_or("out_csv", "norm_fractions.csv")).string(),
                {"method", "variant", "d", "m", "fraction", "excluded"});
  for (const auto& r : rows) {
    csv.row({r.method, r.variant, static_cast<std::int64_t>(r.d), static_cast<std::int64_t>(r.m),
             r.fraction, r.excluded});
  }
  csv.flush();
  inv.note_csv(csv);
}

void cmd_confined(Invocation& inv) {
  const Config& cfg = inv.cfg;
  LoadedData data = load_data(cfg);
  const Dataset& ds = pick_split(data, cfg, "test");
  Model model = load_model(cfg);
  const AttackConfig acfg = attack_config(cfg);

  std::vector<PerturbationRecord> records = load_perturbations(cfg.get("perturbations"));
  if (cfg.get_or("converged_only", "true") == "true") records = converged_only(std::move(records));

  const std::int64_t d_low = cfg.get_int_or("d_low", 0);
  std::unique_ptr<ResampleUnit> unit;
  std::unique_ptr<PreprocessedClassifier> preprocessed;
  const Classifier* target_model = &model;
  Subspace hi;
  if (d_low > 0) {
    const std::size_t side = ds.image_shape()[1];
    unit = std::make_unique<ResampleUnit>(static_cast<std::size_t>(d_low), side);
    hi = svd_basis_downsampled(records, *unit, SvdOrdering::Hi);
    preprocessed = std::make_unique<PreprocessedClassifier>(
        model, std::shared_ptr<const LinearOp>(unit.get(), [](const LinearOp*) {}));
    target_model = preprocessed.get();
  } else {
    hi = svd_basis(records, SvdOrdering::Hi);
  }

  const std::vector<int> d_grid = config_d_grid(cfg, hi.dim());
  CsvWriter csv(inv.out_path(cfg.get_or("out_csv", "confined.csv")).string(),
                {"ordering", "d", "m", "mean_confined_norm", "convergence_rate",
                 "mean_projected_image_norm", "converged", "total"});
  for (const std::string& ord : cfg.get_list_or("orderings", {"hi", "lo"})) {
    for (int d : d_grid) {
      if (d == 0) continue;
      const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(d), hi.dim());
      Subspace s;
      s.shape = hi.shape;
      s.d_param = d;
      if (ord == "hi") {
        s.tag = "S_hi";
        s.basis.assign(hi.basis.begin(), hi.basis.begin() + static_cast<long>(m));
      } else {
        s.tag = "S_lo";
        s.basis.assign(hi.basis.end() - static_cast<long>(m), hi.basis.end());
        std::reverse(s.basis.begin(), s.basis.end());
      }
      const ConfinedNormRow row = run_confined_norms(*target_model, ds, s, acfg);
      csv.row({row.ordering, static_cast<std::int64_t>(row.d), static_cast<std::int64_t>(row.m),
               row.mean_confined_norm, row.convergence_rate, row.mean_projected_image_norm,
               row.converged, row.total});
    }
  }
  csv.flush();
  inv.note_csv(csv);
}

void cmd_resample_table(Invocation& inv) {
  const Config& cfg = inv.cfg;
  LoadedData data = load_data(cfg);
  const Dataset& ds = pick_split(data, cfg, "test");
  Model model = load_model(cfg);
  const std::vector<PerturbationRecord> deepfools = load_perturbations(cfg.get("perturbations"));
  const std::size_t side = ds.image_shape()[1];
  std::vector<std::int64_t> default_dlow{static_cast<std::int64_t>(side)};
  for (std::int64_t d = static_cast<std::int64_t>(side) - 2; d >= 3; d -= 2) {
    default_dlow.push_back(d);
  }
  const std::vector<std::int64_t> d_lows = cfg.get_int_list_or("d_low_list", default_dlow);
  const std::vector<double> f_grid = cfg.get_double_list_or("f_grid", {1, 2, 3, 4, 5, 10});

  std::vector<std::string> header{"d_low", "mean_image_norm", "mean_pert_norm", "accuracy"};
  for (double f : f_grid) header.push_back("fooling_f" + csv_format_cell(f));
  CsvWriter csv(inv.out_path(cfg.get_or("out_csv", "resample_table.csv")).string(), header);
  for (std::int64_t d_low : d_lows) {
    const ResampleTableRow row =
        run_resampling_table_row(model, ds, deepfools, static_cast<int>(d_low), f_grid);
    std::vector<CsvCell> cells{static_cast<std::int64_t>(row.d_low), row.mean_image_norm,
                               row.mean_pert_norm, row.accuracy};
    for (double v : row.fooling) cells.push_back(v);
    csv.row(cells);
  }
  csv.flush();
  inv.note_csv(csv);
}

void cmd_visualize(Invocation& inv) {
  const Config& cfg = inv.cfg;
  const std::string path = cfg.get("directions");
  std::vector<Tensor> vectors;
  std::string stem = "direction";
  if (path.size() > 6 && path.substr(path.size() - 6) == ".cbsub") {
    Subspace s = load_subspace(path);
    vectors = s.basis;
    stem = "subspace_" + s.tag;
  } else {
    DirectionSet dirs = load_directions(path);
    vectors = dirs.basis;
    stem = "class" + std::to_string(dirs.target_class);
  }
  const std::string which = cfg.get_or("index", "0");
  std::vector<std::size_t> indices;
  if (which == "all") {
    for (std::size_t i = 0; i < vectors.size(); ++i) indices.push_back(i);
  } else {
    indices.push_back(static_cast<std::size_t>(std::stoul(which)));
  }
  for (std::size_t i : indices) {
    if (i >= vectors.size()) throw ConfigError("config: direction index out of range");
    const std::size_t channels = vectors[i].shape()[0];
    const std::string name =
        stem + "_dir" + std::to_string(i) + (channels == 1 ? ".pgm" : ".ppm");
    visualize_direction(vectors[i], inv.out_path(name).string());
    inv.note_output(name);
  }
}

using Handler = std::function<void(Invocation&)>;

const std::map<std::string, std::pair<const char*, Handler>>& handlers() {
  static const std::map<std::string, std::pair<const char*, Handler>> h = {
      {"train", {"Train a classifier and write a checkpoint plus a loss log", cmd_train}},
      {"attack", {"Generate perturbations (fgsm, deepfool, saliency, uap-*)", cmd_attack}},
      {"curvature", {"Boundary principal directions and curvatures per class", cmd_curvature}},
      {"svd-basis", {"SVD subspaces from stacked perturbations", cmd_svd_basis}},
      {"trace", {"Class-score statistics along a direction", cmd_trace}},
      {"acc-vs-d", {"Accuracy on projected images vs subspace dimensionality", cmd_acc_vs_d}},
      {"norm-fractions", {"Projected perturbation norm fractions per subspace", cmd_norm_fractions}},
      {"confined", {"Subspace-confined DeepFool norms", cmd_confined}},
      {"resample-table", {"Robustness-to-downsampling table", cmd_resample_table}},
      {"visualize-direction", {"Write directions as PGM/PPM images", cmd_visualize}},
  };
  return h;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"curvebench: decision-boundary curvature analysis toolkit"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(0, 1);

  struct SubState {
    std::string config_path;
    std::string out_dir = ".";
    int threads = 1;
    std::vector<std::string> overrides;
  };
  std::map<std::string, std::shared_ptr<SubState>> states;
  for (const auto& [name, info] : handlers()) {
    auto state = std::make_shared<SubState>();
    states[name] = state;
    CLI::App* sub = app.add_subcommand(name, info.first);
    sub->add_option("--config", state->config_path, "key = value config file");
    sub->add_option("--out", state->out_dir, "output directory (default: current)");
    sub->add_option("--threads", state->threads, "worker thread cap (1 = bit-reproducible)");
    sub->add_option("overrides", state->overrides, "key=value config overrides");
  }

  std::vector<const char*> argv;
  argv.push_back("curvebench");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const auto subs = app.get_subcommands();
  if (subs.empty()) {
    std::cout << app.help() << std::flush;
    return 0;
  }

  const std::string name = subs.front()->get_name();
  const SubState& state = *states.at(name);
  try {
    set_max_threads(state.threads);
    Invocation inv;
    inv.subcommand = name;
    if (!state.config_path.empty()) inv.cfg = Config::from_file(state.config_path);
    for (const std::string& ov : state.overrides) inv.cfg.set_override(ov);
    inv.out_dir = state.out_dir;
    fs::create_directories(inv.out_dir);
    handlers().at(name).second(inv);
    inv.write_manifest();
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 3;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace curvebench
