#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "curvebench/attacks.hpp"
#include "curvebench/checkpoint.hpp"
#include "curvebench/cli.hpp"
#include "curvebench/curvature.hpp"
#include "curvebench/dataset.hpp"
#include "curvebench/experiments.hpp"
#include "curvebench/subspace.hpp"
#include "curvebench/threading.hpp"
#include "curvebench/train.hpp"

namespace py = pybind11;
using namespace curvebench;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  Shape shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) {
    shape.push_back(static_cast<std::size_t>(a.shape(i)));
  }
  std::vector<double> data(a.data(), a.data() + a.size());
  return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape;
  for (std::size_t e : t.shape()) shape.push_back(static_cast<py::ssize_t>(e));
  py::array_t<double> out(shape);
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

AttackConfig attack_config_from_kwargs(int max_iterations, double overshoot, double boundary_tol,
                                       std::uint64_t seed) {
  AttackConfig cfg;
  cfg.max_iterations = max_iterations;
  cfg.overshoot = overshoot;
  cfg.boundary_tol = boundary_tol;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Decision-boundary curvature analysis for small image classifiers";

  m.def("set_max_threads", &set_max_threads, py::arg("n"));

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("size", &Dataset::size)
      .def_readonly("labels", &Dataset::labels)
      .def_readonly("class_count", &Dataset::class_count)
      .def_property_readonly("mean_image",
                             [](const Dataset& d) { return array_from_tensor(d.mean_image); })
      .def("image", [](const Dataset& d, std::size_t n) { return array_from_tensor(d.images.at(n)); });

  m.def("synth_blobs", &synth_blobs, py::arg("class_count"), py::arg("per_class"), py::arg("side"),
        py::arg("seed"));
  m.def("load_idx", &load_idx, py::arg("images_path"), py::arg("labels_path"));
  m.def("mean_normalize", &mean_normalize, py::arg("raw"));
  m.def("split_per_class", &split_per_class, py::arg("raw"), py::arg("train_per_class"));
  m.def(
      "apply_mean",
      [](const Dataset& raw, const py::array_t<double>& mean) {
        return apply_mean(raw, tensor_from_array(mean));
      },
      py::arg("raw"), py::arg("mean"));

  py::class_<Model>(m, "Model")
      .def_property_readonly("class_count", &Model::class_count)
      .def_property_readonly("input_shape", [](const Model& mo) { return mo.input_shape(); })
      .def_property_readonly("arch", &Model::arch_name)
      .def("logits",
           [](const Model& mo, const py::array_t<double>& image) {
             return array_from_tensor(mo.logits(tensor_from_array(image)));
           })
      .def("predict",
           [](const Model& mo, const py::array_t<double>& image) {
             return predicted_class(mo, tensor_from_array(image));
           })
      .def("descriptor", &Model::descriptor);

  m.def(
      "make_model",
      [](const std::string& arch, const std::vector<std::size_t>& input_shape, int classes,
         std::uint64_t seed) { return Model::make(arch, input_shape, classes, seed); },
      py::arg("arch"), py::arg("input_shape"), py::arg("classes"), py::arg("seed") = 1);
  m.def("save_checkpoint", &save_checkpoint, py::arg("model"), py::arg("path"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  m.def(
      "train",
      [](Model& model, const Dataset& train_set, const Dataset* test_set, double lr,
         double momentum, double weight_decay, int batch_size, int epochs, std::uint64_t seed) {
        TrainConfig cfg;
        cfg.learning_rate = lr;
        cfg.momentum = momentum;
        cfg.weight_decay = weight_decay;
        cfg.batch_size = batch_size;
        cfg.epochs = epochs;
        cfg.seed = seed;
        std::vector<EpochStats> log = train(model, train_set, test_set, cfg);
        py::list out;
        for (const EpochStats& e : log) {
          py::dict row;
          row["epoch"] = e.epoch;
          row["loss"] = e.loss;
          row["train_acc"] = e.train_accuracy;
          if (e.test_accuracy >= 0) row["test_acc"] = e.test_accuracy;
          out.append(row);
        }
        return out;
      },
      py::arg("model"), py::arg("train_set"), py::arg("test_set") = nullptr, py::arg("lr") = 0.05,
      py::arg("momentum") = 0.9, py::arg("weight_decay") = 0.0, py::arg("batch_size") = 16,
      py::arg("epochs") = 20, py::arg("seed") = 1);

  m.def(
      "accuracy",
      [](const Model& model, const Dataset& ds) { return accuracy(model, ds); },
      py::arg("model"), py::arg("dataset"));

  py::class_<PerturbationRecord>(m, "PerturbationRecord")
      .def_property_readonly("delta",
                             [](const PerturbationRecord& r) { return array_from_tensor(r.delta); })
      .def_readonly("source_label", &PerturbationRecord::source_label)
      .def_readonly("end_label", &PerturbationRecord::end_label)
      .def_readonly("iterations", &PerturbationRecord::iterations)
      .def_readonly("l2_norm", &PerturbationRecord::l2_norm)
      .def_readonly("method", &PerturbationRecord::method)
      .def_readonly("converged", &PerturbationRecord::converged);

  m.def(
      "deepfool",
      [](const Model& model, const py::array_t<double>& image, int max_iterations,
         double overshoot, double boundary_tol, std::uint64_t seed) {
        return deepfool(model, tensor_from_array(image),
                        attack_config_from_kwargs(max_iterations, overshoot, boundary_tol, seed));
      },
      py::arg("model"), py::arg("image"), py::arg("max_iterations") = 50,
      py::arg("overshoot") = 0.02, py::arg("boundary_tol") = 1e-4, py::arg("seed") = 1);
  m.def(
      "fgsm",
      [](const Model& model, const py::array_t<double>& image, int label, double epsilon) {
        return fgsm(model, tensor_from_array(image), label, epsilon);
      },
      py::arg("model"), py::arg("image"), py::arg("label"), py::arg("epsilon"));
  m.def(
      "saliency",
      [](const Model& model, const py::array_t<double>& image) {
        return array_from_tensor(saliency(model, tensor_from_array(image)));
      },
      py::arg("model"), py::arg("image"));

  py::class_<DirectionSet>(m, "DirectionSet")
      .def_readonly("target_class", &DirectionSet::target_class)
      .def_readonly("scores", &DirectionSet::scores)
      .def_readonly("k_top", &DirectionSet::k_top)
      .def_readonly("k_bottom", &DirectionSet::k_bottom)
      .def_readonly("accept_count", &DirectionSet::accept_count)
      .def_property_readonly("count", &DirectionSet::count)
      .def("direction",
           [](const DirectionSet& d, std::size_t i) { return array_from_tensor(d.basis.at(i)); });

  m.def(
      "principal_curvatures",
      [](const Model& model, const Dataset& ds, int target_class, double fd_step, int k_top,
         int k_bottom, int max_iterations, double boundary_tol, std::uint64_t seed) {
        CurvatureConfig cfg;
        cfg.fd_step = fd_step;
        cfg.k_top = k_top;
        cfg.k_bottom = k_bottom;
        cfg.attack.max_iterations = max_iterations;
        cfg.attack.boundary_tol = boundary_tol;
        cfg.seed = seed;
        return principal_curvatures(model, ds, target_class, cfg);
      },
      py::arg("model"), py::arg("dataset"), py::arg("target_class"), py::arg("fd_step") = 1e-2,
      py::arg("k_top") = 0, py::arg("k_bottom") = 0, py::arg("max_iterations") = 50,
      py::arg("boundary_tol") = 1e-4, py::arg("seed") = 1);

  py::class_<Subspace>(m, "Subspace")
      .def_readonly("tag", &Subspace::tag)
      .def_readonly("d_param", &Subspace::d_param)
      .def_readonly("scores", &Subspace::scores)
      .def_property_readonly("dim", &Subspace::dim)
      .def("vector",
           [](const Subspace& s, std::size_t i) { return array_from_tensor(s.basis.at(i)); });

  m.def(
      "select_per_class",
      [](const std::vector<DirectionSet>& sets, const std::string& variant, int d) {
        SubspaceVariant v;
        if (variant == "pos") v = SubspaceVariant::Pos;
        else if (variant == "neg") v = SubspaceVariant::Neg;
        else if (variant == "negpos") v = SubspaceVariant::NegPos;
        else if (variant == "flat") v = SubspaceVariant::Flat;
        else throw std::invalid_argument("variant must be pos, neg, negpos or flat");
        return select_per_class(sets, v, d);
      },
      py::arg("direction_sets"), py::arg("variant"), py::arg("d"));
  m.def(
      "svd_basis",
      [](const std::vector<PerturbationRecord>& records, const std::string& ordering) {
        return svd_basis(records, ordering == "lo" ? SvdOrdering::Lo : SvdOrdering::Hi);
      },
      py::arg("perturbations"), py::arg("ordering") = "hi");
  m.def(
      "project",
      [](const Subspace& s, const py::array_t<double>& x) {
        return array_from_tensor(project(s, tensor_from_array(x)));
      },
      py::arg("subspace"), py::arg("x"));
  m.def(
      "norm_fraction",
      [](const Subspace& s, const std::vector<py::array_t<double>>& vectors) {
        std::vector<Tensor> tensors;
        tensors.reserve(vectors.size());
        for (const auto& v : vectors) tensors.push_back(tensor_from_array(v));
        return norm_fraction(s, tensors);
      },
      py::arg("subspace"), py::arg("vectors"));

  m.def(
      "class_score_along",
      [](const Model& model, const py::array_t<double>& image, const py::array_t<double>& direction,
         int target_class, const std::vector<double>& s_grid) {
        return class_score_along(model, tensor_from_array(image), tensor_from_array(direction),
                                 target_class, s_grid);
      },
      py::arg("model"), py::arg("image"), py::arg("direction"), py::arg("target_class"),
      py::arg("s_grid"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) { return run_cli(args); },
      py::arg("args"));
}
