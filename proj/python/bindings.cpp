#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "lsem/attention.hpp"
#include "lsem/cli.hpp"
#include "lsem/correlation.hpp"
#include "lsem/evaluation.hpp"
#include "lsem/training.hpp"

namespace py = pybind11;
using namespace lsem;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-d array");
  return std::vector<double>(a.data(), a.data() + a.shape(0));
}

std::optional<Matrix> optional_matrix(const std::optional<Array>& a) {
  if (!a) return std::nullopt;
  return to_matrix(*a);
}

py::dict metrics_dict(const MetricReport& r) {
  py::dict d;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["f1"] = r.f1;
  d["tp"] = r.tp;
  d["fp"] = r.fp;
  d["fn"] = r.fn;
  return d;
}

Inference parse_inference(const std::string& name) {
  if (name == "auto") return Inference::automatic;
  if (name == "correlated") return Inference::correlated;
  if (name == "independent") return Inference::independent;
  throw std::invalid_argument("inference must be auto, correlated or independent");
}

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json py_to_json(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Label-embedding attention with a label correlation head";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ModelError>(m, "ModelError", PyExc_RuntimeError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  std::vector<std::string> labels(LabelScheme::names.begin(), LabelScheme::names.end());
  m.attr("LABELS") = labels;

  // Metrics

  m.def("micro_prf", [](const std::vector<LabelVector>& gold, const std::vector<LabelVector>& pred) {
    return metrics_dict(micro_prf(gold, pred));
  }, py::arg("gold"), py::arg("pred"));

  m.def("threshold_sweep",
        [](const std::vector<LabelVector>& gold, const std::vector<std::vector<double>>& scores,
           const std::vector<double>& grid) {
          const auto best = threshold_sweep(gold, scores, grid);
          py::dict d = metrics_dict(best.report);
          d["threshold"] = best.threshold;
          return d;
        },
        py::arg("gold"), py::arg("scores"), py::arg("grid"));

  m.def("empirical_correlations", [](const std::vector<LabelVector>& labels) {
    std::vector<std::size_t> constant;
    const Matrix rho = empirical_correlations(labels, &constant);
    return py::make_tuple(to_array(rho), constant);
  }, py::arg("labels"), "Returns (matrix, constant_column_indices).");

  m.def("randomization_test",
        [](const std::vector<LabelVector>& a, const std::vector<LabelVector>& b,
           const std::vector<LabelVector>& gold, std::size_t permutations, std::uint64_t seed,
           std::size_t threads) {
          SignificanceResult r;
          {
            py::gil_scoped_release release;
            r = randomization_test(a, b, gold, permutations, seed, threads);
          }
          py::dict d;
          d["observed"] = r.observed;
          d["f1_a"] = r.f1_a;
          d["f1_b"] = r.f1_b;
          d["permutations"] = r.permutations;
          d["at_least_as_extreme"] = r.at_least_as_extreme;
          d["p_value"] = r.p_value;
          return d;
        },
        py::arg("pred_a"), py::arg("pred_b"), py::arg("gold"), py::arg("permutations") = 100000,
        py::arg("seed") = 13, py::arg("threads") = 1);

  // Correlation head

  m.def("correlate_logits", [](const Array& z, const Array& g) {
    return correlate_logits(to_vector(z), to_matrix(g));
  }, py::arg("logits"), py::arg("correlation"));
  m.def("soft_targets", [](const Array& y, const Array& g) {
    return soft_targets(to_vector(y), to_matrix(g));
  }, py::arg("labels"), py::arg("correlation"));
  m.def("bce", [](const Array& e, const Array& t) { return bce(to_vector(e), to_vector(t)); },
        py::arg("scores"), py::arg("targets"));
  m.def("total_loss", [](const Array& e, const Array& y, const Array& g, double lambda) {
    return total_loss(to_vector(e), to_vector(y), to_matrix(g), lambda);
  }, py::arg("scores"), py::arg("labels"), py::arg("correlation"), py::arg("lambda_corr"));
  m.def("reg_loss", [](const std::vector<std::vector<double>>& scores, const Array& g) {
    return reg_loss(scores, to_matrix(g));
  }, py::arg("batch_scores"), py::arg("correlation"));

  m.def("supervised_head",
        [](const Array& z, const Array& y, const std::optional<Array>& g, double lambda,
           const std::optional<Array>& target) {
          const auto gm = optional_matrix(g), tm = optional_matrix(target);
          const auto h = supervised_head(to_vector(z), to_vector(y), gm ? &*gm : nullptr, lambda, tm ? &*tm : nullptr);
          py::dict d;
          d["loss"] = h.loss;
          d["scores"] = h.scores;
          d["grad_logits"] = h.logits;
          d["grad_correlation"] = h.correlation.empty() ? py::object(py::none()) : py::object(to_array(h.correlation));
          return d;
        },
        py::arg("logits"), py::arg("labels"), py::arg("correlation") = py::none(), py::arg("lambda_corr") = 1.0,
        py::arg("target_correlation") = py::none());

  // Attention

  m.def("compatibility", [](const Array& label_emb, const Array& states) {
    return to_array(compatibility(to_matrix(label_emb), to_matrix(states)));
  }, py::arg("labels"), py::arg("states"));
  m.def("softmax", [](const Array& u) { return softmax(to_vector(u)); }, py::arg("scores"));
  m.def("attend",
        [](const Array& compat, const Array& states, std::size_t window) {
          const auto r = attend(to_matrix(compat), to_matrix(states), window);
          py::dict d;
          d["scores"] = r.scores;
          d["best_label"] = r.best_label;
          d["weights"] = r.weights;
          d["representation"] = r.representation;
          return d;
        },
        py::arg("compat"), py::arg("states"), py::arg("window") = 1);

  // Data

  m.def("gen_synthetic",
        [](std::size_t n, std::uint64_t seed, const std::optional<Array>& corr, std::size_t vocab_size,
           std::size_t sentence_len, double signal) {
          SyntheticSpec spec;
          spec.n = n;
          if (corr) spec.target_corr = to_matrix(*corr);
          spec.vocab_size = vocab_size;
          spec.sentence_len = sentence_len;
          spec.signal_strength = signal;
          py::list out;
          for (const auto& inst : gen_synthetic(spec, seed)) out.append(json_to_py(instance_to_json(inst)));
          return out;
        },
        py::arg("n"), py::arg("seed"), py::arg("target_corr") = py::none(), py::arg("vocab_size") = 50,
        py::arg("sentence_len") = 10, py::arg("signal") = 0.7,
        "Synthetic instances as JSON-compatible dicts.");

  // Models

  py::class_<Model>(m, "Model")
      .def_static("load", &load_model, py::arg("directory"))
      .def_property_readonly("config", [](const Model& model) { return json_to_py(config_to_json(model.config())); })
      .def_property_readonly("correlation", [](const Model& model) -> py::object {
        if (!model.params().has_correlation()) return py::none();
        return to_array(model.params().correlation);
      })
      .def("save", [](const Model& model, const std::filesystem::path& dir) { save_model(model, dir); },
           py::arg("directory"))
      .def("predict",
           [](const Model& model, const py::object& instance, const std::string& inference,
              std::optional<double> threshold) {
             const Instance inst = instance_from_json(py_to_json(instance), 1);
             const Inference mode = parse_inference(inference);
             const Prediction p = threshold ? model.predict(inst, mode, *threshold) : model.predict(inst, mode);
             py::dict d;
             d["logits"] = p.logits;
             d["scores"] = p.scores;
             d["labels"] = label_names(p.labels);
             return d;
           },
           py::arg("instance"), py::arg("inference") = "auto", py::arg("threshold") = py::none());

  m.def("train",
        [](const py::object& config, const py::list& train, const std::optional<py::list>& unlabeled) {
          std::vector<Instance> data, pool;
          std::size_t line = 1;
          for (const auto& item : train) data.push_back(instance_from_json(py_to_json(py::reinterpret_borrow<py::object>(item)), line++));
          if (unlabeled) {
            line = 1;
            for (const auto& item : *unlabeled) {
              Instance inst = instance_from_json(py_to_json(py::reinterpret_borrow<py::object>(item)), line++);
              inst.labels.reset();
              pool.push_back(std::move(inst));
            }
          }
          const ModelConfig cfg = config_from_json(py_to_json(config));
          py::gil_scoped_release release;
          return train_model(cfg, data, nullptr, unlabeled ? &pool : nullptr).model;
        },
        py::arg("config"), py::arg("train"), py::arg("unlabeled") = py::none(),
        "Trains on JSON-compatible instance dicts and returns a Model.");

  // CLI

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs the command line tool in-process; returns (exit_code, stdout, stderr).");
}
