#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "vislearn/harness.hpp"
#include "vislearn/live_service.hpp"

namespace py = pybind11;
using namespace vislearn;

namespace {

// JSON crosses the boundary as text; the Python package decodes it.
std::vector<std::string> dump_all(const std::vector<nlohmann::json>& events) {
  std::vector<std::string> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.dump());
  return out;
}

py::dict object_dict(const VisualObject& o) {
  py::dict d;
  d["id"] = o.id;
  d["colour"] = o.colour_label;
  d["shape"] = o.shape_label;
  d["colour_features"] = std::vector<double>(o.colour_features.begin(), o.colour_features.end());
  d["shape_features"] = o.shape_features;
  return d;
}

py::dict summary_dict(const ConditionSummary& s) {
  py::dict d;
  d["condition"] = std::string(to_string(s.condition));
  d["runs"] = s.runs;
  d["initial_accuracy"] = s.initial_accuracy;
  d["final_accuracy_mean"] = s.final_accuracy_mean;
  d["final_accuracy_std"] = s.final_accuracy_std;
  d["final_joint_mean"] = s.final_joint_mean;
  d["total_cost_mean"] = s.total_cost_mean;
  d["total_cost_std"] = s.total_cost_std;
  d["delta_accuracy_mean"] = s.delta_accuracy_mean;
  d["r_perf"] = s.r_perf;
  d["penalties_mean"] = s.penalties_mean;
  return d;
}

ThresholdAction threshold_action(std::string_view name) {
  for (ThresholdAction a : kThresholdActions)
    if (to_string(a) == name) return a;
  throw Error("unknown threshold action: " + std::string(name));
}

}  // namespace

PYBIND11_MODULE(_vislearn, m) {
  m.doc() = "Native core of vislearn";

  // Translators run newest first, so ServiceError is matched before its base.
  // Owned by the module for the life of the process; never released.
  static PyObject* base_error = PyErr_NewException("vislearn._vislearn.VislearnError", PyExc_ValueError, nullptr);
  static PyObject* service_error = PyErr_NewException("vislearn._vislearn.ServiceError", base_error, nullptr);
  m.attr("VislearnError") = py::handle(base_error);
  m.attr("ServiceError") = py::handle(service_error);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ServiceError& e) {
      py::object err = py::reinterpret_borrow<py::object>(service_error)(e.what());
      err.attr("status") = e.status();
      PyErr_SetObject(service_error, err.ptr());
    } catch (const Error& e) {
      PyErr_SetString(base_error, e.what());
    }
  });

  m.def("status", [](double conf, double thd, bool provided) { return static_cast<int>(status(conf, thd, provided)); },
        py::arg("confidence"), py::arg("threshold"), py::arg("provided") = false);
  m.def("delta_acc_level", &delta_acc_level, py::arg("prev_acc"), py::arg("cur_acc"));
  m.def("threshold_reward", &threshold_reward, py::arg("prev_acc"), py::arg("cur_acc"), py::arg("k") = 100.0);
  m.def("apply_threshold_action",
        [](double thd, std::string_view action) { return apply_threshold_action(thd, threshold_action(action)); },
        py::arg("threshold"), py::arg("action"));
  m.def("r_perf", &r_perf, py::arg("delta_acc"), py::arg("total_cost"));
  m.def("derive_seed", &derive_seed, py::arg("master"), py::arg("stream"));

  m.def(
      "generate_dataset",
      [](double noise_sigma, std::size_t train_size, std::size_t test_size, std::uint64_t seed) {
        WorldConfig config;
        config.noise_sigma = noise_sigma;
        config.train_size = train_size;
        config.test_size = test_size;
        config.seed = seed;
        const Dataset data = generate_dataset(config);
        py::dict d;
        py::list train, test;
        for (const auto& o : data.train) train.append(object_dict(o));
        for (const auto& o : data.test) test.append(object_dict(o));
        d["train"] = train;
        d["test"] = test;
        return d;
      },
      py::arg("noise_sigma") = 0.08, py::arg("train_size") = 500, py::arg("test_size") = 100, py::arg("seed") = 1);

  py::class_<GroundingMap>(m, "GroundingMap")
      .def(py::init([](double learning_rate) {
             return GroundingMap(AttributeInventory::default_inventory(), kDefaultShapeBins,
                                 ClassifierConfig{learning_rate, 0.0});
           }),
           py::arg("learning_rate") = 0.1)
      .def("words", [](const GroundingMap& g) {
        std::vector<std::string> out;
        for (const auto& c : g.classifiers()) out.push_back(c.word());
        return out;
      })
      .def("weights", [](const GroundingMap& g, const std::string& word) {
        auto w = g.classifier(word).weights();
        return std::vector<double>(w.begin(), w.end());
      })
      .def("predict_proba",
           [](const GroundingMap& g, const std::string& word, const std::vector<double>& x) {
             return g.classifier(word).predict_proba(x);
           })
      .def("best_prediction",
           [](const GroundingMap& g, const std::string& category, const std::vector<double>& x) {
             auto c = parse_category(category);
             if (!c) throw Error("unknown category: " + category);
             Prediction p = g.best_prediction(*c, x);
             return py::make_tuple(p.word, p.confidence);
           },
           py::arg("category"), py::arg("features"))
      .def("learn_from_label",
           [](GroundingMap& g, std::vector<double> colour, std::vector<double> shape, const std::string& word) {
             VisualObject o;
             if (colour.size() != kColourDim) throw Error("colour features need 3 values");
             std::copy(colour.begin(), colour.end(), o.colour_features.begin());
             o.shape_features = std::move(shape);
             g.learn_from_label(o, word);
           },
           py::arg("colour_features"), py::arg("shape_features"), py::arg("word"))
      .def("dumps", [](const GroundingMap& g) {
        std::ostringstream out;
        g.save(out);
        return out.str();
      })
      .def_static("loads", [](const std::string& text) {
        std::istringstream in(text);
        return GroundingMap::load(in);
      })
      .def("__eq__", [](const GroundingMap& a, const GroundingMap& b) { return a == b; });

  m.def("config_from_json", [](const std::string& text) { return ExperimentConfig::from_json_text(text).to_json_text(); },
        py::arg("text"), "Validates a config and returns its canonical JSON.");

  m.def(
      "run_experiment",
      [](const std::string& config_json, const std::string& out_dir) {
        const auto config = ExperimentConfig::from_json_text(config_json);
        ExperimentResult result;
        {
          py::gil_scoped_release release;
          result = run_experiment(config);
          if (!out_dir.empty()) write_run_directory(out_dir, config, result);
        }
        py::list out;
        for (const auto& s : result.summary) out.append(summary_dict(s));
        return out;
      },
      py::arg("config_json") = "{}", py::arg("out_dir") = "");

  py::class_<SessionManager>(m, "SessionManager")
      .def(py::init([](const std::string& state_dir, const std::string& policy_dir) {
             ServiceConfig config;
             config.state_dir = state_dir;
             config.policy_dir = policy_dir;
             return std::make_unique<SessionManager>(std::move(config));
           }),
           py::arg("state_dir") = "", py::arg("policy_dir") = "")
      .def("create", [](SessionManager& s, const std::string& policy, std::uint64_t seed) {
        return s.create(policy, seed).dump();
      })
      .def("state", [](const SessionManager& s, const std::string& id) { return s.state(id).dump(); })
      .def("turn", [](SessionManager& s, const std::string& id, const std::string& text) {
        return dump_all(s.turn(id, text));
      })
      .def("advance", [](SessionManager& s, const std::string& id) { return dump_all(s.advance(id)); })
      .def("end", [](SessionManager& s, const std::string& id) { return dump_all(s.end(id)); })
      .def("total_cost", &SessionManager::total_cost)
      .def("ids", &SessionManager::ids);
}
