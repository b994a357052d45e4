// Copyright 2026 The unlearn-lens Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "json.hpp"
#include "unlearn_lens/config.hpp"
#include "unlearn_lens/diagnostics.hpp"
#include "unlearn_lens/dump.hpp"
#include "unlearn_lens/regimes.hpp"
#include "unlearn_lens/report.hpp"

namespace py = pybind11;
using namespace unlearn_lens;
using nlohmann::json;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const F64Array& a) {
  if (a.ndim() != 2) throw ValidationError("expected a 2-D array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

py::dict dump_to_dict(const ActivationDump& d) {
  py::list layers;
  for (const auto& l : d.layers) {
    F32Array a({static_cast<py::ssize_t>(l.rows), static_cast<py::ssize_t>(l.cols)});
    std::copy(l.values.begin(), l.values.end(), a.mutable_data());
    py::dict e;
    e["index"] = l.index;
    e["values"] = a;
    layers.append(e);
  }
  py::dict out;
  out["version"] = d.version;
  out["label"] = d.label;
  out["source"] = to_string(d.source);
  out["layers"] = layers;
  return out;
}

std::string compare_json(const ActivationDump& a, const ActivationDump& b) {
  if (a.layers.size() != b.layers.size()) throw ValidationError("dumps differ in layer count");
  const StateComparison cmp = compare_activations(a.matrices(), b.matrices());
  json layers = json::array();
  for (const auto& l : cmp.layers)
    layers.push_back({{"layer", l.layer},
                      {"pca_similarity", l.pca_similarity},
                      {"pca_similarity_abs", l.pca_similarity_abs},
                      {"shift_pc1", l.shift_pc1},
                      {"shift_pc2", l.shift_pc2},
                      {"cka", l.cka},
                      {"eigengap", l.eigengap},
                      {"degenerate_gap", l.degenerate_gap}});
  return json{{"orig", a.label},
              {"upd", b.label},
              {"probe_source", to_string(a.source)},
              {"layers", layers},
              {"mean_pca_distance", cmp.mean_pca_distance}}
      .dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of unlearn-lens.";

  static py::exception<ValidationError> validation_error(m, "ValidationError", PyExc_ValueError);
  static py::exception<NumericalError> numerical_error(m, "NumericalError", PyExc_ArithmeticError);
  static py::exception<DumpError> dump_error(m, "DumpError", validation_error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const DumpError& e) {
      py::object err = py::reinterpret_borrow<py::object>(dump_error.ptr())(e.what());
      err.attr("code") = to_string(e.code());
      PyErr_SetObject(dump_error.ptr(), err.ptr());
    } catch (const ValidationError& e) {
      py::set_error(validation_error, e.what());
    } catch (const NumericalError& e) {
      py::set_error(numerical_error, e.what());
    } catch (const json::exception& e) {
      py::set_error(validation_error, e.what());
    }
  });

  m.def("preset_names", &preset_names);
  m.def(
      "config_json", [](const std::string& text) { return config_to_json(config_from_json(json::parse(text))).dump(); },
      py::arg("config_json"), "Validate a config document and return its full echo.");

  m.def(
      "run_pipeline",
      [](const std::string& config_text, std::uint64_t seed) {
        const ExperimentConfig c = config_from_json(json::parse(config_text));
        ForgettingRun run;
        {
          py::gil_scoped_release release;
          run = unlearn_lens::run_pipeline(c, seed);
        }
        py::dict out;
        out["metrics_csv"] = metrics_csv(c, {run});
        out["diagnostics_json"] = diagnostics_json(c, {run}).dump();
        out["verdict"] = run.verdict.line();
        return out;
      },
      py::arg("config_json"), py::arg("seed"));

  m.def(
      "classify",
      [](std::array<double, 3> forget, std::array<double, 3> retain, double catastrophic_drop,
         double irreversible_residual, double near_zero_band) {
        RegimeThresholds t{catastrophic_drop, irreversible_residual, near_zero_band};
        const RegimeVerdict v = unlearn_lens::classify(compute_deltas(PhaseAccuracies{forget[0], forget[1], forget[2]}),
                                                       compute_deltas(PhaseAccuracies{retain[0], retain[1], retain[2]}), t);
        py::dict out;
        out["label"] = v.label();
        out["line"] = v.line();
        out["dU_f"] = v.du_forget;
        out["dU_r"] = v.du_retain;
        out["dR_f"] = v.dr_forget;
        out["dR_r"] = v.dr_retain;
        return out;
      },
      py::arg("forget"), py::arg("retain"), py::arg("catastrophic_drop") = 20.0,
      py::arg("irreversible_residual") = 10.0, py::arg("near_zero_band") = 3.0);

  m.def(
      "linear_cka", [](const F64Array& x, const F64Array& y) { return unlearn_lens::linear_cka(to_matrix(x), to_matrix(y)); },
      py::arg("x"), py::arg("y"));

  m.def(
      "read_dump", [](const std::string& path) { return dump_to_dict(unlearn_lens::read_dump(path)); }, py::arg("path"));
  m.def(
      "write_dump",
      [](const std::string& path, const std::string& label, const std::string& source, const std::vector<F64Array>& layers) {
        std::vector<Matrix> mats;
        for (const auto& a : layers) mats.push_back(to_matrix(a));
        unlearn_lens::write_dump(make_dump(label, domain_from_string(source), mats), path);
      },
      py::arg("path"), py::arg("label"), py::arg("source"), py::arg("layers"));
  m.def(
      "compare_dumps",
      [](const std::string& orig, const std::string& upd) {
        return compare_json(unlearn_lens::read_dump(orig), unlearn_lens::read_dump(upd));
      },
      py::arg("orig"), py::arg("upd"));
}
