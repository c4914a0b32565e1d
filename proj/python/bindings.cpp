#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "child/eval.hpp"
#include "child/run_config.hpp"
#include "child/spectral.hpp"
#include "child/training.hpp"

namespace py = pybind11;
using namespace child;

namespace {

py::array_t<double> observations_array(const GroundTruthSeries& s) {
  py::array_t<double> out({s.num_sequences(), s.seq_length(), s.obs_dim()});
  std::copy(s.x_data().begin(), s.x_data().end(), out.mutable_data());
  return out;
}

py::list latent_arrays(const GroundTruthSeries& s) {
  py::list layers;
  for (int l = 1; l <= s.num_layers(); ++l) {
    py::array_t<double> z({s.num_sequences(), s.seq_length(), s.layer_dim(l)});
    auto v = z.mutable_unchecked<3>();
    for (int n = 0; n < s.num_sequences(); ++n)
      for (int t = 0; t < s.seq_length(); ++t)
        for (int i = 0; i < s.layer_dim(l); ++i) v(n, t, i) = s.z(n, t, l, i);
    layers.append(z);
  }
  return layers;
}

RunConfig preset_config(const std::string& preset, std::uint64_t seed, int num_sequences, int seq_length) {
  RunConfig rc = RunConfig::preset(preset, seed);
  rc.data.num_sequences = num_sequences;
  rc.data.seq_length = seq_length;
  rc.validate();
  return rc;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hierarchical temporal latent-variable toolkit";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("preset_names", &preset_names);

  m.def(
      "run_config_preset",
      [](const std::string& preset, std::uint64_t seed) { return RunConfig::preset(preset, seed).to_json().dump(); },
      py::arg("preset"), py::arg("seed") = 0, "Run configuration of a preset as a JSON string.");

  m.def(
      "generate",
      [](const std::string& preset, std::uint64_t seed, int num_sequences, int seq_length) {
        const RunConfig rc = preset_config(preset, seed, num_sequences, seq_length);
        const GroundTruthSeries s =
            sample_series(build_process(rc.process), rc.data.num_sequences, rc.seq_length(), rc.sample_seed());
        py::dict out;
        out["x"] = observations_array(s);
        out["z"] = latent_arrays(s);
        out["fingerprint"] = s.fingerprint();
        return out;
      },
      py::arg("preset"), py::arg("seed") = 0, py::arg("num_sequences") = 100, py::arg("seq_length") = 0,
      "Sample a dataset. Returns {'x': [N, T, obs], 'z': per-layer [N, T, n_l] bottom-first, 'fingerprint'}.");

  m.def(
      "compute_mcc",
      [](const Mat& z_true, const Mat& z_est, const std::string& correlation) {
        const MccResult r = compute_mcc(z_true, z_est, correlation_from_string(correlation));
        return py::make_tuple(r.mcc, r.permutation);
      },
      py::arg("z_true"), py::arg("z_est"), py::arg("correlation") = "pearson",
      "Mean correlation coefficient and the estimated-to-true permutation.");

  m.def("correlational_score", &correlational_score, py::arg("real"), py::arg("generated"));

  m.def(
      "spectral_sweep",
      [](const std::string& preset, const std::vector<int>& windows) {
        return spectral::minimal_window_sweep(spectral::preset_chain(preset), windows).to_json().dump();
      },
      py::arg("preset") = "two-layer-min-window", py::arg("windows") = std::vector<int>{1, 2, 3},
      "Minimal-window sweep as a JSON string.");

  m.def(
      "train",
      [](const std::string& preset, std::uint64_t seed, int num_sequences, int epochs, const std::string& variant) {
        RunConfig rc = preset_config(preset, seed, num_sequences, 0);
        rc.train.epochs = epochs;
        rc.train.variant = variant_from_string(variant);
        const GroundTruthSeries s =
            sample_series(build_process(rc.process), rc.data.num_sequences, rc.seq_length(), rc.sample_seed());
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(s, rc.model, rc.train);
        }
        py::list history;
        for (const auto& e : r.state.history) history.append(e.to_json().dump());
        py::dict out;
        out["history"] = history;
        out["mcc"] = posterior_mcc(*r.state.model, s);
        out["diverged"] = r.diverged;
        return out;
      },
      py::arg("preset") = "B", py::arg("seed") = 0, py::arg("num_sequences") = 200, py::arg("epochs") = 1,
      py::arg("variant") = "full", "Train on a freshly sampled preset dataset; metrics come back as JSON lines.");
}
