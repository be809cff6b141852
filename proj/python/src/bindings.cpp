#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sketchtomo/harness.hpp"

namespace py = pybind11;
using namespace sketchtomo;

namespace {

PauliSum observable(const std::string& label) { return PauliSum{PauliString::parse(label)}; }

ExperimentConfig config(const std::string& text) { return config_from_json(json::parse(text)); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sketch tomography of matrix product states from classical shadows.";

  py::class_<MPS>(m, "MPS")
      .def_property_readonly("n", &MPS::size)
      .def_property_readonly("bonds", &MPS::bonds)
      .def("norm_squared", &MPS::norm_squared)
      .def("statevector", &mps_to_statevector)
      .def("expectation", [](const MPS& psi, const std::string& label) { return mps_expectation(psi, observable(label)); },
           py::arg("label"))
      .def("reduced_density", &mps_reduced_density, py::arg("sites"))
      .def("to_json", [](const MPS& psi) { return mps_to_json(psi).dump(); })
      .def_static("from_json", [](const std::string& s) { return state_from_json(json::parse(s)); });

  py::class_<TTCoeff>(m, "TTCoeff")
      .def_property_readonly("n", &TTCoeff::size)
      .def_property_readonly("ranks", &TTCoeff::ranks)
      .def("entry", py::overload_cast<const TTCoeff&, const std::vector<int>&>(&tt_entry), py::arg("indices"))
      .def("expectation", [](const TTCoeff& c, const std::string& label) { return tt_pauli_expectation(c, observable(label)); },
           py::arg("label"))
      .def("trace", &tt_trace)
      .def("norm", &tt_norm)
      .def("renyi2", &tt_renyi2, py::arg("subsystem"))
      .def("density", &tt_to_density)
      .def("to_json", [](const TTCoeff& c) { return tt_to_json(c).dump(); })
      .def_static("from_json", [](const std::string& s) { return tt_from_json(json::parse(s)); });

  py::class_<ShadowBatch>(m, "ShadowBatch")
      .def_property_readonly("n", &ShadowBatch::n)
      .def_property_readonly("count", &ShadowBatch::count)
      .def_property_readonly("w_groups", &ShadowBatch::w_groups)
      .def_property_readonly("seed", &ShadowBatch::seed)
      .def("records",
           [](const ShadowBatch& b) {
             py::array_t<std::uint8_t> out({b.count(), static_cast<std::size_t>(b.n())});
             std::copy(b.records().begin(), b.records().end(), out.mutable_data());
             return out;
           })
      .def("to_bytes",
           [](const ShadowBatch& b) {
             const auto v = encode_shadow(b);
             return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
           })
      .def_static("from_bytes", [](const py::bytes& data) {
        const std::string s = data;
        return decode_shadow(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
      });

  m.def("random_mps", [](int n, int bond, std::uint64_t seed) {
    MPS psi = random_mps(n, bond, seed);
    psi.normalize();
    return psi;
  }, py::arg("n"), py::arg("bond"), py::arg("seed"));
  m.def("statevector_to_mps", &statevector_to_mps, py::arg("vector"), py::arg("max_bond"), py::arg("tol") = 1e-12);
  m.def("ground_state", [](const std::string& model, int n, double J, double h, bool periodic) {
    ModelConfig mc;
    mc.type = model;
    mc.n = n;
    mc.J = J;
    mc.h = h;
    mc.periodic = periodic;
    const auto st = make_model_state(mc);
    return py::make_tuple(st.psi, st.energy ? py::cast(*st.energy) : py::none());
  }, py::arg("model"), py::arg("n"), py::arg("J") = 1.0, py::arg("h") = 1.0, py::arg("periodic") = false);
  m.def("mps_to_tt_coeff", &mps_to_tt_coeff, py::arg("psi"));
  m.def("tt_frobenius_distance", &tt_frobenius_distance);

  m.def("sample_shadows", &sample_shadows, py::arg("psi"), py::arg("count"), py::arg("w_groups") = 1, py::arg("seed") = 0,
        py::arg("workers") = 1, py::call_guard<py::gil_scoped_release>());
  m.def("shadow_estimate", [](const ShadowBatch& b, const std::string& label, bool median_of_means) {
    return shadow_pauli_estimate(TraceTable(b), PauliString::parse(label), median_of_means);
  }, py::arg("batch"), py::arg("label"), py::arg("median_of_means") = true);

  auto opts = [](const std::optional<std::vector<std::size_t>>& ranks, double threshold, bool mom, int workers) {
    TomographyOptions o;
    o.rank_rule = ranks ? RankRule::fixed(*ranks) : RankRule::relative(threshold);
    o.median_of_means = mom;
    o.workers = workers;
    return o;
  };
  m.def("sketch_tomography",
        [opts](const ShadowBatch& b, std::size_t r_tilde, int window, std::uint64_t seed, const std::string& geometry,
               std::optional<std::vector<std::size_t>> ranks, double threshold, bool mom, int workers) {
          const auto fam = default_sketch_family(b.n(), r_tilde, window, seed, geometry_from_name(geometry));
          return sketch_tomography(TraceTable(b), fam, opts(ranks, threshold, mom, workers)).recovered;
        },
        py::arg("batch"), py::arg("r_tilde") = 64, py::arg("window") = 2, py::arg("seed") = 2,
        py::arg("geometry") = "half-chain", py::arg("ranks") = py::none(), py::arg("threshold") = 1e-2,
        py::arg("median_of_means") = false, py::arg("workers") = 1, py::call_guard<py::gil_scoped_release>());
  m.def("sketch_tomography_exact",
        [opts](const MPS& psi, std::size_t r_tilde, int window, std::uint64_t seed, const std::string& geometry,
               std::optional<std::vector<std::size_t>> ranks, double threshold) {
          const auto fam = default_sketch_family(psi.size(), r_tilde, window, seed, geometry_from_name(geometry));
          return sketch_tomography_exact(psi, fam, opts(ranks, threshold, false, 1)).recovered;
        },
        py::arg("psi"), py::arg("r_tilde") = 16, py::arg("window") = 2, py::arg("seed") = 2, py::arg("geometry") = "open",
        py::arg("ranks") = py::none(), py::arg("threshold") = 1e-2);

  m.def("nll", [](const MPS& phi, const ShadowBatch& b, int workers) { return nll(phi, b, nullptr, workers); },
        py::arg("phi"), py::arg("batch"), py::arg("workers") = 1);
  m.def("train_mle",
        [](const ShadowBatch& b, int bond, double learning_rate, int max_sweeps, std::optional<double> target_nll,
           std::uint64_t seed, int workers) {
          MLEConfig c;
          c.bond = bond;
          c.learning_rate = learning_rate;
          c.max_sweeps = max_sweeps;
          c.target_nll = target_nll;
          c.seed = seed;
          c.workers = workers;
          MPS phi0 = random_mps(b.n(), bond, seed);
          phi0.normalize();
          auto r = train(phi0, b, c);
          r.state.normalize();
          std::vector<double> trace;
          for (const auto& s : r.trace) trace.push_back(s.nll);
          return py::make_tuple(r.state, trace, r.reached_target);
        },
        py::arg("batch"), py::arg("bond"), py::arg("learning_rate") = 0.1, py::arg("max_sweeps") = 200,
        py::arg("target_nll") = py::none(), py::arg("seed") = 3, py::arg("workers") = 1);

  // JSON-config commands, mirroring the command-line tool.
  m.def("gen_state", [](const std::string& cfg) { return cmd_gen_state(config(cfg)).dump(); }, py::arg("config"));
  m.def("shadow", [](const std::string& cfg, const MPS& psi, int workers) { return cmd_shadow(config(cfg), psi, workers); },
        py::arg("config"), py::arg("state"), py::arg("workers") = 1);
  m.def("tomo",
        [](const std::string& cfg, const ShadowBatch* batch, const MPS* state, bool noiseless, int workers) {
          TomoInputs in;
          in.batch = batch;
          in.state = state;
          in.noiseless = noiseless;
          in.workers = workers;
          return cmd_tomo(config(cfg), in).dump();
        },
        py::arg("config"), py::arg("batch") = nullptr, py::arg("state") = nullptr, py::arg("noiseless") = false,
        py::arg("workers") = 1);
  m.def("evaluate",
        [](const std::string& cfg, const MPS& truth, const ShadowBatch* batch, const TTCoeff* sketch, const MPS* mle) {
          EvalInputs in;
          in.batch = batch;
          in.sketch = sketch;
          in.mle = mle;
          return cmd_eval(config(cfg), truth, in);
        },
        py::arg("config"), py::arg("truth"), py::arg("batch") = nullptr, py::arg("sketch") = nullptr,
        py::arg("mle") = nullptr);
  m.def("scaling", [](const std::string& cfg, int workers) { return cmd_scaling(config(cfg), workers); }, py::arg("config"),
        py::arg("workers") = 1);
}
