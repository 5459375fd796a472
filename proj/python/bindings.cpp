#include "mfcpn/cli.hpp"
#include "mfcpn/config.hpp"
#include "mfcpn/errors.hpp"
#include "mfcpn/lq.hpp"
#include "mfcpn/measures.hpp"
#include "mfcpn/verify.hpp"

#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace mfcpn;

namespace {

EmpiricalMeasure to_measure(const std::vector<double>& atoms, const std::vector<double>& weights) {
    return EmpiricalMeasure(1, atoms, weights);
}

LQParams params_from_json_text(const std::string& text) { return lq_params_from_json(nlohmann::json::parse(text)); }

py::dict riccati(const std::string& model_json, const std::string& mode, std::size_t steps) {
    const auto sol = solve_riccati(params_from_json_text(model_json), parse_noise_mode(mode), steps);
    py::dict d;
    d["t"] = sol.times;
    d["beta"] = sol.beta;
    d["eta"] = sol.eta;
    d["midpoint_residual"] = riccati_midpoint_residual(sol);
    return d;
}

std::string verify(const std::string& config_path, const std::string& check, std::uint64_t seed) {
    const auto cfg = load_config(config_path, seed);
    const auto params = cfg.model;
    CheckReport r;
    if (check == "hjb") {
        const auto sol = solve_riccati(params, NoiseMode::common, cfg.sim.riccati_steps);
        r = check_hjb(sol, random_hjb_samples(params.T, cfg.verify.hjb_measures, cfg.verify.max_atoms, cfg.sim.seed),
                      cfg.verify.hjb_tolerance);
    } else if (check == "noise") {
        r = compare_noise_modes(params, cfg.mc());
    } else {
        throw py::value_error("verify supports 'hjb' and 'noise'; use run_cli for the full set");
    }
    r.config_hash = cfg.hash();
    return r.to_json().dump();
}

py::tuple cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_mfcpn, m) {
    m.doc() = "Mean-field control with Poissonian common noise: LQ solver and cross-checks";
    py::register_exception<mfcpn::Error>(m, "MfcpnError", PyExc_RuntimeError);

    m.def(
        "fm_distance",
        [](const std::vector<double>& a, const std::vector<double>& wa, const std::vector<double>& b,
           const std::vector<double>& wb) { return fm_distance(to_measure(a, wa), to_measure(b, wb)); },
        py::arg("atoms_a"), py::arg("weights_a"), py::arg("atoms_b"), py::arg("weights_b"),
        "Fortet-Mourier distance between two weighted point sets on the line.");
    m.def("riccati", &riccati, py::arg("model_json"), py::arg("mode") = "common", py::arg("steps") = 10000,
          "Solve the Riccati system for a JSON document with \"model\" and optional \"jumps\" sections.");
    m.def(
        "value_function",
        [](const std::string& model_json, double t, const std::vector<double>& atoms, const std::vector<double>& w,
           std::size_t steps) {
            const auto sol = solve_riccati(params_from_json_text(model_json), NoiseMode::common, steps);
            return value_function(sol, t, to_measure(atoms, w));
        },
        py::arg("model_json"), py::arg("t"), py::arg("atoms"), py::arg("weights"), py::arg("steps") = 10000);
    m.def("verify", &verify, py::arg("config_path"), py::arg("check"), py::arg("seed"),
          "Run one check and return its report as a JSON string.");
    m.def("run_cli", &cli, py::arg("args"), "Run the command-line driver; returns (exit code, stdout, stderr).");
    m.attr("__version__") = MFCPN_VERSION;
}
