#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "hlab/cli.hpp"
#include "hlab/eikonal.hpp"
#include "hlab/errors.hpp"
#include "hlab/functionals.hpp"
#include "hlab/grid.hpp"
#include "hlab/scenario.hpp"
#include "hlab/solver.hpp"

namespace py = pybind11;
using namespace hlab;

namespace {

py::array_t<cplx> to_array(const WaveField& u) {
  std::vector<py::ssize_t> shape(u.grid.dimension(), u.grid.points());
  py::array_t<cplx> a(shape);
  std::copy(u.values.begin(), u.values.end(), a.mutable_data());
  return a;
}

WaveField from_array(const Grid& g, const py::array_t<cplx, py::array::c_style | py::array::forcecast>& a) {
  if (static_cast<std::size_t>(a.size()) != g.size())
    throw PreconditionError("array has " + std::to_string(a.size()) + " entries, grid has " +
                            std::to_string(g.size()));
  WaveField u(g);
  std::copy(a.data(), a.data() + a.size(), u.values.begin());
  return u;
}

Config load(const std::string& text) {
  Config c = parse_config(text);
  validate_config(c);
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bindings to the hlab magnetic Helmholtz toolkit.";

  // translators run newest first, so the base class goes first
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("version", &version_string);
  m.def("fnv1a64", [](const std::string& s) { return fnv1a64(s); });
  m.def("preset_names", &preset_names);
  m.def("preset_text", [](const std::string& name, int d) { return preset_text(name, d); }, py::arg("name"),
        py::arg("dimension") = 3);

  m.def(
      "describe",
      [](const std::string& text) {
        const Config c = load(text);
        const Scenario& s = c.scenario;
        py::dict out;
        out["dimension"] = s.dimension;
        out["lambda"] = s.lambda;
        out["epsilon"] = s.epsilon;
        out["half_width"] = s.half_width;
        out["points"] = s.points;
        out["boundary"] = to_string(s.boundary);
        out["magnetic"] = s.has_magnetic_potential();
        return out;
      },
      py::arg("config_text"), "Parses and validates a config; returns its main parameters.");

  m.def(
      "solve",
      [](const std::string& text) {
        const Config c = load(text);
        const Grid g = grid_for(c.scenario);
        auto [u, stats] = solve_fixed_epsilon(g, c.scenario, c.solver);
        py::dict info;
        info["iterations"] = stats.iterations;
        info["residual"] = stats.final_relative_residual;
        info["spacing"] = g.spacing();
        return py::make_tuple(to_array(u), info);
      },
      py::arg("config_text"), "Solves at the config's epsilon; returns (u, stats).");

  m.def(
      "apply_operator",
      [](const std::string& text, const py::array_t<cplx, py::array::c_style | py::array::forcecast>& u) {
        const Config c = load(text);
        const Grid g = grid_for(c.scenario);
        return to_array(apply_helmholtz_operator(g, c.scenario, from_array(g, u)));
      },
      py::arg("config_text"), py::arg("u"));

  m.def(
      "norms",
      [](int d, double L, const py::array_t<cplx, py::array::c_style | py::array::forcecast>& f, double R0) {
        const Grid g(d, L, static_cast<int>(f.shape(0)));
        const WaveField w = from_array(g, f);
        return py::make_tuple(mc_norm(w, R0), dual_norm(w, R0));
      },
      py::arg("dimension"), py::arg("half_width"), py::arg("f"), py::arg("R0") = 0.0,
      "Returns (|||f|||, |||f|||*) for a field sampled on the cell-centred grid.");

  m.def("saito_coefficients", &saito_coefficients, py::arg("lambda"));

  m.def(
      "eikonal_saito",
      [](double lambda, int dimension, double r_max) {
        const FieldExpr p = FieldExpr::parse("-w1/" + std::to_string(lambda));
        const AngularGrid ang = dimension == 2 ? AngularGrid::circle(64) : AngularGrid::sphere(16, 32);
        const auto sol = march_g(p, ang, 1.0, r_max, 1.05, make_init("saito", p, 1.0, lambda));
        py::dict out;
        out["shells"] = sol.shells();
        out["residual"] = eikonal_residual(sol, p);
        out["c0"] = sol.c0();
        out["c1"] = sol.c1();
        return out;
      },
      py::arg("lambda"), py::arg("dimension") = 3, py::arg("r_max") = 100.0);

  m.def(
      "run",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a CLI subcommand in-process; returns (exit_code, stdout, stderr).");
}
