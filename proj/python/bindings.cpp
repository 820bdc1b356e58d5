#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "sflow/errors.hpp"
#include "sflow/esm.hpp"
#include "sflow/experiments.hpp"
#include "sflow/finite_oracle.hpp"
#include "sflow/measure.hpp"
#include "sflow/models.hpp"

namespace py = pybind11;
using namespace sflow;

namespace {

finite::FiniteFlow flow_by_name(const std::string& name) {
  if (name == "synchronizing-pair") return finite::synchronizing_pair();
  if (name == "noisy-two-state") return finite::noisy_two_state();
  if (name == "alternating-period-two") return finite::alternating_period_two();
  throw ConfigError("unknown finite flow '" + name + "'");
}

std::string rational_str(const finite::Rational& q) {
  std::ostringstream os;
  os << q;
  return os.str();
}

EmpiricalMeasure cloud(const std::vector<std::vector<double>>& points) {
  if (points.empty()) throw PreconditionError("empty point cloud");
  std::vector<double> coords;
  for (const auto& p : points) {
    if (p.size() != points.front().size()) throw PreconditionError("points differ in dimension");
    coords.insert(coords.end(), p.begin(), p.end());
  }
  return EmpiricalMeasure::uniform(points.front().size(), std::move(coords));
}

LinearOUModel linear(double rate, double sigma, int level) { return LinearOUModel(rate, sigma, PeriodicProfile{0.0, {1.0}, {}}, level); }

}  // namespace

PYBIND11_MODULE(_sflow, m) {
  m.doc() = "Stochastic flows, pullback measures and exact finite-state oracles.";

  auto base = py::register_exception<Error>(m, "SflowError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<AlignmentError>(m, "AlignmentError", base.ptr());
  py::register_exception<OrderingError>(m, "OrderingError", base.ptr());

  py::class_<DyadicTime>(m, "DyadicTime")
      .def(py::init<std::int64_t, int>(), py::arg("num") = 0, py::arg("level") = 0)
      .def_static("integer", &DyadicTime::integer)
      .def_static("nearest", &DyadicTime::nearest, py::arg("t"), py::arg("level"))
      .def_property_readonly("num", &DyadicTime::numerator)
      .def_property_readonly("level", &DyadicTime::level)
      .def("__float__", &DyadicTime::to_double)
      .def("__eq__", [](const DyadicTime& a, const DyadicTime& b) { return a == b; })
      .def("__repr__", [](const DyadicTime& t) { return "DyadicTime(" + t.str() + ")"; });

  m.def(
      "wiener_increments",
      [](std::uint64_t seed, std::uint64_t index, double s, double t, int level) {
        const WienerStore store;
        return store.increments({seed, index, 1}, 0, DyadicTime::nearest(s, level), DyadicTime::nearest(t, level), level);
      },
      py::arg("seed"), py::arg("index"), py::arg("s"), py::arg("t"), py::arg("level"),
      "Brownian increments on the level grid between s and t.");
  m.def(
      "wiener_at",
      [](std::uint64_t seed, std::uint64_t index, double t, int level) {
        const WienerStore store;
        return store.wiener_at({seed, index, 1}, 0, DyadicTime::nearest(t, level));
      },
      py::arg("seed"), py::arg("index"), py::arg("t"), py::arg("level") = 20);

  m.def(
      "linear_evolve",
      [](double rate, double sigma, int level, std::uint64_t seed, std::uint64_t index, double s, double t,
         std::vector<double> xs) {
        const LinearOUModel model = linear(rate, sigma, level);
        const WienerStore store;
        const NoisePath w = noise_for(model, store, seed).path(index);
        return model.evolve_many(w, DyadicTime::nearest(s, level), DyadicTime::nearest(t, level), xs);
      },
      py::arg("rate"), py::arg("sigma"), py::arg("level"), py::arg("seed"), py::arg("index"), py::arg("s"),
      py::arg("t"), py::arg("x"),
      "S(t, s; w) x for dX = (-rate X + cos t) dt + sigma dW, one realization.");

  m.def(
      "linear_pullback",
      [](double rate, double sigma, int level, std::uint64_t seed, std::uint64_t index, double t, int count,
         std::size_t n_particles, double epsilon) {
        const LinearOUModel model = linear(rate, sigma, level);
        const WienerStore store;
        const NoisePath w = noise_for(model, store, seed).path(index);
        const GaussianFamily fam = GaussianFamily::of_linear(model, GaussianFamily::Mode::Stratified);
        PullbackOptions opt;
        opt.n_particles = n_particles;
        const PullbackResult r = pullback_measure(
            model, w, PullbackSchedule::geometric(DyadicTime::nearest(t, level), DyadicTime::integer(1), count, epsilon),
            fam, opt);
        py::dict out;
        out["converged"] = r.converged;
        out["converged_index"] = r.converged_index;
        out["distances"] = r.distances;
        out["spreads"] = r.spreads;
        out["particles"] = r.measure.coords();
        out["failure"] = r.failure;
        return out;
      },
      py::arg("rate"), py::arg("sigma"), py::arg("level"), py::arg("seed"), py::arg("index"), py::arg("t"),
      py::arg("count") = 6, py::arg("n_particles") = 1024, py::arg("epsilon") = 0.02);

  m.def(
      "energy_distance", [](const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
        return distance(cloud(a), cloud(b));
      },
      py::arg("a"), py::arg("b"), "Energy distance between two equal-weight point clouds.");

  m.def(
      "finite_stationary",
      [](const std::string& name) {
        const finite::EsmSolution sol = finite::ff_esm_solve(flow_by_name(name));
        std::vector<std::vector<std::string>> family;
        for (const auto& mu : sol.family) {
          std::vector<std::string> row;
          for (const auto& q : mu) row.push_back(rational_str(q));
          family.push_back(row);
        }
        return py::make_tuple(sol.unique, family);
      },
      py::arg("name"), "Exact evolution system of a built-in finite flow, as fraction strings.");

  m.def("counterexample_verdicts", [] {
    std::map<std::string, bool> out;
    for (const auto& sc : finite::counterexamples()) out[sc.name] = sc.verdict();
    return out;
  });

  m.def("experiment_kinds", [] {
    std::vector<std::string> kinds;
    for (const auto& e : experiment_catalog()) kinds.push_back(e.kind);
    return kinds;
  });

  m.def(
      "run_experiment_json",
      [](const std::string& text, int jobs) {
        RunReport r;
        {
          py::gil_scoped_release release;
          r = run_experiment(Config::parse_string(text), jobs);
        }
        return r.summary().dump();
      },
      py::arg("config"), py::arg("jobs") = 1);
}
