#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "gridgm/detect.hpp"
#include "gridgm/error.hpp"
#include "gridgm/estimator.hpp"
#include "gridgm/generate.hpp"
#include "gridgm/grid.hpp"
#include "gridgm/sampler.hpp"
#include "gridgm/topology.hpp"

namespace py = pybind11;
using namespace gridgm;

namespace {

ConcentrationMatrix wrap(const Eigen::MatrixXd& j, const std::vector<std::string>& order) {
  ConcentrationMatrix c;
  c.j = j;
  if (order.empty()) {
    for (Eigen::Index i = 0; i < j.rows() / 2; ++i) c.bus_order.push_back(std::to_string(i));
  } else {
    c.bus_order = order;
  }
  return c;
}

py::dict estimate_to_dict(const TopologyEstimate& est) {
  py::dict d;
  py::list edges;
  for (const auto& [a, b] : est.edges) edges.append(py::make_tuple(est.bus_order[a], est.bus_order[b]));
  d["edges"] = edges;
  py::dict classes;
  for (std::size_t i = 0; i < est.bus_order.size(); ++i) classes[py::str(est.bus_order[i])] = to_string(est.node_class[i]);
  d["node_class"] = classes;
  d["algorithm"] = to_string(est.algorithm);
  d["thresholds"] = est.thresholds;
  return d;
}

TopologyEstimate estimate_from_edges(const std::vector<std::pair<std::string, std::string>>& edges,
                                     const GridGraph& grid) {
  TopologyEstimate est;
  est.bus_order = grid.non_reference_buses();
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < est.bus_order.size(); ++i) pos[est.bus_order[i]] = i;
  for (const auto& [a, b] : edges) {
    if (!pos.count(a) || !pos.count(b)) throw ValidationError("edge " + a + "-" + b + " names an unscored bus");
    est.edges.insert(make_edge(pos[a], pos[b]));
  }
  return est;
}

}  // namespace

PYBIND11_MODULE(_gridgm, m) {
  m.doc() = "Grid topology learning from voltage statistics";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<GridGraph>(m, "Grid")
      .def_static("from_json", [](const std::string& text) { return grid_from_json(nlohmann::json::parse(text)); })
      .def_static("load", [](const std::string& path) { return load_grid(path); })
      .def("to_json", [](const GridGraph& g) { return grid_to_json(g).dump(); })
      .def("save", [](const GridGraph& g, const std::string& path) { save_grid(g, path); })
      .def_property_readonly("buses", &GridGraph::buses)
      .def_property_readonly("reference", &GridGraph::reference)
      .def_property_readonly("dimension", &GridGraph::dimension)
      .def_property_readonly("non_reference_buses", &GridGraph::non_reference_buses)
      .def_property_readonly("lines",
                             [](const GridGraph& g) {
                               py::list out;
                               for (const auto& l : g.line_specs()) out.append(py::make_tuple(l.from, l.to, l.r, l.x));
                               return out;
                             })
      .def("sha256", &grid_sha256)
      .def("min_cycle_length", [](const GridGraph& g) -> py::object {
        const auto rep = structure_report(g);
        if (rep.is_tree()) return py::float_(std::numeric_limits<double>::infinity());
        return py::int_(rep.min_cycle_length);
      });

  m.def(
      "generate_grid",
      [](const std::string& kind, std::size_t buses, std::size_t loops, std::size_t min_cycle, std::uint64_t seed) {
        GridSpec spec;
        spec.kind = parse_grid_kind(kind);
        spec.buses = buses;
        spec.loops = loops;
        spec.min_cycle = min_cycle;
        spec.seed = seed;
        return generate_grid(spec);
      },
      py::arg("kind"), py::arg("buses"), py::arg("loops") = 0, py::arg("min_cycle") = 7, py::arg("seed") = 1);
  m.def("case33", &case33_analog);

  m.def(
      "laplacians",
      [](const GridGraph& g) {
        const auto lap = reduced_laplacians(g);
        return py::make_tuple(lap.h_g, lap.h_beta, lap.composite);
      },
      py::arg("grid"));

  m.def(
      "analytic_concentration",
      [](const GridGraph& g, double variance, double pq) {
        return analytic_concentration(reduced_laplacians(g), InjectionStatistics::uniform(g.dimension(), variance, pq))
            .j;
      },
      py::arg("grid"), py::arg("variance") = kDefaultInjectionVariance, py::arg("pq") = 0.0);
  m.def(
      "voltage_covariance",
      [](const GridGraph& g, double variance, double pq) {
        return analytic_voltage_covariance(reduced_laplacians(g),
                                           InjectionStatistics::uniform(g.dimension(), variance, pq));
      },
      py::arg("grid"), py::arg("variance") = kDefaultInjectionVariance, py::arg("pq") = 0.0);
  m.def(
      "sample_voltages",
      [](const GridGraph& g, std::size_t n, std::uint64_t seed, double variance) {
        return sample_voltages(reduced_laplacians(g), InjectionStatistics::uniform(g.dimension(), variance), n, seed)
            .samples;
      },
      py::arg("grid"), py::arg("n"), py::arg("seed") = 1, py::arg("variance") = kDefaultInjectionVariance);

  m.def("sample_covariance", py::overload_cast<const Eigen::MatrixXd&>(&sample_covariance), py::arg("samples"));
  m.def(
      "direct_concentration",
      [](const Eigen::MatrixXd& cov, double ridge) { return direct_concentration(cov, ridge).j; }, py::arg("cov"),
      py::arg("ridge") = 0.0);
  m.def(
      "graphical_lasso",
      [](const Eigen::MatrixXd& cov, double lambda, double tol, std::size_t max_iter) {
        const auto c = graphical_lasso(cov, GlassoOptions{lambda, tol, max_iter});
        return py::make_tuple(c.j, c.iterations, c.gap);
      },
      py::arg("cov"), py::arg("lam"), py::arg("tol") = 1e-6, py::arg("max_iter") = 500);
  m.def("glasso_objective", &glasso_objective, py::arg("precision"), py::arg("cov"), py::arg("lam"));

  m.def(
      "gamma_thresholds",
      [](const Eigen::MatrixXd& j) {
        auto c = wrap(j, {});
        const auto g = gamma_thresholds(c);
        return py::make_tuple(g.gamma1, g.gamma2);
      },
      py::arg("analytic_j"));
  m.def(
      "learn_neighborhood",
      [](const Eigen::MatrixXd& j, double tau1, const std::vector<std::string>& order) {
        return estimate_to_dict(learn_neighborhood(wrap(j, order), tau1));
      },
      py::arg("j"), py::arg("tau1"), py::arg("bus_order") = std::vector<std::string>{});
  m.def(
      "learn_sign_rule",
      [](const Eigen::MatrixXd& j, double tau2, const std::vector<std::string>& order) {
        return estimate_to_dict(learn_sign_rule(wrap(j, order), tau2));
      },
      py::arg("j"), py::arg("tau2"), py::arg("bus_order") = std::vector<std::string>{});
  m.def(
      "score",
      [](const std::vector<std::pair<std::string, std::string>>& edges, const GridGraph& truth) {
        return score(estimate_from_edges(edges, truth), truth);
      },
      py::arg("edges"), py::arg("truth"));

  m.def(
      "detect_change",
      [](const Eigen::MatrixXd& before, const Eigen::MatrixXd& after, double tau3,
         const std::vector<std::string>& order) {
        const auto r = detect_change(wrap(before, order), wrap(after, order), tau3);
        py::dict d;
        d["kind"] = to_string(r.kind);
        d["endpoints"] = r.endpoints ? py::object(py::make_tuple(r.endpoints->first, r.endpoints->second))
                                     : py::object(py::none());
        d["deltas"] = r.deltas;
        d["tau3"] = r.tau3;
        return d;
      },
      py::arg("before"), py::arg("after"), py::arg("tau3"), py::arg("bus_order") = std::vector<std::string>{});

  m.def(
      "recover_parameters",
      [](const Eigen::MatrixXd& voltage_cov, const Eigen::MatrixXd& injection_cov) {
        const auto r = recover_parameters(voltage_cov, injection_cov);
        py::dict d;
        d["h_composite"] = r.h_composite;
        d["residual"] = r.residual;
        d["principal_residual"] = r.principal_residual;
        d["identifiable"] = r.identifiable;
        py::list lines;
        for (const auto& l : r.lines) lines.append(py::make_tuple(l.from, l.to, l.g, l.beta));
        d["lines"] = lines;
        return d;
      },
      py::arg("voltage_cov"), py::arg("injection_cov"));
}
