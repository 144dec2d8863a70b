#include "gridgm/detect.hpp"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "gridgm/error.hpp"
#include "gridgm/topology.hpp"

namespace gridgm {

std::string to_string(ChangeKind kind) {
  switch (kind) {
    case ChangeKind::Added:
      return "added";
    case ChangeKind::Removed:
      return "removed";
    case ChangeKind::NoChange:
      return "no_change";
    case ChangeKind::Ambiguous:
      return "ambiguous";
  }
  return "unknown";
}

namespace {

Eigen::VectorXd diagonal_sum(const ConcentrationMatrix& j) {
  return j.vv().diagonal() + j.thetatheta().diagonal();
}

}  // namespace

Eigen::VectorXd diagonal_deltas(const ConcentrationMatrix& before, const ConcentrationMatrix& after) {
  if (before.j.rows() != after.j.rows() || before.j.cols() != after.j.cols()) {
    throw ValidationError("concentration matrices have different dimensions");
  }
  if (before.bus_order != after.bus_order) throw ValidationError("concentration matrices have different bus orders");
  return diagonal_sum(after) - diagonal_sum(before);
}

ChangeReport detect_change(const ConcentrationMatrix& before, const ConcentrationMatrix& after, double tau3) {
  if (!(tau3 > 0.0)) throw ValidationError("tau3 must be positive");
  ChangeReport report;
  report.deltas = diagonal_deltas(before, after);
  report.bus_order = before.bus_order;
  report.tau3 = tau3;

  std::vector<Eigen::Index> marked;
  for (Eigen::Index i = 0; i < report.deltas.size(); ++i) {
    if (std::abs(report.deltas(i)) > tau3) marked.push_back(i);
  }
  for (const auto i : marked) report.terminals.push_back(report.bus_order[static_cast<std::size_t>(i)]);

  if (marked.empty()) {
    report.kind = ChangeKind::NoChange;
  } else if (marked.size() == 2 && (report.deltas(marked[0]) > 0.0) == (report.deltas(marked[1]) > 0.0)) {
    report.kind = report.deltas(marked[0]) > 0.0 ? ChangeKind::Added : ChangeKind::Removed;
    report.endpoints = std::pair{report.terminals[0], report.terminals[1]};
  } else {
    report.kind = ChangeKind::Ambiguous;
  }
  return report;
}

double predicted_endpoint_delta(const GridGraph& before, const LineEvent& event, const InjectionStatistics& stats,
                                const std::string& endpoint) {
  if (!stats.is_block_diagonal()) {
    throw ValidationError("closed-form deltas need block-diagonal injection statistics");
  }
  if (stats.dimension() != before.dimension()) throw ValidationError("injection statistics dimension mismatch");
  const std::string& other_name = endpoint == event.line.from ? event.line.to : event.line.from;
  if (endpoint != event.line.from && endpoint != event.line.to) {
    throw ValidationError("bus '" + endpoint + "' is not an endpoint of the event");
  }
  // Neighbourhoods are read from whichever grid carries the line.
  const GridGraph with_line = event.kind == LineEventKind::Add ? apply_line_event(before, event) : before;
  const std::size_t a = with_line.index_of(endpoint);
  const std::size_t b = with_line.index_of(other_name);
  const auto ra = with_line.reduced_index(a);
  if (!ra) throw ValidationError("the reference bus has no delta");

  const Eigen::VectorXd det = stats.determinants();
  const auto weight = [&](std::size_t reduced) {
    const auto r = static_cast<Eigen::Index>(reduced);
    return (stats.sigma_pp(r) + stats.sigma_qq(r)) / det(r);
  };

  const auto line_index = with_line.find_line(a, b);
  const Line& changed = with_line.lines()[*line_index];
  const LineAdmittance y = admittance(changed.r, changed.x);

  double cross = 0.0;
  for (const auto k : with_line.adjacency()[a]) {
    if (k == b) continue;
    const Line& l = with_line.lines()[*with_line.find_line(a, k)];
    const LineAdmittance yk = admittance(l.r, l.x);
    cross += yk.g * y.g + yk.beta * y.beta;
  }
  const double magnitude = y.g * y.g + y.beta * y.beta;
  const double m_a = weight(*ra);
  double delta = 2.0 * m_a * cross + m_a * magnitude;
  if (const auto rb = with_line.reduced_index(b)) delta += weight(*rb) * magnitude;
  return event.kind == LineEventKind::Add ? delta : -delta;
}

double default_tau3(const GridGraph& before, const LineEvent& event, const InjectionStatistics& stats) {
  double smallest = std::numeric_limits<double>::infinity();
  for (const auto& bus : {event.line.from, event.line.to}) {
    if (bus == before.reference()) continue;
    smallest = std::min(smallest, std::abs(predicted_endpoint_delta(before, event, stats, bus)));
  }
  if (!std::isfinite(smallest)) throw ValidationError("event has no non-reference endpoint");
  return smallest / 2.0;
}

double data_tau3(const Eigen::VectorXd& deltas) {
  const Eigen::VectorXd mags = deltas.cwiseAbs();
  return gap_threshold(std::vector<double>(mags.begin(), mags.end()));
}

nlohmann::json change_report_to_json(const ChangeReport& report) {
  nlohmann::json doc;
  doc["kind"] = to_string(report.kind);
  doc["endpoints"] = report.endpoints ? nlohmann::json::array({report.endpoints->first, report.endpoints->second})
                                      : nlohmann::json(nullptr);
  nlohmann::json deltas = nlohmann::json::object();
  for (std::size_t i = 0; i < report.bus_order.size(); ++i) {
    deltas[report.bus_order[i]] = report.deltas(static_cast<Eigen::Index>(i));
  }
  doc["deltas"] = deltas;
  doc["terminals"] = report.terminals;
  doc["tau3"] = report.tau3;
  doc["assumptions"] = nlohmann::json::array({"injection statistics unchanged across the event"});
  return doc;
}

}  // namespace gridgm
