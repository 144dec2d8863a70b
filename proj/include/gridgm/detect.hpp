/**
 * @file detect.hpp
 * @brief Single line addition/removal from concentration matrices taken
 *        before and after the event.
 *
 * The diagonal of J_vv + J_thth only moves at the two endpoints of a changed
 * line: up for an added line, down for a removed one. Injection statistics
 * are assumed unchanged across the event.
 */
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "gridgm/estimator.hpp"
#include "gridgm/grid.hpp"
#include "gridgm/sampler.hpp"

namespace gridgm {

enum class ChangeKind { Added, Removed, NoChange, Ambiguous };

std::string to_string(ChangeKind kind);

struct ChangeReport {
  ChangeKind kind = ChangeKind::NoChange;
  std::optional<std::pair<std::string, std::string>> endpoints;
  /// after - before, per non-reference bus
  Eigen::VectorXd deltas;
  std::vector<std::string> bus_order;
  /// Buses with |delta| > tau3, in bus order.
  std::vector<std::string> terminals;
  double tau3 = 0.0;
};

/// diag(J_vv + J_thth) of `after` minus that of `before`.
Eigen::VectorXd diagonal_deltas(const ConcentrationMatrix& before, const ConcentrationMatrix& after);

/// Never guesses: terminal counts other than 0 or 2, or two terminals of
/// opposite sign, give Ambiguous.
ChangeReport detect_change(const ConcentrationMatrix& before, const ConcentrationMatrix& after, double tau3);

/**
 * Closed-form diagonal delta at `endpoint` (one end of the event's line).
 * With M_k = (sigma_pp + sigma_qq) / D at bus k and (g, beta) the line's
 * admittance, an added line (a, b) moves bus a by
 *
 *   2 M_a sum_{k in N(a) \ b} (g_ak g + beta_ak beta) + (M_a + M_b)(g^2 + beta^2),
 *
 * N(a) including a line to the reference bus, and M_b dropped when b is the
 * reference. A removal gives the negative. Requires block-diagonal injection
 * statistics.
 */
double predicted_endpoint_delta(const GridGraph& before, const LineEvent& event, const InjectionStatistics& stats,
                                const std::string& endpoint);

/// Half the smallest predicted |delta| over the event's non-reference endpoints.
double default_tau3(const GridGraph& before, const LineEvent& event, const InjectionStatistics& stats);

/// Data-only threshold: gap heuristic over |deltas|.
double data_tau3(const Eigen::VectorXd& deltas);

nlohmann::json change_report_to_json(const ChangeReport& report);

}  // namespace gridgm
