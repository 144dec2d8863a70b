/**
 * @file io.hpp
 * @brief File formats for estimates, reports and sweep tables.
 *
 * CSV bodies contain only deterministic values; wall-clock timings go to
 * separate *_timing.csv files.
 */
#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "gridgm/detect.hpp"
#include "gridgm/estimator.hpp"
#include "gridgm/experiment.hpp"
#include "gridgm/topology.hpp"

namespace gridgm {

/// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

void write_json(const nlohmann::json& doc, const std::filesystem::path& path);

/// {edges: [[a, b], ...], node_class: {bus: class}, algorithm, thresholds, error}
nlohmann::json topology_to_json(const TopologyEstimate& estimate, std::optional<double> error = std::nullopt);

/// Matrix as CSV (header v_<bus>..., theta_<bus>...) plus a `<path>.json`
/// sidecar {provenance, lambda, tol, iterations, gap, ridge}.
void write_concentration(const ConcentrationMatrix& j, const std::filesystem::path& path);
ConcentrationMatrix read_concentration(const std::filesystem::path& path);

nlohmann::json recovered_to_json(const RecoveredParameters& params, const std::string& reference);

/// <stem>.csv, <stem>_aggregate.csv and <stem>_timing.csv in `dir`.
void write_sweep(const SweepResult& result, const std::filesystem::path& dir, const std::string& stem);

/// detect_report.json (analytic report), detect_accuracy.csv, detect_runs.csv
/// and detect_timing.csv in `dir`.
void write_detection(const DetectionResult& result, const std::filesystem::path& dir);

}  // namespace gridgm
