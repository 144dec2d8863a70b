/**
 * @file experiment.hpp
 * @brief Sample-size, noise, correlation and threshold sweeps.
 *
 * Every cell (sample size, repetition) draws its own sample stream from the
 * repetition's seed, so any row can be replayed alone with run_cell.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gridgm/detect.hpp"
#include "gridgm/estimator.hpp"
#include "gridgm/generate.hpp"
#include "gridgm/grid.hpp"
#include "gridgm/sampler.hpp"
#include "gridgm/topology.hpp"

namespace gridgm {

enum class EstimatorChoice { Auto, Direct, Glasso };
enum class ThresholdMode { Analytic, Data };

EstimatorChoice parse_estimator_choice(const std::string& name);
std::string to_string(EstimatorChoice c);
ThresholdMode parse_threshold_mode(const std::string& name);
std::string to_string(ThresholdMode m);

struct ExperimentConfig {
  /// Grid file; when absent, `generate` describes the grid, and when both are
  /// absent the 33-bus analog is used.
  std::optional<std::string> grid_path;
  std::optional<GridSpec> generate;

  double injection_variance = kDefaultInjectionVariance;
  double injection_pq = 0.0;
  /// Precision perturbation between adjacent buses.
  double epsilon = 0.0;
  /// Measurement noise variance as a fraction of each voltage coordinate's variance.
  double noise_level = 0.0;

  std::vector<std::size_t> sample_sizes{500, 1000, 5000, 10000, 100000};
  std::size_t repetitions = 10;
  std::uint64_t seed = 1;
  /// Per-repetition seeds; when empty, repetition r uses seed + r.
  std::vector<std::uint64_t> seeds;

  std::vector<LearningAlgorithm> algorithms{LearningAlgorithm::NeighborhoodSearch, LearningAlgorithm::SignRule};
  /// Analytic: tau = gamma / 2 from the noiseless, uncorrelated model of the
  /// ground-truth grid. Data: gap heuristic on each estimate. Explicit
  /// tau1/tau2/tau3 values override either mode.
  ThresholdMode threshold_mode = ThresholdMode::Analytic;
  std::optional<double> tau1;
  std::optional<double> tau2;
  std::optional<double> tau3;
  std::vector<double> tau_multipliers{0.8, 1.0, 1.2};

  /// Auto: graphical lasso when n < glasso_below * 2N, direct inverse otherwise.
  EstimatorChoice estimator = EstimatorChoice::Auto;
  double glasso_below = 5.0;
  /// Correlation-scale lambda; defaults to 0.5 sqrt(log(2N) / n).
  std::optional<double> lambda;
  double glasso_tol = 1e-6;

  /// Detection: the event applied to the grid, or a second grid file.
  std::optional<LineEvent> event;
  std::optional<std::string> after_grid_path;
  /// Detection: drive both grids with the same injection draws (each load
  /// realization is solved on both topologies). Off gives independent streams.
  bool paired_injections = true;

  std::string output_dir = "out";

  void validate() const;
  std::uint64_t seed_for(std::size_t repetition) const;
};

ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

GridGraph resolve_grid(const ExperimentConfig& config);
GridGraph resolve_after_grid(const ExperimentConfig& config, const GridGraph& before);

/// Everything about one grid that does not depend on the samples.
struct ExperimentModel {
  GridGraph grid;
  LaplacianPair laplacians;
  InjectionStatistics base_stats;
  /// base_stats with the epsilon perturbation.
  InjectionStatistics stats;
  NoiseStatistics noise;
  ConcentrationMatrix analytic_base;
  GammaThresholds gamma;
};

ExperimentModel build_model(const GridGraph& grid, const ExperimentConfig& config);

/// Covariance of n streamed samples (plus noise) for `seed`.
Eigen::MatrixXd streamed_covariance(const ExperimentModel& model, std::size_t n, std::uint64_t seed);
/// Same, with the measurement noise drawn from its own seed.
Eigen::MatrixXd streamed_covariance(const ExperimentModel& model, std::size_t n, std::uint64_t seed,
                                    std::uint64_t noise_seed);

ConcentrationMatrix estimate_concentration(const Eigen::MatrixXd& cov, std::size_t n, const ExperimentConfig& config,
                                           const std::vector<std::string>& bus_order);

/// Threshold for `algorithm` (tau1 or tau2) times `multiplier`.
double learning_threshold(const ExperimentModel& model, const ConcentrationMatrix& estimate,
                          LearningAlgorithm algorithm, const ExperimentConfig& config, double multiplier = 1.0);

TopologyEstimate learn(const ConcentrationMatrix& j, LearningAlgorithm algorithm, double tau);

/// Error ratio of one (n, seed, algorithm) cell, computed from scratch.
double run_cell(const ExperimentModel& model, const ExperimentConfig& config, std::size_t n, std::uint64_t seed,
                LearningAlgorithm algorithm, double multiplier = 1.0);

struct SweepRow {
  std::size_t sample_size = 0;
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  LearningAlgorithm algorithm = LearningAlgorithm::SignRule;
  double noise_level = 0.0;
  double epsilon = 0.0;
  double multiplier = 1.0;
  double tau = 0.0;
  std::optional<double> error_ratio;
  std::string failure;
  double runtime_ms = 0.0;
};

struct SweepAggregate {
  std::size_t sample_size = 0;
  LearningAlgorithm algorithm = LearningAlgorithm::SignRule;
  double multiplier = 1.0;
  std::size_t count = 0;
  std::size_t failures = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepAggregate> aggregates;
};

SweepResult sweep(const ExperimentConfig& config);
SweepResult sweep(const ExperimentModel& model, const ExperimentConfig& config);

/// Largest configured sample size, every multiplier in config.tau_multipliers.
SweepResult threshold_sensitivity(const ExperimentConfig& config);
SweepResult threshold_sensitivity(const ExperimentModel& model, const ExperimentConfig& config);

std::vector<SweepAggregate> aggregate(const std::vector<SweepRow>& rows);

struct DetectionRow {
  std::size_t sample_size = 0;
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  double noise_level = 0.0;
  std::string kind;
  std::string endpoints;
  /// 0 when kind and endpoints match the event, 1 otherwise.
  std::optional<int> error;
  std::string failure;
  double runtime_ms = 0.0;
};

struct DetectionAccuracy {
  std::size_t sample_size = 0;
  std::size_t count = 0;
  double accuracy = 0.0;
};

struct DetectionResult {
  LineEvent event;
  /// Report from the analytic before/after matrices.
  ChangeReport analytic;
  double tau3 = 0.0;
  std::vector<DetectionRow> rows;
  std::vector<DetectionAccuracy> accuracy;
};

/// True when `report` names exactly the event's kind and endpoints.
bool matches_event(const ChangeReport& report, const LineEvent& event);

DetectionResult detection_sweep(const ExperimentConfig& config);
DetectionResult detection_sweep(const GridGraph& before, const GridGraph& after, const ExperimentConfig& config);

}  // namespace gridgm
