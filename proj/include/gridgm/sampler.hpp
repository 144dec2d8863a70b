/**
 * @file sampler.hpp
 * @brief Gaussian injection fluctuations mapped to voltage fluctuations
 *        through the linear coupled power flow model.
 *
 * Voltage vectors are stacked as [v_1..v_N, theta_1..theta_N] in the bus
 * order of the generating LaplacianPair. Injection vectors are stacked the
 * same way as [p_1..p_N, q_1..q_N].
 *
 * Seeding: sample k of a draw is a pure function of (seed, k). Each sample
 * owns a splitmix64 stream keyed on (seed, k), so any partition of the
 * sample index range yields the same rows. Injection covariances are
 * factored by Cholesky (per-bus 2x2 blocks, or the full precision matrix
 * when a cross-bus perturbation is present); noise covariances, which may
 * be singular, are factored spectrally.
 */
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "gridgm/grid.hpp"

namespace gridgm {

/// Injection variance used throughout the experiments, relative to base.
inline constexpr double kDefaultInjectionVariance = 1e-2;

struct InjectionStatistics {
  Eigen::VectorXd sigma_pp;
  Eigen::VectorXd sigma_qq;
  Eigen::VectorXd sigma_pq;
  /// Optional symmetric 2N x 2N addition to the injection precision matrix.
  std::optional<Eigen::MatrixXd> precision_perturbation;

  static InjectionStatistics uniform(std::size_t buses, double variance = kDefaultInjectionVariance,
                                     double pq_covariance = 0.0);

  std::size_t dimension() const { return static_cast<std::size_t>(sigma_pp.size()); }
  bool is_block_diagonal() const { return !precision_perturbation.has_value(); }

  /// Per-bus |sigma_pp * sigma_qq - sigma_pq^2|.
  Eigen::VectorXd determinants() const;
  /// Precision of the block-diagonal part only.
  Eigen::MatrixXd base_precision() const;
  /// Base precision plus the perturbation, if any.
  Eigen::MatrixXd precision() const;
  /// Full 2N x 2N injection covariance.
  Eigen::MatrixXd covariance() const;

  /// Throws ValidationError on shape mismatch or lost positive definiteness.
  void validate() const;
};

/**
 * Returns `stats` with a precision perturbation that adds
 * epsilon * sqrt(P(a,a) P(b,b)) between the p-coordinates, and separately the
 * q-coordinates, of every pair of buses joined by a line. Throws
 * ValidationError if the result is not positive definite.
 */
InjectionStatistics make_correlated_stats(const InjectionStatistics& stats, const GridGraph& grid, double epsilon);

struct NoiseStatistics {
  /// 2N x 2N symmetric positive semidefinite covariance.
  Eigen::MatrixXd covariance;
  /// Free-form description recorded in sample metadata.
  nlohmann::json descriptor = nlohmann::json::object();

  static NoiseStatistics zero(std::size_t buses);
  /// Uncorrelated across buses; per-bus 2x2 blocks [[vv, vtheta], [vtheta, thetatheta]].
  static NoiseStatistics per_bus(const Eigen::VectorXd& vv, const Eigen::VectorXd& thetatheta,
                                 const Eigen::VectorXd& vtheta);
  /// Independent noise on every coordinate with variance `fraction` times
  /// that coordinate's variance in `voltage_covariance`.
  static NoiseStatistics relative(const Eigen::MatrixXd& voltage_covariance, double fraction);

  std::size_t dimension() const { return static_cast<std::size_t>(covariance.rows() / 2); }
  bool is_zero() const;
  bool uncorrelated_across_buses() const;
  void validate() const;
};

struct SampleMetadata {
  std::uint64_t seed = 0;
  std::string grid_sha256;
  nlohmann::json noise = nlohmann::json::object();
};

struct VoltageSampleSet {
  /// n x 2N, one sample per row.
  Eigen::MatrixXd samples;
  std::vector<std::string> bus_order;
  SampleMetadata metadata;

  std::size_t size() const { return static_cast<std::size_t>(samples.rows()); }
};

/// Produces rows of i.i.d. voltage samples for a fixed model.
class VoltageSampler {
 public:
  VoltageSampler(const LaplacianPair& laplacians, const InjectionStatistics& stats);

  /// Rows [first, first + count) of the stream for `seed`.
  Eigen::MatrixXd draw(std::uint64_t seed, std::size_t first, std::size_t count) const;
  std::size_t width() const { return static_cast<std::size_t>(transfer_.rows()); }
  const std::vector<std::string>& bus_order() const { return bus_order_; }

 private:
  // voltages = transfer_ * z with z standard normal
  Eigen::MatrixXd transfer_;
  std::vector<std::string> bus_order_;
};

/// Zero-mean Gaussian rows with a given (possibly singular) covariance.
class NoiseSampler {
 public:
  explicit NoiseSampler(const NoiseStatistics& noise);

  Eigen::MatrixXd draw(std::uint64_t seed, std::size_t first, std::size_t count) const;
  bool is_zero() const { return zero_; }

 private:
  Eigen::MatrixXd factor_;
  bool zero_ = false;
};

VoltageSampleSet sample_voltages(const LaplacianPair& laplacians, const InjectionStatistics& stats, std::size_t n,
                                 std::uint64_t seed);

/// Copy of `samples` plus independent noise; the input is left untouched.
VoltageSampleSet add_noise(const VoltageSampleSet& samples, const NoiseStatistics& noise, std::uint64_t seed);

/// H^-1 Sigma_(p,q) H^-1.
Eigen::MatrixXd analytic_voltage_covariance(const LaplacianPair& laplacians, const InjectionStatistics& stats);

enum class Centering { None, Mean, Difference };

/// CSV with header v_<bus>..., theta_<bus>...; column order must match `grid`.
VoltageSampleSet import_samples(const std::filesystem::path& path, const GridGraph& grid,
                                Centering centering = Centering::Mean);
void export_samples(const VoltageSampleSet& samples, const std::filesystem::path& path);
/// Sidecar JSON {"seed", "grid_sha256", "noise"}.
void export_sample_metadata(const SampleMetadata& metadata, const std::filesystem::path& path);

std::vector<std::string> voltage_column_names(const std::vector<std::string>& bus_order);

/// Reads a numeric CSV with a header row; the header is returned separately.
Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& path, std::vector<std::string>* header);
void write_csv_matrix(const Eigen::MatrixXd& m, const std::vector<std::string>& header,
                      const std::filesystem::path& path);

}  // namespace gridgm
