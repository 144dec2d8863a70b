/**
 * @file estimator.hpp
 * @brief Concentration (inverse covariance) matrices of voltage
 *        fluctuations: empirical estimates, the closed-form matrix of the
 *        linear model, and the effect of measurement noise on it.
 */
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridgm/grid.hpp"
#include "gridgm/sampler.hpp"

namespace gridgm {

/// Entries with |x| <= kZeroFloor * max|block| count as structural zeros.
inline constexpr double kZeroFloor = 1e-10;

enum class Provenance { Analytic, DirectInverse, GraphicalLasso };

std::string to_string(Provenance p);

/// 2N x 2N symmetric matrix over [v, theta] with named N x N blocks.
struct ConcentrationMatrix {
  Eigen::MatrixXd j;
  std::vector<std::string> bus_order;
  Provenance provenance = Provenance::Analytic;
  double lambda = 0.0;
  double tol = 0.0;
  std::size_t iterations = 0;
  double gap = 0.0;
  double ridge = 0.0;

  Eigen::Index dimension() const { return j.rows() / 2; }
  Eigen::MatrixXd vv() const { return j.topLeftCorner(dimension(), dimension()); }
  Eigen::MatrixXd vtheta() const { return j.topRightCorner(dimension(), dimension()); }
  Eigen::MatrixXd thetav() const { return j.bottomLeftCorner(dimension(), dimension()); }
  Eigen::MatrixXd thetatheta() const { return j.bottomRightCorner(dimension(), dimension()); }
};

/// Unbiased centered sample covariance of the rows of `samples`; requires at
/// least two rows. The result is exactly symmetric.
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& samples);
Eigen::MatrixXd sample_covariance(const VoltageSampleSet& samples);

/// Streaming version of sample_covariance for sample sets that are produced
/// in chunks and never held in memory at once.
class CovarianceAccumulator {
 public:
  explicit CovarianceAccumulator(Eigen::Index width);

  void add(const Eigen::MatrixXd& rows);
  std::size_t count() const { return count_; }
  Eigen::MatrixXd covariance() const;

 private:
  Eigen::VectorXd sum_;
  Eigen::MatrixXd cross_;
  std::size_t count_ = 0;
};

/// Ridge applied by default before direct inversion:
/// 1e-8 * trace(cov) / dim when n < 2 * dim (fewer than 4N samples), else 0.
double default_ridge(const Eigen::MatrixXd& cov, std::size_t samples);

/// (cov + ridge I)^-1, symmetrized. NumericalError when the regularized
/// matrix has condition number above 1e12.
ConcentrationMatrix direct_concentration(const Eigen::MatrixXd& cov, double ridge,
                                         std::vector<std::string> bus_order = {});

struct GlassoOptions {
  double lambda = 0.0;
  /// Convergence when the largest change in the working covariance over a
  /// full sweep drops below tol * mean|diag(cov)|, or when the duality gap
  /// drops below tol.
  double tol = 1e-6;
  std::size_t max_iter = 500;
};

/**
 * Graphical lasso: argmin_S  -log det S + <S, cov> + lambda * sum_{i!=j} |S_ij|.
 *
 * Block coordinate descent over columns of the working covariance W (whose
 * diagonal stays at diag(cov) because the diagonal is unpenalized), each
 * column update being an l1-regularized quadratic solved by cyclic
 * coordinate descent. Columns are visited in index order every sweep.
 * Throws NumericalError on non-convergence (message carries the final gap)
 * or when lambda = 0 and cov is singular.
 */
ConcentrationMatrix graphical_lasso(const Eigen::MatrixXd& cov, const GlassoOptions& options,
                                    std::vector<std::string> bus_order = {});

/// Runs graphical_lasso on the correlation matrix of `cov` and rescales the
/// result back to the covariance's units.
ConcentrationMatrix graphical_lasso_standardized(const Eigen::MatrixXd& cov, const GlassoOptions& options,
                                                 std::vector<std::string> bus_order = {});

/// -log det S + <S, cov> + lambda * sum_{i!=j} |S_ij| (infinite if S is not PD).
double glasso_objective(const Eigen::MatrixXd& s, const Eigen::MatrixXd& cov, double lambda);

/// c * sqrt(log(dim) / n).
double default_glasso_lambda(Eigen::Index dim, std::size_t samples, double c = 0.5);

/**
 * Closed-form concentration matrix of the linear model. With block-diagonal
 * injection statistics the four blocks are assembled from H_g, H_beta and the
 * per-bus injection moments (D = |sigma_pp sigma_qq - sigma_pq^2|):
 *
 *   J_vv   = H_g D^-1 (S_qq H_g - S_pq H_b) - H_b D^-1 (S_pq H_g - S_pp H_b)
 *   J_vth  = H_g D^-1 (S_qq H_b + S_pq H_g) - H_b D^-1 (S_pq H_b + S_pp H_g)
 *   J_thv  = H_b D^-1 (S_qq H_g - S_pq H_b) + H_g D^-1 (S_pq H_g - S_pp H_b)
 *   J_thth = H_b D^-1 (S_qq H_b + S_pq H_g) + H_g D^-1 (S_pq H_b + S_pp H_g)
 *
 * A precision perturbation Delta adds H Delta H on top.
 */
ConcentrationMatrix analytic_concentration(const LaplacianPair& laplacians, const InjectionStatistics& stats);

/// Bounds on max |Delta Sigma^-1| caused by additive measurement noise.
struct DeviationBound {
  /// lambda_max(noise) * (lambda_max(H^2) / lambda_min(Sigma_pq))^2
  double value = 0.0;
  double lambda_max_noise = 0.0;
  double lambda_max_h2 = 0.0;
  double lambda_min_injection = 0.0;

  /// Intermediate steps of the bound for positive definite noise:
  /// lambda_max(J)^2 / lambda_min(noise^-1 + J), then
  /// (lambda_max(H^2) lambda_max(Sigma_pq^-1))^2 / lambda_min(noise^-1).
  std::optional<double> spectral_step;
  std::optional<double> injection_step;

  /// Per-bus form, for noise uncorrelated across buses and block-diagonal
  /// injections: 2 lambda_max(H^2)^2 max_i sigma_n^i / min_i (sigma_pq^i)^2.
  std::optional<double> per_bus;
  std::optional<double> max_sigma_n;
  std::optional<double> min_sigma_pq;
  /// Further specialization when sigma_pq = 0 and sigma_{n_v n_theta} = 0.
  std::optional<double> per_bus_diagonal;
};

DeviationBound noise_deviation_bound(const LaplacianPair& laplacians, const InjectionStatistics& stats,
                                     const NoiseStatistics& noise);

/// (Sigma + noise)^-1 - Sigma^-1 by direct inversion.
Eigen::MatrixXd noise_deviation_exact(const Eigen::MatrixXd& voltage_cov, const Eigen::MatrixXd& noise_cov);

/// -J (noise^-1 + J)^-1 J for J = Sigma^-1; needs positive definite noise.
Eigen::MatrixXd noise_deviation_woodbury(const Eigen::MatrixXd& concentration, const Eigen::MatrixXd& noise_cov);

/// Per-bus noise spread sigma_n^i = a + b + sqrt((a - b)^2 + 4 c^2) for the
/// block [[a, c], [c, b]]; likewise sigma_pq^i uses the minus sign.
Eigen::VectorXd per_bus_noise_spread(const Eigen::MatrixXd& noise_cov);
Eigen::VectorXd per_bus_injection_spread(const InjectionStatistics& stats);

struct GammaThresholds {
  /// Smallest non-zero off-diagonal |J_vv|.
  double gamma1 = 0.0;
  /// Smallest |J_vv + J_thth| among strictly negative off-diagonal sums.
  double gamma2 = 0.0;
};

/// Requires an Analytic matrix. NumericalError when no off-diagonal entry
/// clears the zero floor.
GammaThresholds gamma_thresholds(const ConcentrationMatrix& analytic);

}  // namespace gridgm
