/**
 * @file topology.hpp
 * @brief Grid topology from a voltage concentration matrix.
 *
 * Two learners are provided. learn_neighborhood thresholds |J_vv| into a
 * hybrid graph (true lines plus two-hop pairs) and separates the two by local
 * neighbourhood structure; it is exact for grids whose minimum cycle length
 * exceeds six and that have at least three non-leaf buses. learn_sign_rule
 * keeps the pairs with J_vv + J_thth strongly negative and is exact for
 * triangle-free grids.
 *
 * Both learners work on the non-reference buses, so lines incident to the
 * reference bus are never recovered and are excluded when scoring.
 */
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gridgm/estimator.hpp"
#include "gridgm/grid.hpp"

namespace gridgm {

struct HybridGraph {
  std::size_t nodes = 0;
  std::set<Edge> edges;
  double threshold = 0.0;

  bool has(std::size_t a, std::size_t b) const { return a != b && edges.count(make_edge(a, b)) > 0; }
  std::vector<std::vector<std::size_t>> adjacency() const;
};

/// Edge (i, j) iff |J_vv(i, j)| > tau1, i != j.
HybridGraph build_hybrid(const ConcentrationMatrix& j, double tau1);

/// First pair (k, l), in lexicographic order, with k and l both adjacent to
/// i and to j in the hybrid graph, k, l not in {i, j}, and (k, l) absent.
std::optional<std::pair<std::size_t, std::size_t>> find_separation_witness(const HybridGraph& hybrid, std::size_t i,
                                                                           std::size_t j);

enum class NodeClass { Leaf, NonLeaf, Unresolved };
enum class LearningAlgorithm { NeighborhoodSearch, SignRule };

std::string to_string(NodeClass c);
std::string to_string(LearningAlgorithm a);
LearningAlgorithm parse_learning_algorithm(const std::string& name);

struct TopologyEstimate {
  std::set<Edge> edges;
  std::vector<NodeClass> node_class;
  std::vector<std::string> bus_order;
  LearningAlgorithm algorithm = LearningAlgorithm::SignRule;
  std::map<std::string, double> thresholds;
};

TopologyEstimate learn_neighborhood(const ConcentrationMatrix& j, double tau1);
TopologyEstimate learn_sign_rule(const ConcentrationMatrix& j, double tau2);

/// (false lines + missed lines) / max(1, number of scored true lines), where
/// the scored lines are those between non-reference buses.
double score(const TopologyEstimate& estimate, const GridGraph& truth);
double score_edges(const std::set<Edge>& estimate, const std::set<Edge>& truth);

/**
 * Threshold at the largest relative gap of a magnitude curve: with the
 * positive magnitudes sorted descending (m_0 >= m_1 >= ...) and restricted
 * to those above 1e-4 * m_0, picks the k maximizing m_k / m_{k+1} and
 * returns sqrt(m_k * m_{k+1}). A single magnitude m gives m / 2.
 */
double gap_threshold(std::vector<double> magnitudes);

/// Data-only defaults: gap_threshold over off-diagonal |J_vv|, and over the
/// magnitudes of the negative off-diagonal J_vv + J_thth.
double data_tau1(const ConcentrationMatrix& j);
double data_tau2(const ConcentrationMatrix& j);

enum class SquareRootBranch { Principal, SignResolved };

struct RecoveredLine {
  std::string from;
  /// Empty when the line runs to the reference bus.
  std::string to;
  double g = 0.0;
  double beta = 0.0;
};

struct RecoveredParameters {
  Eigen::MatrixXd h_composite;
  Eigen::MatrixXd h_g;
  Eigen::MatrixXd h_beta;
  std::vector<RecoveredLine> lines;
  /// Largest of ||R - P(R)||_F / ||R||_F, P the projection onto
  /// [[A, B], [B, -A]], and the relative norm of the entries of A and B that
  /// break the Laplacian sign pattern (positive off-diagonals, negative row
  /// sums).
  double residual = 0.0;
  /// Block-structure defect of the principal square root.
  double principal_residual = 0.0;
  SquareRootBranch branch = SquareRootBranch::Principal;
  /// False when the block-structure constraints admit more than one sign
  /// pattern, as happens when the injection covariance commutes with the
  /// [v, theta] rotation (equal p and q variances, no p-q covariance).
  bool identifiable = true;
};

/// Default acceptance level for the block-structure residual.
inline constexpr double kRecoveryResidualTolerance = 1e-6;

/**
 * Line admittances from voltage and injection covariances via
 * H = S^{1/2} sqrt(S^{-1/2} Sigma_v^{-1} S^{-1/2}) S^{1/2}, S the injection
 * covariance.
 *
 * The principal square root is tried first. Since H itself is indefinite,
 * that branch typically fails the [[H_g, H_b], [H_b, -H_g]] block structure;
 * in that case the eigenvalue signs of the inner root are chosen as the null
 * vector of the linear block-structure constraints (global sign fixed by
 * positive H_g, H_b diagonals). Both residuals are reported; nothing is
 * asserted about exactness.
 *
 * With per-bus statistics that treat p and q alike the inner eigenvalues come
 * in equal pairs and the matrix is not recoverable from covariances alone;
 * `identifiable` is then false.
 *
 * Lines are read off entries whose magnitude exceeds line_floor times the
 * largest |H| entry.
 */
RecoveredParameters recover_parameters(const Eigen::MatrixXd& voltage_cov, const Eigen::MatrixXd& injection_cov,
                                       std::vector<std::string> bus_order = {}, double line_floor = 1e-6);

}  // namespace gridgm
