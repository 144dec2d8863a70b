#include "gridgm/topology.hpp"

#include <algorithm>
#include <cmath>

#include "gridgm/error.hpp"

namespace gridgm {

std::vector<std::vector<std::size_t>> HybridGraph::adjacency() const {
  std::vector<std::vector<std::size_t>> adj(nodes);
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());
  return adj;
}

HybridGraph build_hybrid(const ConcentrationMatrix& j, double tau1) {
  if (!(tau1 >= 0.0)) throw ValidationError("tau1 must be non-negative");
  const Eigen::MatrixXd vv = j.vv();
  HybridGraph g;
  g.nodes = static_cast<std::size_t>(vv.rows());
  g.threshold = tau1;
  for (Eigen::Index a = 0; a < vv.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < vv.cols(); ++b) {
      if (std::abs(vv(a, b)) > tau1) g.edges.insert({static_cast<std::size_t>(a), static_cast<std::size_t>(b)});
    }
  }
  return g;
}

std::optional<std::pair<std::size_t, std::size_t>> find_separation_witness(const HybridGraph& hybrid, std::size_t i,
                                                                           std::size_t j) {
  std::vector<std::size_t> common;
  for (std::size_t k = 0; k < hybrid.nodes; ++k) {
    if (k != i && k != j && hybrid.has(k, i) && hybrid.has(k, j)) common.push_back(k);
  }
  for (std::size_t a = 0; a < common.size(); ++a) {
    for (std::size_t b = a + 1; b < common.size(); ++b) {
      if (!hybrid.has(common[a], common[b])) return std::pair{common[a], common[b]};
    }
  }
  return std::nullopt;
}

std::string to_string(NodeClass c) {
  switch (c) {
    case NodeClass::Leaf:
      return "leaf";
    case NodeClass::NonLeaf:
      return "non_leaf";
    case NodeClass::Unresolved:
      return "unresolved";
  }
  return "unknown";
}

std::string to_string(LearningAlgorithm a) {
  return a == LearningAlgorithm::NeighborhoodSearch ? "neighborhood" : "sign";
}

LearningAlgorithm parse_learning_algorithm(const std::string& name) {
  if (name == "neighborhood") return LearningAlgorithm::NeighborhoodSearch;
  if (name == "sign") return LearningAlgorithm::SignRule;
  throw ValidationError("unknown algorithm '" + name + "' (expected neighborhood|sign)");
}

TopologyEstimate learn_neighborhood(const ConcentrationMatrix& j, double tau1) {
  const HybridGraph hybrid = build_hybrid(j, tau1);
  const std::size_t n = hybrid.nodes;

  TopologyEstimate est;
  est.bus_order = j.bus_order;
  est.algorithm = LearningAlgorithm::NeighborhoodSearch;
  est.thresholds["tau1"] = tau1;
  est.node_class.assign(n, NodeClass::Unresolved);

  // Lines between non-leaf buses.
  std::vector<bool> non_leaf(n, false);
  for (const auto& [a, b] : hybrid.edges) {
    if (find_separation_witness(hybrid, a, b)) {
      est.edges.insert({a, b});
      non_leaf[a] = non_leaf[b] = true;
    }
  }
  std::vector<std::set<std::size_t>> non_leaf_nbrs(n);
  for (const auto& [a, b] : est.edges) {
    non_leaf_nbrs[a].insert(b);
    non_leaf_nbrs[b].insert(a);
  }

  // Parents of the remaining buses: i is the parent of leaf c iff the non-leaf
  // neighbours of i in the grid are the non-leaf hybrid neighbours of c other
  // than i itself.
  const auto adj = hybrid.adjacency();
  std::vector<std::pair<std::size_t, std::size_t>> leaf_lines;
  for (std::size_t c = 0; c < n; ++c) {
    if (non_leaf[c]) continue;
    std::set<std::size_t> hybrid_non_leaf;
    for (const auto k : adj[c]) {
      if (non_leaf[k]) hybrid_non_leaf.insert(k);
    }
    for (const auto i : adj[c]) {
      if (!non_leaf[i]) continue;
      std::set<std::size_t> others = hybrid_non_leaf;
      others.erase(i);
      if (others == non_leaf_nbrs[i]) leaf_lines.emplace_back(i, c);
    }
  }
  for (const auto& [i, c] : leaf_lines) {
    est.edges.insert(make_edge(i, c));
    est.node_class[c] = NodeClass::Leaf;
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (non_leaf[k]) est.node_class[k] = NodeClass::NonLeaf;
  }
  return est;
}

TopologyEstimate learn_sign_rule(const ConcentrationMatrix& j, double tau2) {
  if (!(tau2 >= 0.0)) throw ValidationError("tau2 must be non-negative");
  const Eigen::MatrixXd sum = j.vv() + j.thetatheta();
  TopologyEstimate est;
  est.bus_order = j.bus_order;
  est.algorithm = LearningAlgorithm::SignRule;
  est.thresholds["tau2"] = tau2;
  est.node_class.assign(static_cast<std::size_t>(sum.rows()), NodeClass::Unresolved);
  for (Eigen::Index a = 0; a < sum.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < sum.cols(); ++b) {
      if (sum(a, b) < -tau2) est.edges.insert({static_cast<std::size_t>(a), static_cast<std::size_t>(b)});
    }
  }
  return est;
}

double score_edges(const std::set<Edge>& estimate, const std::set<Edge>& truth) {
  std::size_t errors = 0;
  for (const auto& e : estimate) errors += truth.count(e) ? 0 : 1;
  for (const auto& e : truth) errors += estimate.count(e) ? 0 : 1;
  return static_cast<double>(errors) / static_cast<double>(std::max<std::size_t>(1, truth.size()));
}

double score(const TopologyEstimate& estimate, const GridGraph& truth) {
  if (estimate.bus_order != truth.non_reference_buses()) {
    throw ValidationError("estimate and ground truth cover different buses");
  }
  return score_edges(estimate.edges, truth.observable_edges());
}

double gap_threshold(std::vector<double> magnitudes) {
  magnitudes.erase(std::remove_if(magnitudes.begin(), magnitudes.end(), [](double m) { return !(m > 0.0); }),
                   magnitudes.end());
  if (magnitudes.empty()) throw NumericalError("no positive magnitudes to threshold");
  std::sort(magnitudes.begin(), magnitudes.end(), std::greater<>());
  const double cutoff = 1e-4 * magnitudes.front();
  magnitudes.erase(std::remove_if(magnitudes.begin(), magnitudes.end(), [&](double m) { return m < cutoff; }),
                   magnitudes.end());
  if (magnitudes.size() == 1) return magnitudes.front() / 2.0;
  std::size_t best = 0;
  double best_ratio = 0.0;
  for (std::size_t k = 0; k + 1 < magnitudes.size(); ++k) {
    const double ratio = magnitudes[k] / magnitudes[k + 1];
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = k;
    }
  }
  if (best_ratio <= 1.0) return magnitudes.back() / 2.0;
  return std::sqrt(magnitudes[best] * magnitudes[best + 1]);
}

double data_tau1(const ConcentrationMatrix& j) {
  const Eigen::MatrixXd vv = j.vv();
  std::vector<double> mags;
  for (Eigen::Index a = 0; a < vv.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < vv.cols(); ++b) mags.push_back(std::abs(vv(a, b)));
  }
  return gap_threshold(std::move(mags));
}

double data_tau2(const ConcentrationMatrix& j) {
  const Eigen::MatrixXd sum = j.vv() + j.thetatheta();
  std::vector<double> mags;
  for (Eigen::Index a = 0; a < sum.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < sum.cols(); ++b) {
      if (sum(a, b) < 0.0) mags.push_back(-sum(a, b));
    }
  }
  return gap_threshold(std::move(mags));
}

}  // namespace gridgm
