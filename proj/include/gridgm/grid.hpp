/**
 * @file grid.hpp
 * @brief Bus/line graph of a distribution grid, line admittances and the
 *        reduced weighted Laplacians of the linear coupled power flow model.
 */
#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

namespace gridgm {

/// Undirected pair of indices, always stored with first < second.
using Edge = std::pair<std::size_t, std::size_t>;

inline Edge make_edge(std::size_t a, std::size_t b) { return a < b ? Edge{a, b} : Edge{b, a}; }

/// Line as given in a grid file: endpoints by bus identifier, per-unit impedance.
struct LineSpec {
  std::string from;
  std::string to;
  double r = 0.0;
  double x = 0.0;
};

/// Line stored by bus index (into GridGraph::buses()).
struct Line {
  std::size_t from = 0;
  std::size_t to = 0;
  double r = 0.0;
  double x = 0.0;
};

struct LineAdmittance {
  double g = 0.0;
  double beta = 0.0;
};

/// g + i*beta = 1 / (r - i*x). Throws ValidationError when r = x = 0.
LineAdmittance admittance(double r, double x);

/**
 * Connected, simple, undirected grid graph with a designated reference bus.
 *
 * Immutable once constructed; the constructor validates every invariant and
 * throws ValidationError otherwise. Bus order is the order given at
 * construction, and the non-reference ordering is that order with the
 * reference removed.
 */
class GridGraph {
 public:
  GridGraph(std::vector<std::string> buses, std::string reference, const std::vector<LineSpec>& lines);

  const std::vector<std::string>& buses() const { return buses_; }
  const std::string& reference() const { return buses_[reference_]; }
  std::size_t reference_index() const { return reference_; }
  const std::vector<Line>& lines() const { return lines_; }

  std::size_t num_buses() const { return buses_.size(); }
  /// Number of non-reference buses (the N of the 2N-dimensional voltage vector).
  std::size_t dimension() const { return buses_.size() - 1; }

  std::size_t index_of(std::string_view bus) const;
  bool has_bus(std::string_view bus) const;
  std::optional<std::size_t> find_line(std::size_t a, std::size_t b) const;

  /// Non-reference bus identifiers in model order.
  std::vector<std::string> non_reference_buses() const;
  /// Model position (0..N-1) of a bus index, or nullopt for the reference.
  std::optional<std::size_t> reduced_index(std::size_t bus) const;
  /// Bus index for a model position.
  std::size_t bus_index(std::size_t reduced) const;

  /// Neighbour lists over the full graph, indexed like buses().
  const std::vector<std::vector<std::size_t>>& adjacency() const { return adjacency_; }

  /// Lines between two non-reference buses, as model-position edges. This is
  /// the edge set that voltage statistics can reveal.
  std::set<Edge> observable_edges() const;

  std::vector<LineSpec> line_specs() const;

 private:
  std::vector<std::string> buses_;
  std::size_t reference_ = 0;
  std::vector<Line> lines_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

GridGraph grid_from_json(const nlohmann::json& doc);
nlohmann::json grid_to_json(const GridGraph& grid);
GridGraph load_grid(const std::filesystem::path& path);
void save_grid(const GridGraph& grid, const std::filesystem::path& path);
/// Hex SHA-256 of the canonical JSON serialization.
std::string grid_sha256(const GridGraph& grid);

/// Reduced weighted Laplacians H_g, H_beta and the composite
/// [[H_g, H_beta], [H_beta, -H_g]].
struct LaplacianPair {
  Eigen::MatrixXd h_g;
  Eigen::MatrixXd h_beta;
  Eigen::MatrixXd composite;
  std::vector<std::string> bus_order;

  std::size_t dimension() const { return bus_order.size(); }
};

LaplacianPair reduced_laplacians(const GridGraph& grid);

inline constexpr std::size_t kInfiniteCycle = std::numeric_limits<std::size_t>::max();

struct StructureReport {
  /// kInfiniteCycle for a tree.
  std::size_t min_cycle_length = kInfiniteCycle;
  std::set<std::string> leaves;
  std::set<std::string> non_leaves;
  /// Non-reference bus -> buses at distance exactly two, measured on the
  /// graph with the reference bus deleted.
  std::map<std::string, std::set<std::string>> two_hop;

  bool is_tree() const { return min_cycle_length == kInfiniteCycle; }
};

StructureReport structure_report(const GridGraph& grid);

/// Girth of an undirected simple graph given by adjacency lists.
std::size_t girth(const std::vector<std::vector<std::size_t>>& adjacency);

/// Unweighted shortest-path distances from `source`; unreachable entries hold
/// std::numeric_limits<std::size_t>::max().
std::vector<std::size_t> bfs_distances(const std::vector<std::vector<std::size_t>>& adjacency, std::size_t source);

/// Adjacency of the graph obtained by deleting the reference bus, indexed by
/// model position.
std::vector<std::vector<std::size_t>> reduced_adjacency(const GridGraph& grid);

enum class LineEventKind { Add, Remove };

struct LineEvent {
  LineEventKind kind = LineEventKind::Add;
  LineSpec line;
};

/// Grid differing from `grid` in exactly the one line named by `event`.
GridGraph apply_line_event(const GridGraph& grid, const LineEvent& event);

/// The single line event turning `before` into `after`; ValidationError when
/// the grids differ in zero or several lines or have different bus sets.
LineEvent diff_single_line(const GridGraph& before, const GridGraph& after);

}  // namespace gridgm
