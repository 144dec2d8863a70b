#include "gridgm/grid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <queue>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "gridgm/error.hpp"

namespace gridgm {

namespace {

constexpr std::size_t kUnreached = std::numeric_limits<std::size_t>::max();

bool connected(const std::vector<std::vector<std::size_t>>& adjacency) {
  if (adjacency.empty()) return true;
  const auto dist = bfs_distances(adjacency, 0);
  return std::none_of(dist.begin(), dist.end(), [](std::size_t d) { return d == kUnreached; });
}

}  // namespace

LineAdmittance admittance(double r, double x) {
  const double mag2 = r * r + x * x;
  if (!(mag2 > 0.0) || !std::isfinite(mag2)) {
    throw ValidationError("line impedance must be finite and non-zero");
  }
  return {r / mag2, x / mag2};
}

GridGraph::GridGraph(std::vector<std::string> buses, std::string reference, const std::vector<LineSpec>& lines)
    : buses_(std::move(buses)) {
  if (buses_.size() < 2) throw ValidationError("grid needs a reference bus and at least one other bus");
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (buses_[i].empty()) throw ValidationError("empty bus identifier");
    if (!index_.emplace(buses_[i], i).second) throw ValidationError("duplicate bus '" + buses_[i] + "'");
  }
  const auto ref = index_.find(reference);
  if (ref == index_.end()) throw ValidationError("reference bus '" + reference + "' is not in the bus list");
  reference_ = ref->second;

  adjacency_.assign(buses_.size(), {});
  std::set<Edge> seen;
  lines_.reserve(lines.size());
  for (const auto& spec : lines) {
    const auto a = index_.find(spec.from);
    const auto b = index_.find(spec.to);
    if (a == index_.end() || b == index_.end()) {
      throw ValidationError("line " + spec.from + "-" + spec.to + " references an unknown bus");
    }
    if (a->second == b->second) throw ValidationError("self-loop at bus '" + spec.from + "'");
    if (!std::isfinite(spec.r) || !std::isfinite(spec.x) || spec.r * spec.r + spec.x * spec.x <= 0.0) {
      throw ValidationError("line " + spec.from + "-" + spec.to + " has zero impedance");
    }
    if (!seen.insert(make_edge(a->second, b->second)).second) {
      throw ValidationError("parallel line " + spec.from + "-" + spec.to);
    }
    lines_.push_back({a->second, b->second, spec.r, spec.x});
    adjacency_[a->second].push_back(b->second);
    adjacency_[b->second].push_back(a->second);
  }
  for (auto& nbrs : adjacency_) std::sort(nbrs.begin(), nbrs.end());
  if (!connected(adjacency_)) throw ValidationError("grid is not connected");
}

std::size_t GridGraph::index_of(std::string_view bus) const {
  const auto it = index_.find(bus);
  if (it == index_.end()) throw ValidationError("unknown bus '" + std::string(bus) + "'");
  return it->second;
}

bool GridGraph::has_bus(std::string_view bus) const { return index_.find(bus) != index_.end(); }

std::optional<std::size_t> GridGraph::find_line(std::size_t a, std::size_t b) const {
  const Edge e = make_edge(a, b);
  for (std::size_t k = 0; k < lines_.size(); ++k) {
    if (make_edge(lines_[k].from, lines_[k].to) == e) return k;
  }
  return std::nullopt;
}

std::vector<std::string> GridGraph::non_reference_buses() const {
  std::vector<std::string> out;
  out.reserve(dimension());
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (i != reference_) out.push_back(buses_[i]);
  }
  return out;
}

std::optional<std::size_t> GridGraph::reduced_index(std::size_t bus) const {
  if (bus == reference_) return std::nullopt;
  return bus < reference_ ? bus : bus - 1;
}

std::size_t GridGraph::bus_index(std::size_t reduced) const { return reduced < reference_ ? reduced : reduced + 1; }

std::set<Edge> GridGraph::observable_edges() const {
  std::set<Edge> out;
  for (const auto& line : lines_) {
    const auto a = reduced_index(line.from);
    const auto b = reduced_index(line.to);
    if (a && b) out.insert(make_edge(*a, *b));
  }
  return out;
}

std::vector<LineSpec> GridGraph::line_specs() const {
  std::vector<LineSpec> out;
  out.reserve(lines_.size());
  for (const auto& line : lines_) out.push_back({buses_[line.from], buses_[line.to], line.r, line.x});
  return out;
}

GridGraph grid_from_json(const nlohmann::json& doc) {
  try {
    std::vector<std::string> buses = doc.at("buses").get<std::vector<std::string>>();
    std::string reference = doc.at("reference").get<std::string>();
    std::vector<LineSpec> lines;
    for (const auto& l : doc.at("lines")) {
      lines.push_back({l.at("from").get<std::string>(), l.at("to").get<std::string>(), l.at("r").get<double>(),
                       l.at("x").get<double>()});
    }
    return GridGraph(std::move(buses), std::move(reference), lines);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed grid description: ") + e.what());
  }
}

nlohmann::json grid_to_json(const GridGraph& grid) {
  nlohmann::json lines = nlohmann::json::array();
  for (const auto& l : grid.line_specs()) {
    lines.push_back({{"from", l.from}, {"to", l.to}, {"r", l.r}, {"x", l.x}});
  }
  return {{"buses", grid.buses()}, {"reference", grid.reference()}, {"lines", lines}};
}

GridGraph load_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open grid file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("cannot parse grid file " + path.string() + ": " + e.what());
  }
  return grid_from_json(doc);
}

void save_grid(const GridGraph& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write grid file " + path.string());
  out << grid_to_json(grid).dump(2) << '\n';
}

std::string grid_sha256(const GridGraph& grid) {
  const std::string text = grid_to_json(grid).dump();
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw NumericalError("sha256 digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

LaplacianPair reduced_laplacians(const GridGraph& grid) {
  const auto n = static_cast<Eigen::Index>(grid.dimension());
  LaplacianPair out;
  out.h_g = Eigen::MatrixXd::Zero(n, n);
  out.h_beta = Eigen::MatrixXd::Zero(n, n);
  out.bus_order = grid.non_reference_buses();

  for (const auto& line : grid.lines()) {
    const auto y = admittance(line.r, line.x);
    const auto a = grid.reduced_index(line.from);
    const auto b = grid.reduced_index(line.to);
    if (a) {
      out.h_g(*a, *a) += y.g;
      out.h_beta(*a, *a) += y.beta;
    }
    if (b) {
      out.h_g(*b, *b) += y.g;
      out.h_beta(*b, *b) += y.beta;
    }
    if (a && b) {
      out.h_g(*a, *b) -= y.g;
      out.h_g(*b, *a) -= y.g;
      out.h_beta(*a, *b) -= y.beta;
      out.h_beta(*b, *a) -= y.beta;
    }
  }

  out.composite.resize(2 * n, 2 * n);
  out.composite << out.h_g, out.h_beta, out.h_beta, -out.h_g;
  return out;
}

std::vector<std::size_t> bfs_distances(const std::vector<std::vector<std::size_t>>& adjacency, std::size_t source) {
  std::vector<std::size_t> dist(adjacency.size(), kUnreached);
  std::queue<std::size_t> queue;
  dist[source] = 0;
  queue.push(source);
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop();
    for (const auto w : adjacency[u]) {
      if (dist[w] == kUnreached) {
        dist[w] = dist[u] + 1;
        queue.push(w);
      }
    }
  }
  return dist;
}

std::size_t girth(const std::vector<std::vector<std::size_t>>& adjacency) {
  // BFS from every root; a non-tree edge (u, w) closes a walk of length
  // dist[u] + dist[w] + 1, and the minimum over all roots is exact.
  std::size_t best = kInfiniteCycle;
  const std::size_t n = adjacency.size();
  std::vector<std::size_t> dist(n);
  std::vector<std::size_t> parent(n);
  for (std::size_t root = 0; root < n; ++root) {
    std::fill(dist.begin(), dist.end(), kUnreached);
    std::fill(parent.begin(), parent.end(), kUnreached);
    std::queue<std::size_t> queue;
    dist[root] = 0;
    queue.push(root);
    while (!queue.empty()) {
      const auto u = queue.front();
      queue.pop();
      if (best != kInfiniteCycle && 2 * dist[u] + 1 >= best) break;
      for (const auto w : adjacency[u]) {
        if (dist[w] == kUnreached) {
          dist[w] = dist[u] + 1;
          parent[w] = u;
          queue.push(w);
        } else if (parent[u] != w) {
          best = std::min(best, dist[u] + dist[w] + 1);
        }
      }
    }
  }
  return best;
}

std::vector<std::vector<std::size_t>> reduced_adjacency(const GridGraph& grid) {
  std::vector<std::vector<std::size_t>> adj(grid.dimension());
  for (const auto& [a, b] : grid.observable_edges()) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());
  return adj;
}

StructureReport structure_report(const GridGraph& grid) {
  StructureReport report;
  report.min_cycle_length = girth(grid.adjacency());
  for (std::size_t i = 0; i < grid.num_buses(); ++i) {
    (grid.adjacency()[i].size() == 1 ? report.leaves : report.non_leaves).insert(grid.buses()[i]);
  }
  const auto adj = reduced_adjacency(grid);
  const auto names = grid.non_reference_buses();
  for (std::size_t i = 0; i < adj.size(); ++i) {
    auto& hop = report.two_hop[names[i]];
    const auto dist = bfs_distances(adj, i);
    for (std::size_t j = 0; j < adj.size(); ++j) {
      if (dist[j] == 2) hop.insert(names[j]);
    }
  }
  return report;
}

GridGraph apply_line_event(const GridGraph& grid, const LineEvent& event) {
  const auto a = grid.index_of(event.line.from);
  const auto b = grid.index_of(event.line.to);
  auto lines = grid.line_specs();
  const auto existing = grid.find_line(a, b);
  if (event.kind == LineEventKind::Add) {
    if (existing) throw ValidationError("line " + event.line.from + "-" + event.line.to + " already exists");
    lines.push_back(event.line);
  } else {
    if (!existing) throw ValidationError("line " + event.line.from + "-" + event.line.to + " does not exist");
    lines.erase(lines.begin() + static_cast<std::ptrdiff_t>(*existing));
  }
  try {
    return GridGraph(grid.buses(), grid.reference(), lines);
  } catch (const ValidationError& e) {
    throw ValidationError("line event rejected: " + std::string(e.what()));
  }
}

LineEvent diff_single_line(const GridGraph& before, const GridGraph& after) {
  if (before.buses() != after.buses() || before.reference() != after.reference()) {
    throw ValidationError("grids have different bus sets or references");
  }
  std::map<Edge, LineSpec> lhs;
  std::map<Edge, LineSpec> rhs;
  for (const auto& l : before.lines()) lhs[make_edge(l.from, l.to)] = {before.buses()[l.from], before.buses()[l.to], l.r, l.x};
  for (const auto& l : after.lines()) rhs[make_edge(l.from, l.to)] = {after.buses()[l.from], after.buses()[l.to], l.r, l.x};

  std::vector<LineEvent> events;
  for (const auto& [e, spec] : lhs) {
    const auto it = rhs.find(e);
    if (it == rhs.end()) {
      events.push_back({LineEventKind::Remove, spec});
    } else if (it->second.r != spec.r || it->second.x != spec.x) {
      throw ValidationError("line " + spec.from + "-" + spec.to + " changed impedance, not a line event");
    }
  }
  for (const auto& [e, spec] : rhs) {
    if (!lhs.count(e)) events.push_back({LineEventKind::Add, spec});
  }
  if (events.size() != 1) {
    throw ValidationError("grids differ in " + std::to_string(events.size()) + " lines, not a single-line event");
  }
  return events.front();
}

}  // namespace gridgm
