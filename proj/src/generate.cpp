#include "gridgm/generate.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include "gridgm/error.hpp"

namespace gridgm {

namespace {

struct Draft {
  std::size_t buses = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;

  std::vector<std::vector<std::size_t>> adjacency() const {
    std::vector<std::vector<std::size_t>> adj(buses);
    for (const auto& [a, b] : edges) {
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    return adj;
  }
};

Draft draw_tree(const GridSpec& spec, std::mt19937_64& rng) {
  Draft d;
  d.buses = spec.buses;
  if (spec.reference_is_leaf) {
    d.edges.emplace_back(0, 1);
    for (std::size_t i = 2; i < spec.buses; ++i) {
      const std::size_t parent = spec.kind == GridKind::Path ? i - 1 : std::uniform_int_distribution<std::size_t>(1, i - 1)(rng);
      d.edges.emplace_back(parent, i);
    }
  } else {
    for (std::size_t i = 1; i < spec.buses; ++i) {
      const std::size_t parent = spec.kind == GridKind::Path ? i - 1 : std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
      d.edges.emplace_back(parent, i);
    }
  }
  return d;
}

// Non-reference pairs whose current distance satisfies the predicate.
template <typename Pred>
std::vector<std::pair<std::size_t, std::size_t>> candidate_pairs(const Draft& d, Pred pred) {
  const auto adj = d.adjacency();
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t a = 1; a < d.buses; ++a) {
    const auto dist = bfs_distances(adj, a);
    for (std::size_t b = a + 1; b < d.buses; ++b) {
      if (pred(dist[b])) out.emplace_back(a, b);
    }
  }
  return out;
}

bool add_loops(Draft& d, const GridSpec& spec, std::mt19937_64& rng) {
  for (std::size_t k = 0; k < spec.loops; ++k) {
    auto pairs = spec.kind == GridKind::Meshed
                     ? candidate_pairs(d, [&](std::size_t dist) { return dist == spec.min_cycle - 1; })
                     : candidate_pairs(d, [](std::size_t dist) { return dist >= 2; });
    if (pairs.empty()) return false;
    d.edges.push_back(pairs[std::uniform_int_distribution<std::size_t>(0, pairs.size() - 1)(rng)]);
  }
  return true;
}

}  // namespace

GridKind parse_grid_kind(const std::string& name) {
  if (name == "path") return GridKind::Path;
  if (name == "tree") return GridKind::Tree;
  if (name == "meshed") return GridKind::Meshed;
  if (name == "random") return GridKind::Random;
  throw ValidationError("unknown grid kind '" + name + "' (expected path|tree|meshed|random)");
}

GridGraph generate_grid(const GridSpec& spec) {
  if (spec.buses < 2) throw ValidationError("a grid needs at least two buses");
  if (spec.r_min < 0 || spec.x_min < 0 || spec.r_max < spec.r_min || spec.x_max < spec.x_min ||
      spec.r_max + spec.x_max <= 0) {
    throw ValidationError("invalid impedance ranges");
  }
  if ((spec.kind == GridKind::Path || spec.kind == GridKind::Tree) && spec.loops != 0) {
    throw ValidationError("radial grids cannot have loops");
  }
  if (spec.kind == GridKind::Meshed) {
    if (spec.min_cycle < 3) throw ValidationError("minimum cycle length must be at least 3");
    if (spec.loops == 0) throw ValidationError("meshed grid needs at least one loop");
  }

  std::mt19937_64 rng(spec.seed);
  for (std::size_t attempt = 0; attempt < spec.max_attempts; ++attempt) {
    Draft d = draw_tree(spec, rng);
    if (!add_loops(d, spec, rng)) continue;
    if (spec.kind == GridKind::Meshed && girth(d.adjacency()) != spec.min_cycle) continue;

    std::uniform_real_distribution<double> r_dist(spec.r_min, spec.r_max);
    std::uniform_real_distribution<double> x_dist(spec.x_min, spec.x_max);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < d.buses; ++i) names.push_back(std::to_string(i));
    std::vector<LineSpec> lines;
    for (const auto& [a, b] : d.edges) {
      double r = r_dist(rng);
      double x = x_dist(rng);
      if (r * r + x * x <= 0.0) x = spec.x_max > 0 ? spec.x_max : 1.0;
      lines.push_back({names[a], names[b], r, x});
    }
    return GridGraph(names, names[0], lines);
  }
  throw ValidationError("could not generate a grid with the requested structure after " +
                        std::to_string(spec.max_attempts) + " attempts");
}

namespace {

constexpr double kCase33BaseKv = 12.66;
constexpr double kCase33BaseMva = 10.0;
constexpr double kCase33BaseOhm = kCase33BaseKv * kCase33BaseKv / kCase33BaseMva;

}  // namespace

GridGraph case33_analog() {
  struct Row {
    int from;
    int to;
    double r_ohm;
    double x_ohm;
  };
  static constexpr Row rows[] = {
      {1, 2, 0.0922, 0.0470},   {2, 3, 0.4930, 0.2511},   {3, 4, 0.3660, 0.1864},   {4, 5, 0.3811, 0.1941},
      {5, 6, 0.8190, 0.7070},   {6, 7, 0.1872, 0.6188},   {7, 8, 0.7114, 0.2351},   {8, 9, 1.0300, 0.7400},
      {9, 10, 1.0440, 0.7400},  {10, 11, 0.1966, 0.0650}, {11, 12, 0.3744, 0.1238}, {12, 13, 1.4680, 1.1550},
      {13, 14, 0.5416, 0.7129}, {14, 15, 0.5910, 0.5260}, {15, 16, 0.7463, 0.5450}, {16, 17, 1.2890, 1.7210},
      {17, 18, 0.7320, 0.5740}, {2, 19, 0.1640, 0.1565},  {19, 20, 1.5042, 1.3554}, {20, 21, 0.4095, 0.4784},
      {21, 22, 0.7089, 0.9373}, {3, 23, 0.4512, 0.3083},  {23, 24, 0.8980, 0.7091}, {24, 25, 0.8960, 0.7011},
      {6, 26, 0.2030, 0.1034},  {26, 27, 0.2842, 0.1447}, {27, 28, 1.0590, 0.9337}, {28, 29, 0.8042, 0.7006},
      {29, 30, 0.5075, 0.2585}, {30, 31, 0.9744, 0.9630}, {31, 32, 0.3105, 0.3619}, {32, 33, 0.3410, 0.5302},
      // closed ties
      {9, 15, 2.0, 2.0},        {12, 22, 2.0, 2.0},       {18, 33, 0.5, 0.5},
  };
  constexpr double z_base = kCase33BaseOhm;

  std::vector<std::string> buses;
  for (int i = 1; i <= 33; ++i) buses.push_back(std::to_string(i));
  std::vector<LineSpec> lines;
  for (const auto& row : rows) {
    lines.push_back({std::to_string(row.from), std::to_string(row.to), row.r_ohm / z_base, row.x_ohm / z_base});
  }
  return GridGraph(buses, "1", lines);
}

LineSpec case33_open_tie() { return {"8", "21", 2.0 / kCase33BaseOhm, 2.0 / kCase33BaseOhm}; }

}  // namespace gridgm
