#include <doctest.h>

#include <filesystem>
#include <random>

#include <nlohmann/json.hpp>

#include "gridgm/error.hpp"
#include "gridgm/generate.hpp"
#include "gridgm/grid.hpp"
#include "oracles.hpp"

using namespace gridgm;

namespace {

GridGraph two_bus() { return GridGraph({"0", "1"}, "0", {{"0", "1", 0.0, 1.0}}); }

GridGraph triangle() {
  return GridGraph({"0", "1", "2"}, "0", {{"0", "1", 1, 1}, {"1", "2", 1, 1}, {"0", "2", 1, 1}});
}

}  // namespace

TEST_SUITE("grid") {

TEST_CASE("admittance examples") {
  auto a = admittance(0, 1);
  CHECK(a.g == 0.0);
  CHECK(a.beta == 1.0);
  a = admittance(1, 0);
  CHECK(a.g == 1.0);
  CHECK(a.beta == 0.0);
  a = admittance(3, 4);
  CHECK(a.g == doctest::Approx(0.12).epsilon(1e-15));
  CHECK(a.beta == doctest::Approx(0.16).epsilon(1e-15));
  CHECK_THROWS_AS(admittance(0, 0), ValidationError);
}

TEST_CASE("load minimal grid from json") {
  const auto doc = nlohmann::json::parse(R"({"buses":["0","1"],"reference":"0","lines":[{"from":"0","to":"1","r":0,"x":1}]})");
  const auto g = grid_from_json(doc);
  CHECK(g.dimension() == 1);
  CHECK(g.non_reference_buses() == std::vector<std::string>{"1"});
}

TEST_CASE("invalid grids are rejected") {
  CHECK_THROWS_AS(GridGraph({"0", "1"}, "0", {{"0", "1", 1, 1}, {"1", "1", 1, 1}}), ValidationError);
  CHECK_THROWS_AS(GridGraph({"0", "1"}, "0", {{"0", "1", 1, 1}, {"1", "0", 1, 1}}), ValidationError);
  CHECK_THROWS_AS(GridGraph({"0", "1", "2"}, "0", {{"0", "1", 1, 1}}), ValidationError);
  CHECK_THROWS_AS(GridGraph({"0", "1"}, "0", {{"0", "1", 0, 0}}), ValidationError);
  CHECK_THROWS_AS(GridGraph({"0", "1"}, "9", {{"0", "1", 1, 1}}), ValidationError);
  CHECK_THROWS_AS(GridGraph({"0", "0"}, "0", {{"0", "0", 1, 1}}), ValidationError);
  CHECK_THROWS_AS(grid_from_json(nlohmann::json::parse(R"({"buses":["0"]})")), ValidationError);
}

TEST_CASE("json and file round trip keep the hash") {
  const auto g = case33_analog();
  const auto back = grid_from_json(grid_to_json(g));
  CHECK(grid_sha256(back) == grid_sha256(g));
  const auto path = std::filesystem::temp_directory_path() / "gridgm_unit_grid.json";
  save_grid(g, path);
  CHECK(grid_sha256(load_grid(path)) == grid_sha256(g));
  std::filesystem::remove(path);
  CHECK(grid_sha256(g).size() == 64);
}

TEST_CASE("reduced laplacians of small grids") {
  auto lp = reduced_laplacians(two_bus());
  CHECK(lp.h_g(0, 0) == 0.0);
  CHECK(lp.h_beta(0, 0) == 1.0);
  CHECK(lp.composite.isApprox((Eigen::Matrix2d() << 0, 1, 1, 0).finished()));

  const GridGraph path({"0", "1", "2"}, "0", {{"0", "1", 0, 1}, {"1", "2", 0, 1}});
  lp = reduced_laplacians(path);
  CHECK(lp.h_beta.isApprox((Eigen::Matrix2d() << 2, -1, -1, 1).finished()));
  CHECK(lp.h_g.isZero(0.0));
  CHECK((lp.composite - lp.composite.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("reduced laplacians match the incidence construction") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 30; ++t) {
    const auto g = oracle::random_grid(rng, 3 + rng() % 20, rng() % 6);
    const auto lp = reduced_laplacians(g);
    const auto [hg, hb] = oracle::incidence_laplacians(g);
    CHECK((lp.h_g - hg).cwiseAbs().maxCoeff() < 1e-12 * hg.cwiseAbs().maxCoeff());
    CHECK((lp.h_beta - hb).cwiseAbs().maxCoeff() < 1e-12 * hb.cwiseAbs().maxCoeff());
    CHECK((lp.composite - oracle::composite(hg, hb)).cwiseAbs().maxCoeff() < 1e-12 * hb.cwiseAbs().maxCoeff());
    CHECK(lp.bus_order == g.non_reference_buses());
  }
}

TEST_CASE("row sums equal the admittance to the reference") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 30; ++t) {
    const auto g = oracle::random_grid(rng, 3 + rng() % 25, rng() % 8);
    const auto lp = reduced_laplacians(g);
    CHECK(lp.h_g.isApprox(lp.h_g.transpose(), 0.0));
    CHECK(lp.h_beta.isApprox(lp.h_beta.transpose(), 0.0));
    for (std::size_t i = 0; i < g.dimension(); ++i) {
      const auto bus = g.bus_index(i);
      double g_ref = 0.0, b_ref = 0.0;
      if (const auto line = g.find_line(bus, g.reference_index())) {
        const auto& l = g.lines()[*line];
        const auto y = admittance(l.r, l.x);
        g_ref = y.g;
        b_ref = y.beta;
      }
      const auto k = static_cast<Eigen::Index>(i);
      CHECK(lp.h_g.row(k).sum() == doctest::Approx(g_ref).epsilon(1e-10).scale(lp.h_g(k, k)));
      CHECK(lp.h_beta.row(k).sum() == doctest::Approx(b_ref).epsilon(1e-10).scale(lp.h_beta(k, k)));
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(lp.composite);
    CHECK(svd.singularValues()(0) / svd.singularValues().tail(1)(0) < 1e12);
  }
}

TEST_CASE("structure report") {
  CHECK(structure_report(triangle()).min_cycle_length == 3);
  const auto tree = generate_grid({GridKind::Tree, 12, 0, 7, 3});
  const auto rep = structure_report(tree);
  CHECK(rep.is_tree());
  for (const auto& leaf : rep.leaves) CHECK(tree.adjacency()[tree.index_of(leaf)].size() == 1);
  CHECK(rep.leaves.size() + rep.non_leaves.size() == tree.num_buses());
}

TEST_CASE("girth equals exhaustive cycle enumeration") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 200; ++t) {
    const auto g = oracle::random_grid(rng, 3 + rng() % 10, rng() % 5);
    CHECK(girth(g.adjacency()) == oracle::brute_force_girth(g.adjacency()));
    CHECK(structure_report(g).min_cycle_length == oracle::brute_force_girth(g.adjacency()));
  }
}

TEST_CASE("two-hop sets equal Floyd-Warshall distance two") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    const auto g = oracle::random_grid(rng, 3 + rng() % 28, rng() % 6);
    const auto rep = structure_report(g);
    const auto adj = reduced_adjacency(g);
    const auto d = oracle::floyd_warshall(adj);
    for (std::size_t i = 0; i < g.dimension(); ++i) {
      std::set<std::string> expected;
      for (std::size_t j = 0; j < g.dimension(); ++j) {
        if (d[i][j] == 2) expected.insert(g.buses()[g.bus_index(j)]);
      }
      CHECK(rep.two_hop.at(g.buses()[g.bus_index(i)]) == expected);
    }
    const auto full = oracle::floyd_warshall(g.adjacency());
    const auto bfs = bfs_distances(g.adjacency(), 0);
    for (std::size_t j = 0; j < g.num_buses(); ++j) CHECK(bfs[j] == full[0][j]);
  }
}

TEST_CASE("line events on the 33-bus analog") {
  const auto g = case33_analog();
  const auto before = structure_report(g);
  const auto added = apply_line_event(g, {LineEventKind::Add, case33_open_tie()});
  CHECK(added.lines().size() == g.lines().size() + 1);
  CHECK(added.find_line(added.index_of("8"), added.index_of("21")).has_value());
  const auto ev = diff_single_line(g, added);
  CHECK(ev.kind == LineEventKind::Add);

  const auto removed = apply_line_event(g, {LineEventKind::Remove, {"6", "26", 0, 0}});
  CHECK(removed.lines().size() == g.lines().size() - 1);
  CHECK(diff_single_line(g, removed).kind == LineEventKind::Remove);
  CHECK(before.min_cycle_length < kInfiniteCycle);

  CHECK_THROWS_AS(apply_line_event(g, {LineEventKind::Add, {"1", "2", 1, 1}}), ValidationError);
  CHECK_THROWS_AS(diff_single_line(g, g), ValidationError);
  CHECK_THROWS_AS(diff_single_line(added, removed), ValidationError);
}

TEST_CASE("removing a bridge to a leaf is rejected") {
  const auto tree = generate_grid({GridKind::Path, 4, 0, 7, 1});
  CHECK_THROWS_AS(apply_line_event(tree, {LineEventKind::Remove, {"2", "3", 0, 0}}), ValidationError);
}

}  // TEST_SUITE
