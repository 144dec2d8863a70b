#include <doctest.h>

#include "gridgm/error.hpp"
#include "gridgm/generate.hpp"
#include "oracles.hpp"

using namespace gridgm;

TEST_SUITE("generate") {

TEST_CASE("meshed 56-bus grid has minimum cycle seven") {
  GridSpec spec;
  spec.kind = GridKind::Meshed;
  spec.buses = 56;
  spec.loops = 3;
  spec.min_cycle = 7;
  spec.seed = 1;
  const auto g = generate_grid(spec);
  CHECK(g.num_buses() == 56);
  CHECK(g.lines().size() == 55 + 3);
  CHECK(structure_report(g).min_cycle_length == 7);
  CHECK(oracle::brute_force_girth(g.adjacency()) == 7);
  CHECK(g.reference() == "0");
  CHECK(g.adjacency()[g.reference_index()].size() == 1);
}

TEST_CASE("tree has infinite cycle length") {
  const auto g = generate_grid({GridKind::Tree, 10, 0, 7, 1});
  CHECK(structure_report(g).is_tree());
  CHECK(g.lines().size() == 9);
}

TEST_CASE("meshed grid with triangles") {
  GridSpec spec;
  spec.kind = GridKind::Meshed;
  spec.buses = 33;
  spec.loops = 3;
  spec.min_cycle = 3;
  const auto g = generate_grid(spec);
  CHECK(structure_report(g).min_cycle_length == 3);
}

TEST_CASE("generation is deterministic per seed") {
  GridSpec spec;
  spec.kind = GridKind::Random;
  spec.buses = 25;
  spec.loops = 4;
  CHECK(grid_sha256(generate_grid(spec)) == grid_sha256(generate_grid(spec)));
  spec.seed = 2;
  const auto other = generate_grid(spec);
  spec.seed = 1;
  CHECK(grid_sha256(other) != grid_sha256(generate_grid(spec)));
}

TEST_CASE("impedances stay in the requested range") {
  GridSpec spec;
  spec.buses = 40;
  spec.r_min = 0.2;
  spec.r_max = 0.3;
  spec.x_min = 0.5;
  spec.x_max = 0.6;
  const auto g = generate_grid(spec);
  for (const auto& l : g.lines()) {
    CHECK(l.r >= 0.2);
    CHECK(l.r <= 0.3);
    CHECK(l.x >= 0.5);
    CHECK(l.x <= 0.6);
  }
}

TEST_CASE("infeasible requests fail") {
  GridSpec spec;
  spec.kind = GridKind::Meshed;
  spec.buses = 5;
  spec.loops = 3;
  spec.min_cycle = 7;
  CHECK_THROWS_AS(generate_grid(spec), ValidationError);
  CHECK_THROWS_AS(parse_grid_kind("ring"), ValidationError);
}

TEST_CASE("33-bus analog") {
  const auto g = case33_analog();
  CHECK(g.num_buses() == 33);
  CHECK(g.reference() == "1");
  CHECK(g.lines().size() == 32 + 3);
  CHECK(g.find_line(g.index_of("6"), g.index_of("26")).has_value());
  CHECK_FALSE(g.find_line(g.index_of("8"), g.index_of("21")).has_value());
  const auto tie = case33_open_tie();
  CHECK(tie.from == "8");
  CHECK(tie.to == "21");
}

}  // TEST_SUITE
