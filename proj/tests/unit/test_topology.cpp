#include <doctest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "gridgm/error.hpp"
#include "gridgm/estimator.hpp"
#include "gridgm/generate.hpp"
#include "gridgm/io.hpp"
#include "gridgm/sampler.hpp"
#include "gridgm/topology.hpp"
#include "oracles.hpp"

using namespace gridgm;

namespace {

ConcentrationMatrix analytic(const GridGraph& g, const InjectionStatistics& stats) {
  return analytic_concentration(reduced_laplacians(g), stats);
}

ConcentrationMatrix analytic(const GridGraph& g) { return analytic(g, InjectionStatistics::uniform(g.dimension())); }

GridGraph meshed(std::size_t buses, std::size_t loops, std::size_t cycle, std::uint64_t seed) {
  GridSpec spec;
  spec.kind = GridKind::Meshed;
  spec.buses = buses;
  spec.loops = loops;
  spec.min_cycle = cycle;
  spec.seed = seed;
  return generate_grid(spec);
}

std::set<Edge> true_plus_two_hop(const GridGraph& g) {
  const auto d = oracle::floyd_warshall(reduced_adjacency(g));
  std::set<Edge> out;
  for (std::size_t a = 0; a < d.size(); ++a) {
    for (std::size_t b = a + 1; b < d.size(); ++b) {
      if (d[a][b] <= 2) out.insert({a, b});
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("topology") {

TEST_CASE("hybrid graph saturates") {
  const auto j = analytic(meshed(20, 2, 7, 3));
  const double top = j.vv().cwiseAbs().maxCoeff();
  CHECK(build_hybrid(j, 2 * top).edges.empty());
  CHECK_THROWS_AS(build_hybrid(j, -1.0), ValidationError);
}

TEST_CASE("hybrid graph of a 3-bus path") {
  const GridGraph path({"0", "1", "2"}, "0", {{"0", "1", 0.3, 1}, {"1", "2", 0.2, 0.7}});
  const auto j = analytic(path);
  const auto gamma = gamma_thresholds(j);
  const auto hybrid = build_hybrid(j, gamma.gamma1 / 2);
  CHECK(hybrid.edges == std::set<Edge>{{0, 1}});
  CHECK(hybrid.threshold == gamma.gamma1 / 2);
}

TEST_CASE("hybrid graph of the 56-bus cycle-7 grid is lines plus two-hop pairs") {
  const auto g = meshed(56, 3, 7, 1);
  const auto j = analytic(g);
  const auto hybrid = build_hybrid(j, gamma_thresholds(j).gamma1 / 2);
  CHECK(hybrid.edges == true_plus_two_hop(g));
}

TEST_CASE("both learners are exact on the 56-bus grid") {
  const auto g = meshed(56, 3, 7, 1);
  const auto j = analytic(g);
  const auto gamma = gamma_thresholds(j);
  const auto nb = learn_neighborhood(j, gamma.gamma1 / 2);
  CHECK(score(nb, g) == 0.0);
  const auto sr = learn_sign_rule(j, gamma.gamma2 / 2);
  CHECK(score(sr, g) == 0.0);
  const auto rep = structure_report(g);
  for (std::size_t i = 0; i < g.dimension(); ++i) {
    const auto& bus = nb.bus_order[i];
    const auto degree = reduced_adjacency(g)[i].size();
    CHECK(nb.node_class[i] == (degree > 1 ? NodeClass::NonLeaf : NodeClass::Leaf));
    (void)bus;
    (void)rep;
  }
  for (const auto c : sr.node_class) CHECK(c == NodeClass::Unresolved);
}

TEST_CASE("single non-reference bus stays unresolved") {
  const GridGraph g({"0", "1"}, "0", {{"0", "1", 0.1, 0.2}});
  const auto est = learn_neighborhood(analytic(g), 1e-3);
  CHECK(est.edges.empty());
  CHECK(est.node_class == std::vector<NodeClass>{NodeClass::Unresolved});
}

TEST_CASE("learners are exact on random grids meeting their conditions") {
  std::mt19937_64 rng(50);
  for (int t = 0; t < 10; ++t) {
    const auto g = oracle::random_grid_with_girth(rng, 20 + rng() % 15, 2, 7, 3);
    const auto j = analytic(g, oracle::random_stats(g.dimension(), rng));
    const auto gamma = gamma_thresholds(j);
    CHECK(score(learn_neighborhood(j, gamma.gamma1 / 2), g) == 0.0);
    CHECK(score(learn_sign_rule(j, gamma.gamma2 / 2), g) == 0.0);
  }
  for (int t = 0; t < 10; ++t) {
    const auto g = oracle::random_grid_with_girth(rng, 10 + rng() % 15, 3, 4);
    const auto j = analytic(g, oracle::random_stats(g.dimension(), rng));
    CHECK(score(learn_sign_rule(j, gamma_thresholds(j).gamma2 / 2), g) == 0.0);
  }
}

TEST_CASE("triangles break both learners somewhere") {
  std::mt19937_64 rng(51);
  int neighborhood_failures = 0;
  int sign_failures = 0;
  for (int t = 0; t < 20; ++t) {
    const auto g = meshed(33, 3, 3, rng());
    const auto j = analytic(g);
    const auto gamma = gamma_thresholds(j);
    neighborhood_failures += score(learn_neighborhood(j, gamma.gamma1 / 2), g) > 0.0;
    sign_failures += score(learn_sign_rule(j, gamma.gamma2 / 2), g) > 0.0;
  }
  CHECK(neighborhood_failures > 0);
  (void)sign_failures;

  // A weak line inside a triangle of strong lines: the two-hop path through
  // the third bus outweighs the direct line.
  const GridGraph tri({"0", "1", "2", "3"}, "0",
                      {{"0", "1", 0.1, 0.1}, {"1", "2", 0.05, 0.05}, {"2", "3", 0.05, 0.05}, {"1", "3", 2.0, 2.0}});
  const auto j = analytic(tri);
  const auto est = learn_sign_rule(j, gamma_thresholds(j).gamma2 / 2);
  CHECK(score(est, tri) > 0.0);
  CHECK(est.edges.count({0, 2}) == 0);
}

TEST_CASE("sign facts on triangle-free grids") {
  std::mt19937_64 rng(52);
  for (int t = 0; t < 20; ++t) {
    const auto g = oracle::random_grid_with_girth(rng, 6 + rng() % 20, rng() % 4, 4);
    const auto j = analytic(g, oracle::random_stats(g.dimension(), rng));
    const Eigen::MatrixXd sum = j.vv() + j.thetatheta();
    const double floor = kZeroFloor * sum.cwiseAbs().maxCoeff();
    const auto d = oracle::floyd_warshall(reduced_adjacency(g));
    for (std::size_t a = 0; a < d.size(); ++a) {
      for (std::size_t b = a + 1; b < d.size(); ++b) {
        const double v = sum(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        if (d[a][b] == 1) CHECK(v < 0.0);
        if (d[a][b] == 2) CHECK(v > 0.0);
        if (d[a][b] >= 3) CHECK(std::abs(v) < floor);
      }
    }
  }
}

TEST_CASE("sign pattern on a path") {
  const GridGraph path({"0", "1", "2", "3"}, "0", {{"0", "1", 0, 1}, {"1", "2", 0, 1}, {"2", "3", 0, 1}});
  const auto j = analytic(path, InjectionStatistics::uniform(3, 1.0));
  const Eigen::MatrixXd sum = j.vv() + j.thetatheta();
  CHECK(sum(0, 1) < 0.0);
  CHECK(sum(1, 2) < 0.0);
  CHECK(sum(0, 2) > 0.0);
}

TEST_CASE("witness search equals brute force") {
  std::mt19937_64 rng(53);
  for (int t = 0; t < 40; ++t) {
    const auto g = oracle::random_grid(rng, 5 + rng() % 16, rng() % 6);
    const auto j = analytic(g);
    // Thresholds across the range give hybrid graphs of varying density.
    const Eigen::MatrixXd vv = j.vv().cwiseAbs();
    const double tau = vv.maxCoeff() * std::pow(10.0, -3.0 * static_cast<double>(rng() % 100) / 100.0);
    const auto hybrid = build_hybrid(j, tau);
    for (std::size_t i = 0; i < hybrid.nodes; ++i) {
      for (std::size_t k = i + 1; k < hybrid.nodes; ++k) {
        CHECK(hybrid.has(i, k) == (vv(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) > tau));
        const auto all = oracle::all_witnesses(hybrid, i, k);
        const auto found = find_separation_witness(hybrid, i, k);
        CHECK(found.has_value() == !all.empty());
        if (found) CHECK(*found == all.front());
      }
    }
  }
}

TEST_CASE("score examples") {
  std::set<Edge> truth;
  for (std::size_t i = 0; i < 10; ++i) truth.insert({i, i + 1});
  CHECK(score_edges(truth, truth) == 0.0);
  auto est = truth;
  est.erase({0, 1});
  est.insert({0, 5});
  CHECK(score_edges(est, truth) == doctest::Approx(0.2));
  CHECK(score_edges({}, truth) == 1.0);

  const auto g = meshed(20, 2, 7, 3);
  TopologyEstimate bad;
  bad.bus_order = {"x"};
  CHECK_THROWS_AS(score(bad, g), ValidationError);
}

TEST_CASE("gap threshold") {
  CHECK(gap_threshold({4.0}) == 2.0);
  CHECK(gap_threshold({10, 9, 8, 1, 0.9}) == doctest::Approx(std::sqrt(8.0)));
  CHECK_THROWS_AS(gap_threshold({0.0, -1.0}), NumericalError);
  const auto g = meshed(56, 3, 7, 1);
  const auto lp = reduced_laplacians(g);
  const auto set = sample_voltages(lp, InjectionStatistics::uniform(g.dimension()), 200000, 4);
  const auto j = direct_concentration(sample_covariance(set), 0.0, lp.bus_order);
  CHECK(score(learn_sign_rule(j, data_tau2(j)), g) == 0.0);
  CHECK(data_tau1(j) > 0.0);
}

TEST_CASE("estimate json") {
  const auto g = meshed(20, 2, 7, 3);
  const auto j = analytic(g);
  const auto est = learn_sign_rule(j, gamma_thresholds(j).gamma2 / 2);
  const auto doc = topology_to_json(est, score(est, g));
  CHECK(doc.at("edges").size() == est.edges.size());
  CHECK(doc.at("algorithm") == "sign");
  CHECK(doc.at("error").get<double>() == 0.0);
  CHECK(doc.at("thresholds").contains("tau2"));
  CHECK(doc.at("node_class").size() == g.dimension());
  CHECK(parse_learning_algorithm("neighborhood") == LearningAlgorithm::NeighborhoodSearch);
  CHECK_THROWS_AS(parse_learning_algorithm("x"), ValidationError);
}

}  // TEST_SUITE
