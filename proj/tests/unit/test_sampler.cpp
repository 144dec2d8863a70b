#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "gridgm/error.hpp"
#include "gridgm/estimator.hpp"
#include "gridgm/generate.hpp"
#include "gridgm/sampler.hpp"
#include "oracles.hpp"

using namespace gridgm;

namespace {

GridGraph two_bus() { return GridGraph({"0", "1"}, "0", {{"0", "1", 0.0, 1.0}}); }

double rel_frob(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("two-bus swap grid has identity voltage covariance") {
  const auto lp = reduced_laplacians(two_bus());
  const auto stats = InjectionStatistics::uniform(1, 1.0);
  CHECK(analytic_voltage_covariance(lp, stats).isApprox(Eigen::Matrix2d::Identity(), 1e-15));
  const auto set = sample_voltages(lp, stats, 100000, 3);
  const Eigen::MatrixXd cov = sample_covariance(set);
  CHECK((cov - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("sampling is a pure function of the seed") {
  const auto g = generate_grid({GridKind::Tree, 8, 0, 7, 2});
  const auto lp = reduced_laplacians(g);
  const auto stats = InjectionStatistics::uniform(g.dimension());
  const auto a = sample_voltages(lp, stats, 1, 42);
  const auto b = sample_voltages(lp, stats, 1, 42);
  CHECK(a.samples == b.samples);
  CHECK(a.samples.cols() == static_cast<Eigen::Index>(2 * g.dimension()));
  CHECK_FALSE(a.samples == sample_voltages(lp, stats, 1, 43).samples);

  // Any split of the index range gives the same rows.
  const VoltageSampler sampler(lp, stats);
  const Eigen::MatrixXd whole = sampler.draw(5, 0, 100);
  Eigen::MatrixXd pieces(100, whole.cols());
  pieces << sampler.draw(5, 0, 37), sampler.draw(5, 37, 63);
  CHECK(whole == pieces);
}

TEST_CASE("non-positive-definite injection blocks are rejected") {
  auto stats = InjectionStatistics::uniform(1, 1.0, 1.0);
  CHECK_THROWS_AS(stats.validate(), ValidationError);
  CHECK_THROWS_AS(sample_voltages(reduced_laplacians(two_bus()), stats, 10, 1), ValidationError);
}

TEST_CASE("monte carlo covariance on a 10-bus tree") {
  std::mt19937_64 rng(4);
  const auto g = generate_grid({GridKind::Tree, 11, 0, 7, 4});
  const auto lp = reduced_laplacians(g);
  const auto stats = oracle::random_stats(g.dimension(), rng);
  const Eigen::MatrixXd exact = analytic_voltage_covariance(lp, stats);
  const auto set = sample_voltages(lp, stats, 1000000, 8);
  CHECK(rel_frob(sample_covariance(set), exact) < 0.02);
  CHECK((exact - exact.transpose()).cwiseAbs().maxCoeff() == 0.0);

  // Independent oracle: H^-1 S H^-1 with a full-pivot LU inverse.
  const auto [hg, hb] = oracle::incidence_laplacians(g);
  const Eigen::MatrixXd hinv = oracle::composite(hg, hb).fullPivLu().inverse();
  CHECK(rel_frob(exact, hinv * stats.covariance() * hinv) < 1e-10);
}

TEST_CASE("monte carlo covariance on a loopy grid with correlated injections") {
  std::mt19937_64 rng(6);
  const auto g = oracle::random_grid(rng, 16, 3, 0.1);
  const auto lp = reduced_laplacians(g);
  const auto stats = make_correlated_stats(InjectionStatistics::uniform(g.dimension()), g, 0.1);
  const auto set = sample_voltages(lp, stats, 1000000, 12);
  CHECK(rel_frob(sample_covariance(set), analytic_voltage_covariance(lp, stats)) < 0.02);
}

TEST_CASE("uncorrelated injections have negligible cross-bus correlation") {
  // With H = I the voltages are the injections themselves.
  const GridGraph star({"0", "1", "2", "3"}, "0", {{"0", "1", 1, 0}, {"0", "2", 1, 0}, {"0", "3", 1, 0}});
  const auto lp = reduced_laplacians(star);
  const auto set = sample_voltages(lp, InjectionStatistics::uniform(3, 1.0, 0.3), 1000000, 21);
  const Eigen::MatrixXd cov = sample_covariance(set);
  for (Eigen::Index a = 0; a < 6; ++a) {
    for (Eigen::Index b = 0; b < 6; ++b) {
      if (a == b || a % 3 == b % 3) continue;
      CHECK(std::abs(cov(a, b)) / std::sqrt(cov(a, a) * cov(b, b)) < 0.02);
    }
  }
}

TEST_CASE("correlated statistics") {
  const auto g = generate_grid({GridKind::Meshed, 56, 3, 7, 1});
  const auto base = InjectionStatistics::uniform(g.dimension());
  const auto same = make_correlated_stats(base, g, 0.0);
  CHECK(same.precision().isApprox(base.precision()));
  const auto corr = make_correlated_stats(base, g, 0.1);
  CHECK_FALSE(corr.is_block_diagonal());
  corr.validate();
  const Eigen::MatrixXd delta = *corr.precision_perturbation;
  CHECK(delta.isApprox(delta.transpose()));
  const auto p = base.base_precision();
  for (const auto& [a, b] : g.observable_edges()) {
    const auto i = static_cast<Eigen::Index>(a), j = static_cast<Eigen::Index>(b);
    CHECK(std::abs(delta(i, j)) == doctest::Approx(0.1 * std::sqrt(p(i, i) * p(j, j))));
  }
  CHECK_THROWS_AS(make_correlated_stats(base, g, 5.0), ValidationError);
}

TEST_CASE("noise") {
  const auto g = generate_grid({GridKind::Tree, 6, 0, 7, 1});
  const auto lp = reduced_laplacians(g);
  const auto stats = InjectionStatistics::uniform(g.dimension());
  const auto clean = sample_voltages(lp, stats, 100000, 1);

  const auto same = add_noise(clean, NoiseStatistics::zero(g.dimension()), 2);
  CHECK(same.samples == clean.samples);

  const Eigen::MatrixXd vcov = analytic_voltage_covariance(lp, stats);
  const auto noise = NoiseStatistics::relative(vcov, 0.01);
  const auto noisy = add_noise(clean, noise, 2);
  CHECK(noisy.size() == clean.size());
  CHECK(clean.samples == sample_voltages(lp, stats, 100000, 1).samples);
  const Eigen::MatrixXd diff = noisy.samples - clean.samples;
  VoltageSampleSet d{diff, clean.bus_order, {}};
  const Eigen::MatrixXd ncov = sample_covariance(d);
  for (Eigen::Index i = 0; i < ncov.rows(); ++i) {
    CHECK(std::abs(ncov(i, i) - noise.covariance(i, i)) < 0.1 * noise.covariance(i, i));
  }
  CHECK_NOTHROW(NoiseStatistics::relative(vcov, 0.005).validate());
  CHECK_THROWS_AS(add_noise(clean, NoiseStatistics::zero(g.dimension() + 1), 1), ValidationError);
}

TEST_CASE("export and import round trip") {
  const auto g = generate_grid({GridKind::Tree, 5, 0, 7, 1});
  const auto lp = reduced_laplacians(g);
  const auto set = sample_voltages(lp, InjectionStatistics::uniform(g.dimension()), 3, 9);
  const auto dir = std::filesystem::temp_directory_path() / "gridgm_unit_samples";
  std::filesystem::create_directories(dir);
  export_samples(set, dir / "s.csv");
  const auto back = import_samples(dir / "s.csv", g, Centering::None);
  CHECK(back.size() == 3);
  CHECK(back.samples == set.samples);
  const auto centered = import_samples(dir / "s.csv", g);
  CHECK(centered.samples.colwise().sum().cwiseAbs().maxCoeff() < 1e-12);
  CHECK(import_samples(dir / "s.csv", g, Centering::Difference).size() == 2);

  {
    std::ofstream bad(dir / "bad.csv");
    bad << "v_1,v_2,v_3,v_4\n1,2,3,4\n";
  }
  CHECK_THROWS_AS(import_samples(dir / "bad.csv", g), ValidationError);
  {
    std::ofstream bad(dir / "nan.csv");
    bad << "v_1,v_2,v_3,v_4,theta_1,theta_2,theta_3,theta_4\n1,2,x,4,5,6,7,8\n";
  }
  CHECK_THROWS_AS(import_samples(dir / "nan.csv", g), ValidationError);

  export_sample_metadata({9, grid_sha256(g), {}}, dir / "s.json");
  CHECK(std::filesystem::exists(dir / "s.json"));
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
