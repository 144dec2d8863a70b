#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "gridgm/error.hpp"
#include "gridgm/estimator.hpp"
#include "gridgm/generate.hpp"
#include "gridgm/sampler.hpp"
#include "oracles.hpp"

using namespace gridgm;

namespace {

GridGraph two_bus() { return GridGraph({"0", "1"}, "0", {{"0", "1", 0.0, 1.0}}); }

double rel_frob(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).norm() / b.norm(); }

Eigen::MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index dim, std::size_t samples) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(samples), dim);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index k = 0; k < dim; ++k) x(i, k) = normal(rng);
  }
  x.col(1) += 0.6 * x.col(0);
  x.col(dim - 1) -= 0.4 * x.col(dim - 2);
  return sample_covariance(x);
}

std::set<std::pair<Eigen::Index, Eigen::Index>> support(const Eigen::MatrixXd& j) {
  std::set<std::pair<Eigen::Index, Eigen::Index>> s;
  for (Eigen::Index a = 0; a < j.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < j.cols(); ++b) {
      if (std::abs(j(a, b)) > 1e-6) s.insert({a, b});
    }
  }
  return s;
}

}  // namespace

TEST_SUITE("estimator") {

TEST_CASE("sample covariance examples") {
  Eigen::MatrixXd same(2, 3);
  same << 1, 2, 3, 1, 2, 3;
  CHECK(sample_covariance(same).isZero(0.0));
  Eigen::MatrixXd rows = std::sqrt(2.0) * Eigen::MatrixXd::Identity(2, 2);
  Eigen::Matrix2d expected;
  expected << 1, -1, -1, 1;
  CHECK((sample_covariance(rows) - expected).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(sample_covariance(Eigen::MatrixXd(1, 2)), ValidationError);
}

TEST_CASE("streaming accumulator equals the batch covariance") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd x(500, 6);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index k = 0; k < 6; ++k) x(i, k) = normal(rng) + 5.0;
  }
  CovarianceAccumulator acc(6);
  acc.add(x.topRows(123));
  acc.add(x.bottomRows(377));
  CHECK(acc.count() == 500);
  CHECK(rel_frob(acc.covariance(), sample_covariance(x)) < 1e-12);
}

TEST_CASE("monte carlo sample covariance") {
  std::mt19937_64 rng(1);
  const auto g = oracle::random_grid(rng, 12, 2, 0.1);
  const auto lp = reduced_laplacians(g);
  const auto stats = oracle::random_stats(g.dimension(), rng);
  const auto set = sample_voltages(lp, stats, 1000000, 77);
  CHECK(rel_frob(sample_covariance(set), analytic_voltage_covariance(lp, stats)) < 0.02);
}

TEST_CASE("direct concentration") {
  const auto id = direct_concentration(Eigen::MatrixXd::Identity(4, 4), 0.0);
  CHECK(id.j.isApprox(Eigen::MatrixXd::Identity(4, 4)));
  CHECK(id.provenance == Provenance::DirectInverse);

  std::mt19937_64 rng(2);
  const auto g = oracle::random_grid(rng, 12, 3);
  const auto lp = reduced_laplacians(g);
  const auto stats = oracle::random_stats(g.dimension(), rng);
  const auto direct = direct_concentration(analytic_voltage_covariance(lp, stats), 0.0);
  CHECK(rel_frob(direct.j, analytic_concentration(lp, stats).j) < 1e-8);

  const auto few = sample_voltages(lp, stats, 2 * g.dimension() - 1, 1);
  CHECK_THROWS_AS(direct_concentration(sample_covariance(few), 0.0), NumericalError);
  const Eigen::MatrixXd cov = sample_covariance(few);
  CHECK(default_ridge(cov, few.size()) > 0.0);
  CHECK(default_ridge(cov, 100000) == 0.0);
}

TEST_CASE("analytic concentration examples") {
  const auto lp = reduced_laplacians(two_bus());
  const auto j = analytic_concentration(lp, InjectionStatistics::uniform(1, 1.0));
  CHECK(j.j.isApprox(Eigen::Matrix2d::Identity()));
  CHECK_THROWS_AS(gamma_thresholds(j), NumericalError);
  auto zero_d = InjectionStatistics::uniform(1, 1.0, 1.0);
  CHECK_THROWS_AS(analytic_concentration(lp, zero_d), ValidationError);
}

TEST_CASE("analytic concentration equals the numeric inverse") {
  std::mt19937_64 rng(20);
  for (int t = 0; t < 100; ++t) {
    const auto g = oracle::random_grid(rng, 3 + rng() % 29, rng() % 6);
    const auto stats = oracle::random_stats(g.dimension(), rng);
    const auto j = analytic_concentration(reduced_laplacians(g), stats);
    const Eigen::MatrixXd numeric = oracle::numeric_concentration(g, stats.covariance());
    CHECK(rel_frob(j.j, numeric) < 1e-8);
    CHECK((j.thetav() - j.vtheta().transpose()).cwiseAbs().maxCoeff() <= 1e-12 * j.j.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("correlated model uses J + H delta H") {
  std::mt19937_64 rng(21);
  const auto g = oracle::random_grid(rng, 15, 3, 0.1);
  const auto lp = reduced_laplacians(g);
  const auto stats = make_correlated_stats(oracle::random_stats(g.dimension(), rng), g, 0.1);
  const auto j = analytic_concentration(lp, stats);
  CHECK(rel_frob(j.j, oracle::numeric_concentration(g, stats.covariance())) < 1e-8);
}

TEST_CASE("two-hop sparsity") {
  std::mt19937_64 rng(22);
  for (int t = 0; t < 50; ++t) {
    const auto g = oracle::random_grid(rng, 4 + rng() % 26, rng() % 5);
    const auto j = analytic_concentration(reduced_laplacians(g), oracle::random_stats(g.dimension(), rng));
    const auto d = oracle::floyd_warshall(reduced_adjacency(g));
    const auto n = j.dimension();
    const double floor = 1e-10 * j.j.cwiseAbs().maxCoeff();
    for (Eigen::Index a = 0; a < n; ++a) {
      for (Eigen::Index b = 0; b < n; ++b) {
        if (d[a][b] < 3) continue;
        CHECK(std::abs(j.j(a, b)) < floor);
        CHECK(std::abs(j.j(a, n + b)) < floor);
        CHECK(std::abs(j.j(n + a, b)) < floor);
        CHECK(std::abs(j.j(n + a, n + b)) < floor);
      }
    }
  }
}

TEST_CASE("gamma thresholds on a 3-bus path") {
  const GridGraph path({"0", "1", "2"}, "0", {{"0", "1", 0, 1}, {"1", "2", 0, 1}});
  const auto j = analytic_concentration(reduced_laplacians(path), InjectionStatistics::uniform(2, 1.0));
  const auto gamma = gamma_thresholds(j);
  const Eigen::MatrixXd sum = j.vv() + j.thetatheta();
  CHECK(sum(0, 1) < 0.0);
  CHECK(gamma.gamma2 == doctest::Approx(-sum(0, 1)));
  CHECK(gamma.gamma1 == doctest::Approx(std::abs(j.vv()(0, 1))));
  auto direct = j;
  direct.provenance = Provenance::DirectInverse;
  CHECK_THROWS_AS(gamma_thresholds(direct), ValidationError);
}

TEST_CASE("graphical lasso at zero penalty equals the direct inverse") {
  std::mt19937_64 rng(30);
  for (int t = 0; t < 5; ++t) {
    const Eigen::MatrixXd cov = random_spd(rng, 6, 200);
    GlassoOptions opt;
    opt.tol = 1e-8;
    opt.max_iter = 5000;
    const auto gl = graphical_lasso(cov, opt);
    const auto direct = direct_concentration(cov, 0.0);
    CHECK((gl.j - direct.j).cwiseAbs().maxCoeff() <= 10 * opt.tol * direct.j.cwiseAbs().maxCoeff());
    CHECK(gl.provenance == Provenance::GraphicalLasso);
  }
  // near-singular: the inverse has entries ~1e4, default tolerance, absolute check
  Eigen::MatrixXd basis = Eigen::MatrixXd::Random(4, 4);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(basis).householderQ();
  const Eigen::Vector4d spectrum(6.0, 4.0, 1.0, 3e-5);
  const Eigen::MatrixXd raw = q * spectrum.asDiagonal() * q.transpose();
  const Eigen::MatrixXd cov = 0.5 * (raw + raw.transpose());
  const GlassoOptions opt;
  const auto gl = graphical_lasso(cov, opt);
  CHECK((gl.j - direct_concentration(cov, 0.0).j).cwiseAbs().maxCoeff() <= 10 * opt.tol);
}

TEST_CASE("graphical lasso matches the proximal gradient oracle") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 10; ++t) {
    const Eigen::MatrixXd cov = random_spd(rng, 4, 30);
    GlassoOptions opt;
    opt.lambda = 0.1;
    opt.tol = 1e-10;
    opt.max_iter = 10000;
    const auto gl = graphical_lasso(cov, opt);
    const Eigen::MatrixXd ref = oracle::glasso_proximal(cov, 0.1);
    CHECK(glasso_objective(gl.j, cov, 0.1) == doctest::Approx(glasso_objective(ref, cov, 0.1)).epsilon(1e-6));
    CHECK(glasso_objective(gl.j, cov, 0.1) <= glasso_objective(ref, cov, 0.1) + 1e-6);
  }
}

TEST_CASE("graphical lasso matches the stored convex solver values") {
  std::ifstream in(std::string(GRIDGM_TEST_DATA) + "/glasso_oracle.json");
  const auto doc = nlohmann::json::parse(in);
  for (const auto& c : doc.at("cases")) {
    const auto rows = c.at("cov").get<std::vector<std::vector<double>>>();
    Eigen::MatrixXd cov(4, 4);
    for (Eigen::Index a = 0; a < 4; ++a) {
      for (Eigen::Index b = 0; b < 4; ++b) cov(a, b) = rows[a][b];
    }
    GlassoOptions opt;
    opt.lambda = c.at("lambda").get<double>();
    opt.tol = 1e-10;
    opt.max_iter = 10000;
    const auto gl = graphical_lasso(cov, opt);
    CHECK(std::abs(glasso_objective(gl.j, cov, opt.lambda) - c.at("objective").get<double>()) < 1e-6);
  }
}

TEST_CASE("large penalty gives a diagonal matrix") {
  std::mt19937_64 rng(32);
  const Eigen::MatrixXd cov = random_spd(rng, 4, 40);
  Eigen::MatrixXd off = cov;
  off.diagonal().setZero();
  GlassoOptions opt;
  opt.lambda = off.cwiseAbs().maxCoeff();
  const auto gl = graphical_lasso(cov, opt);
  Eigen::MatrixXd gl_off = gl.j;
  gl_off.diagonal().setZero();
  CHECK(gl_off.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(gl.j.diagonal().isApprox(cov.diagonal().cwiseInverse()));
}

TEST_CASE("graphical lasso support shrinks with the penalty") {
  std::mt19937_64 rng(33);
  for (int t = 0; t < 10; ++t) {
    const Eigen::MatrixXd cov = random_spd(rng, 6, 60);
    std::set<std::pair<Eigen::Index, Eigen::Index>> previous;
    bool first = true;
    for (const double lambda : {0.01, 0.03, 0.06, 0.1, 0.2, 0.4, 0.8}) {
      GlassoOptions opt;
      opt.lambda = lambda;
      opt.tol = 1e-10;
      opt.max_iter = 10000;
      const auto s = support(graphical_lasso(cov, opt).j);
      if (!first) {
        for (const auto& e : s) CHECK(previous.count(e) == 1);
      }
      previous = s;
      first = false;
    }
  }
}

TEST_CASE("graphical lasso rejects bad input") {
  Eigen::MatrixXd singular = Eigen::MatrixXd::Ones(4, 4);
  CHECK_THROWS(graphical_lasso(singular, GlassoOptions{}));
  GlassoOptions neg;
  neg.lambda = -1.0;
  CHECK_THROWS_AS(graphical_lasso(Eigen::MatrixXd::Identity(4, 4), neg), ValidationError);
  CHECK(default_glasso_lambda(10, 100) == doctest::Approx(0.5 * std::sqrt(std::log(10.0) / 100.0)));
}

TEST_CASE("noise deviation bounds") {
  const auto lp2 = reduced_laplacians(two_bus());
  const auto unit = InjectionStatistics::uniform(1, 1.0);
  CHECK(noise_deviation_bound(lp2, unit, NoiseStatistics::zero(1)).value == 0.0);
  const double s2 = 0.3;
  const auto white = NoiseStatistics::per_bus(Eigen::VectorXd::Constant(1, s2), Eigen::VectorXd::Constant(1, s2),
                                              Eigen::VectorXd::Zero(1));
  CHECK(noise_deviation_bound(lp2, unit, white).value == doctest::Approx(s2));

  std::mt19937_64 rng(40);
  std::uniform_real_distribution<double> level(1e-4, 0.5);
  for (int t = 0; t < 100; ++t) {
    const auto g = oracle::random_grid(rng, 3 + rng() % 15, rng() % 4, 0.1);
    const auto lp = reduced_laplacians(g);
    const auto stats = oracle::random_stats(g.dimension(), rng);
    const auto n = static_cast<Eigen::Index>(g.dimension());
    Eigen::VectorXd vv(n), tt(n), vt(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      vv(i) = level(rng);
      tt(i) = level(rng);
      vt(i) = 0.5 * std::sqrt(vv(i) * tt(i)) * (t % 2 == 0 ? 0.0 : 1.0);
    }
    const auto noise = NoiseStatistics::per_bus(vv, tt, vt);
    const Eigen::MatrixXd vcov = analytic_voltage_covariance(lp, stats);
    const Eigen::MatrixXd exact = noise_deviation_exact(vcov, noise.covariance);
    const auto j = analytic_concentration(lp, stats);
    const Eigen::MatrixXd wood = noise_deviation_woodbury(j.j, noise.covariance);
    CHECK((exact - wood).cwiseAbs().maxCoeff() <= 1e-6 * wood.cwiseAbs().maxCoeff());
    CHECK((wood - wood.transpose()).cwiseAbs().maxCoeff() < 1e-10 * wood.cwiseAbs().maxCoeff());
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(wood).eigenvalues().maxCoeff() < 0.0);

    const auto b = noise_deviation_bound(lp, stats, noise);
    const double dev = wood.cwiseAbs().maxCoeff();
    REQUIRE(b.spectral_step.has_value());
    REQUIRE(b.per_bus.has_value());
    CHECK(dev <= *b.spectral_step * (1 + 1e-12));
    CHECK(*b.spectral_step <= *b.injection_step * (1 + 1e-12));
    CHECK(*b.injection_step <= b.value * (1 + 1e-12));
    CHECK(b.value <= *b.per_bus * (1 + 1e-12));
  }
}

TEST_CASE("per-bus spreads") {
  Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(2, 2);
  noise << 3, 1, 1, 2;
  const auto sn = per_bus_noise_spread(noise);
  CHECK(sn(0) == doctest::Approx(5 + std::sqrt(5.0)));
  InjectionStatistics s = InjectionStatistics::uniform(1, 1.0, 0.5);
  CHECK(per_bus_injection_spread(s)(0) == doctest::Approx(1.0));
}

}  // TEST_SUITE
