#include "gridgm/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gridgm/error.hpp"
#include "gridgm/linalg.hpp"

namespace gridgm {

namespace {

std::vector<std::string> default_names(std::vector<std::string> names, Eigen::Index dim) {
  if (!names.empty()) {
    if (static_cast<Eigen::Index>(2 * names.size()) != dim) throw ValidationError("bus order does not match matrix size");
    return names;
  }
  for (Eigen::Index i = 0; i < dim / 2; ++i) names.push_back(std::to_string(i));
  return names;
}

void require_square_even(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) throw ValidationError(std::string(what) + " must be a non-empty square matrix");
  if (m.rows() % 2 != 0) throw ValidationError(std::string(what) + " must be 2N x 2N");
}

void require_symmetric(const Eigen::MatrixXd& m, const char* what) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ValidationError(std::string(what) + " must be symmetric");
  }
}

}  // namespace

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::Analytic:
      return "analytic";
    case Provenance::DirectInverse:
      return "direct_inverse";
    case Provenance::GraphicalLasso:
      return "graphical_lasso";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Covariances

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2) throw ValidationError("sample covariance needs at least two samples");
  const Eigen::MatrixXd centered = samples.rowwise() - samples.colwise().mean();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(samples.cols(), samples.cols());
  cov.selfadjointView<Eigen::Upper>().rankUpdate(centered.transpose());
  cov /= static_cast<double>(samples.rows() - 1);
  return symmetrize(cov);
}

Eigen::MatrixXd sample_covariance(const VoltageSampleSet& samples) { return sample_covariance(samples.samples); }

CovarianceAccumulator::CovarianceAccumulator(Eigen::Index width)
    : sum_(Eigen::VectorXd::Zero(width)), cross_(Eigen::MatrixXd::Zero(width, width)) {}

void CovarianceAccumulator::add(const Eigen::MatrixXd& rows) {
  if (rows.cols() != sum_.size()) throw ValidationError("accumulator width mismatch");
  sum_ += rows.colwise().sum().transpose();
  cross_.selfadjointView<Eigen::Upper>().rankUpdate(rows.transpose());
  count_ += static_cast<std::size_t>(rows.rows());
}

Eigen::MatrixXd CovarianceAccumulator::covariance() const {
  if (count_ < 2) throw ValidationError("sample covariance needs at least two samples");
  const double n = static_cast<double>(count_);
  const Eigen::VectorXd mean = sum_ / n;
  Eigen::MatrixXd cov = cross_;
  cov.selfadjointView<Eigen::Upper>().rankUpdate(mean, -n);
  cov /= n - 1.0;
  return symmetrize(cov);
}

// ---------------------------------------------------------------------------
// Direct inverse

double default_ridge(const Eigen::MatrixXd& cov, std::size_t samples) {
  const auto dim = static_cast<std::size_t>(cov.rows());
  if (samples >= 2 * dim) return 0.0;
  return 1e-8 * cov.trace() / static_cast<double>(dim);
}

ConcentrationMatrix direct_concentration(const Eigen::MatrixXd& cov, double ridge, std::vector<std::string> bus_order) {
  require_square_even(cov, "covariance");
  require_symmetric(cov, "covariance");
  if (!(ridge >= 0.0)) throw ValidationError("ridge must be non-negative");
  const Eigen::MatrixXd reg = cov + ridge * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
  const Eigen::VectorXd lambda = symmetric_eigenvalues(reg);
  if (!(lambda(0) > 0.0) || lambda(lambda.size() - 1) / lambda(0) > kSingularCondition) {
    throw NumericalError("covariance is numerically singular (smallest eigenvalue " + std::to_string(lambda(0)) +
                         "); use more samples, a ridge, or the graphical lasso");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(reg);
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
  ConcentrationMatrix out;
  out.j = 0.5 * (inv + inv.transpose());
  out.bus_order = default_names(std::move(bus_order), cov.rows());
  out.provenance = Provenance::DirectInverse;
  out.ridge = ridge;
  return out;
}

// ---------------------------------------------------------------------------
// Graphical lasso

double glasso_objective(const Eigen::MatrixXd& s, const Eigen::MatrixXd& cov, double lambda) {
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double l1 = s.cwiseAbs().sum() - s.diagonal().cwiseAbs().sum();
  return -logdet + (s.cwiseProduct(cov)).sum() + lambda * l1;
}

double default_glasso_lambda(Eigen::Index dim, std::size_t samples, double c) {
  if (samples == 0) throw ValidationError("lambda rule needs a positive sample count");
  return c * std::sqrt(std::log(static_cast<double>(dim)) / static_cast<double>(samples));
}

namespace {

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

// Precision matrix implied by the working covariance and lasso coefficients.
Eigen::MatrixXd precision_from_coefficients(const Eigen::MatrixXd& w, const Eigen::MatrixXd& coef) {
  const Eigen::Index p = w.rows();
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double dot = 0.0;
    for (Eigen::Index k = 0; k < p; ++k) {
      if (k != j) dot += w(k, j) * coef(k, j);
    }
    const double tjj = 1.0 / (w(j, j) - dot);
    theta(j, j) = tjj;
    for (Eigen::Index k = 0; k < p; ++k) {
      if (k != j) theta(k, j) = -coef(k, j) * tjj;
    }
  }
  return 0.5 * (theta + theta.transpose());
}

// Primal objective at theta minus the dual objective log det W + p at the
// working covariance W. W keeps diag(W) = diag(cov) and |W - cov| <= lambda
// off the diagonal up to the inner tolerance.
double duality_gap(const Eigen::MatrixXd& theta, const Eigen::MatrixXd& w, const Eigen::MatrixXd& cov,
                   double lambda) {
  Eigen::LLT<Eigen::MatrixXd> llt(w);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const double logdet_w = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return glasso_objective(theta, cov, lambda) - (logdet_w + static_cast<double>(w.rows()));
}

// Coordinate descent leaves a residual that near-singular blocks amplify.
// Re-solve each column on its support and keep it if the KKT conditions hold.
// Returns the largest change written into w.
double refine_on_support(Eigen::MatrixXd& w, const Eigen::MatrixXd& cov, double lambda, Eigen::MatrixXd& coef) {
  double change = 0.0;
  const Eigen::Index p = w.rows();
  for (Eigen::Index j = 0; j < p; ++j) {
    std::vector<Eigen::Index> support;
    for (Eigen::Index k = 0; k < p; ++k) {
      if (k != j && coef(k, j) != 0.0) support.push_back(k);
    }
    if (support.empty()) continue;
    const auto m = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd block(m, m);
    Eigen::VectorXd rhs(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      const double sign = coef(support[a], j) > 0.0 ? 1.0 : -1.0;
      rhs(a) = cov(support[a], j) - lambda * sign;
      for (Eigen::Index b = 0; b < m; ++b) block(a, b) = w(support[a], support[b]);
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(block);
    if (ldlt.info() != Eigen::Success) continue;
    const Eigen::VectorXd beta = ldlt.solve(rhs);
    bool ok = beta.allFinite();
    for (Eigen::Index a = 0; a < m && ok; ++a) ok = (beta(a) > 0.0) == (coef(support[a], j) > 0.0);
    Eigen::VectorXd candidate = Eigen::VectorXd::Zero(p);
    for (Eigen::Index a = 0; a < m; ++a) candidate(support[a]) = beta(a);
    for (Eigen::Index k = 0; k < p && ok; ++k) {
      if (k == j || candidate(k) != 0.0) continue;
      double fit = 0.0;
      for (Eigen::Index a = 0; a < m; ++a) fit += w(k, support[a]) * beta(a);
      ok = std::abs(cov(k, j) - fit) <= lambda * (1.0 + 1e-9) + 1e-12 * std::abs(cov(k, j));
    }
    if (!ok) continue;
    coef.col(j) = candidate;
    for (Eigen::Index k = 0; k < p; ++k) {
      if (k == j) continue;
      double fit = 0.0;
      for (Eigen::Index a = 0; a < m; ++a) fit += w(k, support[a]) * beta(a);
      change = std::max(change, std::abs(fit - w(k, j)));
      w(k, j) = fit;
      w(j, k) = fit;
    }
  }
  return change;
}

}  // namespace

ConcentrationMatrix graphical_lasso(const Eigen::MatrixXd& cov, const GlassoOptions& options,
                                    std::vector<std::string> bus_order) {
  require_square_even(cov, "covariance");
  require_symmetric(cov, "covariance");
  if (!(options.lambda >= 0.0)) throw ValidationError("lambda must be non-negative");
  if (!(options.tol > 0.0)) throw ValidationError("tolerance must be positive");
  if ((cov.diagonal().array() <= 0.0).any()) throw ValidationError("covariance diagonal must be positive");
  if (options.lambda == 0.0 && condition_number(cov) > kSingularCondition) {
    throw NumericalError("graphical lasso with lambda = 0 needs a non-singular covariance");
  }

  const Eigen::Index p = cov.rows();
  const double scale = cov.diagonal().cwiseAbs().mean();
  const double outer_tol = options.tol * scale;
  const double inner_tol = 1e-3 * outer_tol;
  constexpr std::size_t kMaxInner = 10000;

  Eigen::MatrixXd w = cov;
  Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(p, p);  // column j holds the lasso solution for j
  Eigen::VectorXd fitted(p);                           // W11 * beta, indexed over all rows

  std::size_t sweep = 0;
  double change = std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (; sweep < options.max_iter && !converged; ++sweep) {
    change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      // fitted(k) = sum_{l != j} W(k,l) beta_l for k != j
      fitted.setZero();
      for (Eigen::Index l = 0; l < p; ++l) {
        const double b = coef(l, j);
        if (l == j || b == 0.0) continue;
        fitted += w.col(l) * b;
      }
      for (std::size_t inner = 0; inner < kMaxInner; ++inner) {
        double step = 0.0;
        for (Eigen::Index k = 0; k < p; ++k) {
          if (k == j) continue;
          const double old = coef(k, j);
          const double partial = cov(k, j) - (fitted(k) - w(k, k) * old);
          const double updated = soft_threshold(partial, options.lambda) / w(k, k);
          if (updated != old) {
            const double delta = updated - old;
            fitted += w.col(k) * delta;
            coef(k, j) = updated;
            step = std::max(step, std::abs(delta) * w(k, k));
          }
        }
        if (step < inner_tol) break;
      }
      for (Eigen::Index k = 0; k < p; ++k) {
        if (k == j) continue;
        change = std::max(change, std::abs(fitted(k) - w(k, j)));
        w(k, j) = fitted(k);
        w(j, k) = fitted(k);
      }
    }
    const Eigen::MatrixXd theta = precision_from_coefficients(w, coef);
    gap = duality_gap(theta, w, cov, options.lambda);
    converged = change < outer_tol || std::abs(gap) < options.tol;
  }
  if (!converged) {
    throw NumericalError("graphical lasso did not converge in " + std::to_string(options.max_iter) +
                         " sweeps (last change " + std::to_string(change) + ", duality gap " + std::to_string(gap) + ")");
  }

  for (int pass = 0; pass < 50; ++pass) {
    if (refine_on_support(w, cov, options.lambda, coef) <= 1e-15 * scale) break;
  }
  ConcentrationMatrix out;
  out.j = precision_from_coefficients(w, coef);
  if (!is_positive_definite(out.j)) throw NumericalError("graphical lasso estimate is not positive definite");
  out.bus_order = default_names(std::move(bus_order), p);
  out.provenance = Provenance::GraphicalLasso;
  out.lambda = options.lambda;
  out.tol = options.tol;
  out.iterations = sweep;
  out.gap = duality_gap(out.j, w, cov, options.lambda);
  return out;
}

ConcentrationMatrix graphical_lasso_standardized(const Eigen::MatrixXd& cov, const GlassoOptions& options,
                                                 std::vector<std::string> bus_order) {
  require_square_even(cov, "covariance");
  if ((cov.diagonal().array() <= 0.0).any()) throw ValidationError("covariance diagonal must be positive");
  const Eigen::VectorXd inv_sd = cov.diagonal().cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd corr = symmetrize(inv_sd.asDiagonal() * cov * inv_sd.asDiagonal());
  ConcentrationMatrix out = graphical_lasso(corr, options, std::move(bus_order));
  out.j = symmetrize(inv_sd.asDiagonal() * out.j * inv_sd.asDiagonal());
  return out;
}

// ---------------------------------------------------------------------------
// Closed form

ConcentrationMatrix analytic_concentration(const LaplacianPair& laplacians, const InjectionStatistics& stats) {
  stats.validate();
  if (stats.dimension() != laplacians.dimension()) throw ValidationError("injection statistics do not match the grid");
  const Eigen::VectorXd det = stats.determinants();
  if ((det.array() <= 0.0).any()) throw ValidationError("injection block determinant D(i,i) is zero");

  const Eigen::MatrixXd& hg = laplacians.h_g;
  const Eigen::MatrixXd& hb = laplacians.h_beta;
  const Eigen::VectorXd d_inv = det.cwiseInverse();
  // D^-1 Sigma_xx as diagonal scalings
  const auto qq = d_inv.cwiseProduct(stats.sigma_qq).asDiagonal();
  const auto pp = d_inv.cwiseProduct(stats.sigma_pp).asDiagonal();
  const auto pq = d_inv.cwiseProduct(stats.sigma_pq).asDiagonal();

  const Eigen::MatrixXd j_vv = hg * (qq * hg - pq * hb) - hb * (pq * hg - pp * hb);
  const Eigen::MatrixXd j_vt = hg * (qq * hb + pq * hg) - hb * (pq * hb + pp * hg);
  const Eigen::MatrixXd j_tv = hb * (qq * hg - pq * hb) + hg * (pq * hg - pp * hb);
  const Eigen::MatrixXd j_tt = hb * (qq * hb + pq * hg) + hg * (pq * hb + pp * hg);

  const auto n = hg.rows();
  ConcentrationMatrix out;
  out.j.resize(2 * n, 2 * n);
  out.j << j_vv, j_vt, j_tv, j_tt;
  if (stats.precision_perturbation) {
    out.j += laplacians.composite * (*stats.precision_perturbation) * laplacians.composite;
  }
  out.j = symmetrize(out.j);
  out.bus_order = laplacians.bus_order;
  out.provenance = Provenance::Analytic;
  return out;
}

// ---------------------------------------------------------------------------
// Noise

Eigen::VectorXd per_bus_noise_spread(const Eigen::MatrixXd& noise_cov) {
  const auto n = noise_cov.rows() / 2;
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = noise_cov(i, i);
    const double b = noise_cov(n + i, n + i);
    const double c = noise_cov(i, n + i);
    out(i) = a + b + std::sqrt((a - b) * (a - b) + 4.0 * c * c);
  }
  return out;
}

Eigen::VectorXd per_bus_injection_spread(const InjectionStatistics& stats) {
  const auto n = stats.sigma_pp.size();
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = stats.sigma_pp(i);
    const double b = stats.sigma_qq(i);
    const double c = stats.sigma_pq(i);
    out(i) = a + b - std::sqrt((a - b) * (a - b) + 4.0 * c * c);
  }
  return out;
}

DeviationBound noise_deviation_bound(const LaplacianPair& laplacians, const InjectionStatistics& stats,
                                     const NoiseStatistics& noise) {
  stats.validate();
  noise.validate();
  const auto dim = static_cast<Eigen::Index>(2 * laplacians.dimension());
  if (noise.covariance.rows() != dim) throw ValidationError("noise dimension does not match the grid");
  if (stats.dimension() != laplacians.dimension()) throw ValidationError("injection statistics do not match the grid");

  DeviationBound b;
  const Eigen::MatrixXd& h = laplacians.composite;
  const Eigen::VectorXd noise_eig = symmetric_eigenvalues(noise.covariance);
  b.lambda_max_noise = std::max(0.0, noise_eig(noise_eig.size() - 1));
  b.lambda_max_h2 = symmetric_eigenvalues(h * h).maxCoeff();
  b.lambda_min_injection = symmetric_eigenvalues(stats.covariance()).minCoeff();
  const double ratio = b.lambda_max_h2 / b.lambda_min_injection;
  b.value = b.lambda_max_noise * ratio * ratio;

  if (noise_eig(0) > 0.0) {
    const Eigen::MatrixXd j = analytic_concentration(laplacians, stats).j;
    const Eigen::MatrixXd noise_precision = symmetrize(noise.covariance.llt().solve(Eigen::MatrixXd::Identity(dim, dim)));
    const double j_max = symmetric_eigenvalues(j).maxCoeff();
    b.spectral_step = j_max * j_max / symmetric_eigenvalues(noise_precision + j).minCoeff();
    const double inj_prec_max = 1.0 / b.lambda_min_injection;
    const double t = b.lambda_max_h2 * inj_prec_max;
    b.injection_step = t * t / symmetric_eigenvalues(noise_precision).minCoeff();
  }

  if (noise.uncorrelated_across_buses() && stats.is_block_diagonal()) {
    const Eigen::VectorXd sn = per_bus_noise_spread(noise.covariance);
    const Eigen::VectorXd sp = per_bus_injection_spread(stats);
    b.max_sigma_n = sn.maxCoeff();
    b.min_sigma_pq = sp.minCoeff();
    b.per_bus = 2.0 * b.lambda_max_h2 * b.lambda_max_h2 * (*b.max_sigma_n) / ((*b.min_sigma_pq) * (*b.min_sigma_pq));

    const auto n = static_cast<Eigen::Index>(laplacians.dimension());
    const bool no_pq = (stats.sigma_pq.array() == 0.0).all();
    const bool no_vt = (noise.covariance.topRightCorner(n, n).diagonal().array() == 0.0).all();
    if (no_pq && no_vt) {
      double max_noise = 0.0;
      double min_inj = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < n; ++i) {
        max_noise = std::max({max_noise, noise.covariance(i, i), noise.covariance(n + i, n + i)});
        min_inj = std::min({min_inj, stats.sigma_pp(i) * stats.sigma_pp(i), stats.sigma_qq(i) * stats.sigma_qq(i)});
      }
      b.per_bus_diagonal = b.lambda_max_h2 * b.lambda_max_h2 * max_noise / min_inj;
    }
  }
  return b;
}

Eigen::MatrixXd noise_deviation_exact(const Eigen::MatrixXd& voltage_cov, const Eigen::MatrixXd& noise_cov) {
  if (voltage_cov.rows() != noise_cov.rows() || voltage_cov.cols() != noise_cov.cols()) {
    throw ValidationError("noise dimension does not match the voltage covariance");
  }
  const Eigen::MatrixXd noisy = checked_inverse(voltage_cov + noise_cov, "noisy voltage covariance");
  const Eigen::MatrixXd clean = checked_inverse(voltage_cov, "voltage covariance");
  return symmetrize(noisy - clean);
}

Eigen::MatrixXd noise_deviation_woodbury(const Eigen::MatrixXd& concentration, const Eigen::MatrixXd& noise_cov) {
  if (concentration.rows() != noise_cov.rows()) throw ValidationError("noise dimension does not match");
  const auto dim = noise_cov.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(noise_cov);
  if (llt.info() != Eigen::Success) throw ValidationError("noise covariance must be positive definite here");
  const Eigen::MatrixXd noise_precision = llt.solve(Eigen::MatrixXd::Identity(dim, dim));
  const Eigen::MatrixXd inner = (noise_precision + concentration).llt().solve(concentration);
  return symmetrize(-concentration * inner);
}

// ---------------------------------------------------------------------------
// Thresholds

GammaThresholds gamma_thresholds(const ConcentrationMatrix& analytic) {
  if (analytic.provenance != Provenance::Analytic) throw ValidationError("gamma thresholds need the analytic matrix");
  const Eigen::MatrixXd vv = analytic.vv();
  const Eigen::MatrixXd sum = vv + analytic.thetatheta();
  const auto n = vv.rows();
  const double floor_vv = kZeroFloor * vv.cwiseAbs().maxCoeff();
  const double floor_sum = kZeroFloor * sum.cwiseAbs().maxCoeff();

  GammaThresholds g{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < n; ++k) {
      if (i == k) continue;
      const double a = std::abs(vv(i, k));
      if (a > floor_vv) g.gamma1 = std::min(g.gamma1, a);
      if (sum(i, k) < -floor_sum) g.gamma2 = std::min(g.gamma2, -sum(i, k));
    }
  }
  if (!std::isfinite(g.gamma1) || !std::isfinite(g.gamma2)) {
    throw NumericalError("concentration matrix has no informative off-diagonal entries");
  }
  return g;
}

}  // namespace gridgm
