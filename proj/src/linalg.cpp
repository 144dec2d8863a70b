#include "gridgm/linalg.hpp"

#include <cmath>
#include <limits>

#include "gridgm/error.hpp"

namespace gridgm {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  out.triangularView<Eigen::StrictlyLower>() = m.transpose().triangularView<Eigen::StrictlyLower>();
  return out;
}

Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigen decomposition failed");
  return es.eigenvalues();
}

double condition_number(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 1.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  const double smallest = s(s.size() - 1);
  if (!(smallest > 0.0)) return std::numeric_limits<double>::infinity();
  return s(0) / smallest;
}

Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& m, const std::string& what) {
  const double cond = condition_number(m);
  if (!(cond <= kSingularCondition)) {
    throw NumericalError(what + " is numerically singular (condition number " + std::to_string(cond) + ")");
  }
  return m.partialPivLu().inverse();
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double tolerance) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigen decomposition failed");
  Eigen::VectorXd lambda = es.eigenvalues();
  const double scale = lambda.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < -tolerance * scale) {
      throw NumericalError("matrix is not positive semidefinite (eigenvalue " + std::to_string(lambda(i)) + ")");
    }
    lambda(i) = std::sqrt(std::max(lambda(i), 0.0));
  }
  return symmetrize(es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose());
}

Eigen::MatrixXd pd_inverse_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigen decomposition failed");
  const Eigen::VectorXd& lambda = es.eigenvalues();
  if (!(lambda(0) > 0.0)) throw NumericalError("matrix is not positive definite");
  const Eigen::VectorXd inv_root = lambda.cwiseSqrt().cwiseInverse();
  return symmetrize(es.eigenvectors() * inv_root.asDiagonal() * es.eigenvectors().transpose());
}

bool is_positive_definite(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  return llt.info() == Eigen::Success;
}

}  // namespace gridgm
