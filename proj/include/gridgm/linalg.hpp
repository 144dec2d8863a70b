/**
 * @file linalg.hpp
 * @brief Small dense helpers for symmetric matrices.
 */
#pragma once

#include <string>

#include <Eigen/Dense>

namespace gridgm {

/// Condition number above which a matrix is treated as singular.
inline constexpr double kSingularCondition = 1e12;

/// Copies the upper triangle onto the lower one, giving exact symmetry.
Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m);

/// Ascending eigenvalues of a symmetric matrix.
Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& m);

/// 2-norm condition number via singular values (infinite when singular).
double condition_number(const Eigen::MatrixXd& m);

/// Inverse, or NumericalError naming `what` when the condition number
/// exceeds kSingularCondition.
Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& m, const std::string& what);

/// Principal square root of a symmetric PSD matrix. Negative eigenvalues
/// within `tolerance * max |eigenvalue|` are clamped to zero; larger ones
/// raise NumericalError.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double tolerance = 1e-8);

/// Inverse principal square root of a symmetric PD matrix.
Eigen::MatrixXd pd_inverse_sqrt(const Eigen::MatrixXd& m);

bool is_positive_definite(const Eigen::MatrixXd& m);

}  // namespace gridgm
