#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "gridgm/error.hpp"
#include "gridgm/linalg.hpp"
#include "gridgm/topology.hpp"

namespace gridgm {

namespace {

struct BlockSplit {
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;
};

// Nearest [[A, B], [B, -A]] with A, B symmetric.
BlockSplit project_blocks(const Eigen::MatrixXd& r) {
  const Eigen::Index n = r.rows() / 2;
  const Eigen::MatrixXd r11 = r.topLeftCorner(n, n);
  const Eigen::MatrixXd r12 = r.topRightCorner(n, n);
  const Eigen::MatrixXd r21 = r.bottomLeftCorner(n, n);
  const Eigen::MatrixXd r22 = r.bottomRightCorner(n, n);
  Eigen::MatrixXd a = 0.5 * (r11 - r22);
  Eigen::MatrixXd b = 0.5 * (r12 + r21);
  a = 0.5 * (a + a.transpose()).eval();
  b = 0.5 * (b + b.transpose()).eval();
  return {a, b};
}

Eigen::MatrixXd assemble(const BlockSplit& s) {
  const Eigen::Index n = s.a.rows();
  Eigen::MatrixXd h(2 * n, 2 * n);
  h << s.a, s.b, s.b, -s.a;
  return h;
}

double structure_residual(const Eigen::MatrixXd& r) {
  const double norm = r.norm();
  if (norm == 0.0) return 0.0;
  return (r - assemble(project_blocks(r))).norm() / norm;
}

// Linear map from a rank-one term T to the violations of the block structure:
// upper triangle of T11 + T22 and strict upper triangle of T12 - T21.
Eigen::VectorXd structure_violation(const Eigen::MatrixXd& t) {
  const Eigen::Index n = t.rows() / 2;
  Eigen::VectorXd out(n * n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) out(k++) = t(i, j) + t(n + i, n + j);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) out(k++) = t(i, n + j) - t(n + i, j);
  }
  return out;
}

// Share of the matrix that breaks the sign pattern of a reduced Laplacian:
// positive off-diagonals and negative row sums (lines to the reference).
double laplacian_defect(const BlockSplit& s, double norm) {
  if (norm == 0.0) return 0.0;
  double bad = 0.0;
  for (const Eigen::MatrixXd* m : {&s.a, &s.b}) {
    for (Eigen::Index i = 0; i < m->rows(); ++i) {
      for (Eigen::Index j = 0; j < m->cols(); ++j) {
        if (i != j && (*m)(i, j) > 0.0) bad += (*m)(i, j) * (*m)(i, j);
      }
      const double row = m->row(i).sum();
      if (row < 0.0) bad += row * row;
    }
  }
  return std::sqrt(bad) / norm;
}

// Connected groups of buses in the support of the concentration matrix.
std::vector<Eigen::Index> bus_islands(const Eigen::MatrixXd& j) {
  const Eigen::Index n = j.rows() / 2;
  const double floor = 1e-12 * j.cwiseAbs().maxCoeff();
  std::vector<Eigen::Index> parent(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) parent[i] = i;
  const auto find = [&](Eigen::Index i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const double m = std::max({std::abs(j(a, b)), std::abs(j(a, n + b)), std::abs(j(n + a, b)),
                                 std::abs(j(n + a, n + b))});
      if (m > floor) parent[find(a)] = find(b);
    }
  }
  std::vector<Eigen::Index> label(static_cast<std::size_t>(n), -1);
  std::vector<Eigen::Index> out(static_cast<std::size_t>(n));
  Eigen::Index next = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index root = find(i);
    if (label[root] < 0) label[root] = next++;
    out[i] = label[root];
  }
  return out;
}

}  // namespace

RecoveredParameters recover_parameters(const Eigen::MatrixXd& voltage_cov, const Eigen::MatrixXd& injection_cov,
                                       std::vector<std::string> bus_order, double line_floor) {
  const Eigen::Index dim = voltage_cov.rows();
  if (dim == 0 || dim % 2 != 0 || voltage_cov.cols() != dim) {
    throw ValidationError("voltage covariance must be square with even dimension");
  }
  if (injection_cov.rows() != dim || injection_cov.cols() != dim) {
    throw ValidationError("injection covariance dimension does not match voltage covariance");
  }
  const Eigen::Index n = dim / 2;
  if (bus_order.empty()) {
    for (Eigen::Index i = 0; i < n; ++i) bus_order.push_back(std::to_string(i));
  }
  if (static_cast<Eigen::Index>(bus_order.size()) != n) throw ValidationError("bus order length mismatch");
  if (!is_positive_definite(voltage_cov)) throw ValidationError("voltage covariance is not positive definite");
  if (!is_positive_definite(injection_cov)) throw ValidationError("injection covariance is not positive definite");

  const Eigen::MatrixXd concentration = symmetrize(checked_inverse(voltage_cov, "voltage covariance"));
  const Eigen::MatrixXd s_half = psd_sqrt(injection_cov);
  const Eigen::MatrixXd s_inv_half = pd_inverse_sqrt(injection_cov);
  const Eigen::MatrixXd inner = symmetrize(s_inv_half * concentration * s_inv_half);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(inner);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed during parameter recovery");
  const Eigen::VectorXd mu = eig.eigenvalues();
  if (mu.minCoeff() < -1e-8 * mu.cwiseAbs().maxCoeff()) {
    throw NumericalError("inner matrix of parameter recovery is not positive semidefinite");
  }
  const Eigen::VectorXd root = mu.cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd w = s_half * eig.eigenvectors();

  RecoveredParameters out;
  Eigen::MatrixXd r = symmetrize(w * root.asDiagonal() * w.transpose());
  out.principal_residual = structure_residual(r);
  out.branch = SquareRootBranch::Principal;

  if (out.principal_residual > kRecoveryResidualTolerance) {
    // Signs s_k with sum_k s_k root_k w_k w_k^T of block form solve C s = 0.
    // When the reference bus splits the grid, every island has its own sign
    // freedom, so the constraints are solved per island.
    const auto island = bus_islands(concentration);
    const Eigen::Index islands = *std::max_element(island.begin(), island.end()) + 1;
    std::vector<Eigen::Index> owner(static_cast<std::size_t>(dim));
    for (Eigen::Index k = 0; k < dim; ++k) {
      Eigen::VectorXd mass = Eigen::VectorXd::Zero(islands);
      for (Eigen::Index i = 0; i < n; ++i) {
        mass(island[i]) += w(i, k) * w(i, k) + w(n + i, k) * w(n + i, k);
      }
      mass.maxCoeff(&owner[static_cast<std::size_t>(k)]);
    }

    Eigen::VectorXd signs = Eigen::VectorXd::Ones(dim);
    for (Eigen::Index c = 0; c < islands; ++c) {
      std::vector<Eigen::Index> cols;
      for (Eigen::Index k = 0; k < dim; ++k) {
        if (owner[static_cast<std::size_t>(k)] == c) cols.push_back(k);
      }
      const auto m = static_cast<Eigen::Index>(cols.size());
      Eigen::MatrixXd constraints(n * n, m);
      for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::VectorXd col = w.col(cols[k]);
        constraints.col(k) = structure_violation(root(cols[k]) * col * col.transpose());
        const double norm = constraints.col(k).norm();
        if (norm > 0.0) constraints.col(k) /= norm;
      }
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(constraints, Eigen::ComputeFullV);
      const Eigen::VectorXd sv = svd.singularValues();
      Eigen::Index rank = 0;
      for (Eigen::Index k = 0; k < sv.size(); ++k) rank += sv(k) > 1e-8 * sv(0) ? 1 : 0;
      // More than one null direction means several sign patterns (or a
      // continuum, for repeated eigenvalues) satisfy the block structure.
      if (m - rank != 1) out.identifiable = false;
      // Repeated eigenvalues leave the eigenbasis, and so the root, undetermined.
      for (Eigen::Index a = 0; a + 1 < m; ++a) {
        if (mu(cols[a + 1]) - mu(cols[a]) <= 1e-10 * mu(dim - 1)) out.identifiable = false;
      }
      const Eigen::VectorXd null = svd.matrixV().col(m - 1);
      double trace = 0.0;
      for (Eigen::Index k = 0; k < m; ++k) {
        const double s = null(k) >= 0.0 ? 1.0 : -1.0;
        signs(cols[k]) = s;
        // trace(H_g) + trace(H_beta) contribution of this term
        for (Eigen::Index i = 0; i < n; ++i) {
          const double a = w(i, cols[k]);
          const double b = w(n + i, cols[k]);
          trace += s * root(cols[k]) * (0.5 * (a * a - b * b) + a * b);
        }
      }
      if (trace < 0.0) {
        for (const auto k : cols) signs(k) = -signs(k);
      }
    }
    r = symmetrize(w * (signs.cwiseProduct(root)).asDiagonal() * w.transpose());
    out.branch = SquareRootBranch::SignResolved;
  }
  const BlockSplit split = project_blocks(r);
  out.residual = std::max(structure_residual(r), laplacian_defect(split, r.norm()));

  out.h_g = split.a;
  out.h_beta = split.b;
  out.h_composite = assemble(split);

  const double scale = std::max(out.h_g.cwiseAbs().maxCoeff(), out.h_beta.cwiseAbs().maxCoeff());
  const double floor = line_floor * scale;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double g = -out.h_g(i, j);
      const double beta = -out.h_beta(i, j);
      if (std::max(std::abs(g), std::abs(beta)) > floor) {
        out.lines.push_back({bus_order[static_cast<std::size_t>(i)], bus_order[static_cast<std::size_t>(j)], g, beta});
      }
    }
  }
  // The reduced Laplacian keeps each bus's line to the reference in its row sum.
  for (Eigen::Index i = 0; i < n; ++i) {
    const double g = out.h_g.row(i).sum();
    const double beta = out.h_beta.row(i).sum();
    if (std::max(std::abs(g), std::abs(beta)) > floor) {
      out.lines.push_back({bus_order[static_cast<std::size_t>(i)], "", g, beta});
    }
  }
  return out;
}

}  // namespace gridgm
