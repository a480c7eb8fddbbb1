#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "mmf/error.hpp"

namespace mmf {

struct SymmetricEigen {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // column i pairs with values(i)
};

struct JacobiOptions {
  int max_sweeps = 100;
  /// Stop once the off-diagonal Frobenius norm falls below
  /// tolerance * max(1, ||A||_F).
  double tolerance = 1e-10;
};

/// Cyclic Jacobi eigendecomposition of a dense symmetric matrix. Only the
/// upper triangle is trusted; the input is symmetrized from it. Eigenvalues
/// are sorted descending with ties kept in diagonal order; each
/// eigenvector's largest-magnitude entry is made positive.
inline SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& input, const JacobiOptions& options = {}) {
  const Eigen::Index n = input.rows();
  if (input.cols() != n) throw Error(ErrorKind::DimensionMismatch, "eigensolver needs a square matrix");
  Eigen::MatrixXd a = input.triangularView<Eigen::Upper>();
  a.triangularView<Eigen::StrictlyLower>() = a.transpose().triangularView<Eigen::StrictlyLower>();
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);

  const double scale = std::max(1.0, a.norm());
  auto off_norm = [&] {
    double sum = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) sum += 2.0 * a(p, q) * a(p, q);
    return std::sqrt(sum);
  };

  bool converged = off_norm() <= options.tolerance * scale;
  for (int sweep = 0; sweep < options.max_sweeps && !converged; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = a(q, p) = 0.0;
        for (Eigen::Index r = 0; r < n; ++r) {
          if (r == p || r == q) continue;
          const double g = a(r, p);
          const double h = a(r, q);
          a(r, p) = a(p, r) = g - s * (h + g * tau);
          a(r, q) = a(q, r) = h + s * (g - h * tau);
        }
        for (Eigen::Index r = 0; r < n; ++r) {
          const double g = v(r, p);
          const double h = v(r, q);
          v(r, p) = g - s * (h + g * tau);
          v(r, q) = h + s * (g - h * tau);
        }
      }
    }
    converged = off_norm() <= options.tolerance * scale;
  }
  if (!converged)
    throw Error(ErrorKind::EigensolverFailure,
                "Jacobi did not converge within " + std::to_string(options.max_sweeps) + " sweeps");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });

  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index src = order[static_cast<std::size_t>(k)];
    out.values(k) = a(src, src);
    Eigen::VectorXd col = v.col(src);
    Eigen::Index arg = 0;
    for (Eigen::Index r = 1; r < n; ++r)
      if (std::abs(col(r)) > std::abs(col(arg))) arg = r;
    if (col(arg) < 0.0) col = -col;
    out.vectors.col(k) = col;
  }
  return out;
}

}  // namespace mmf
