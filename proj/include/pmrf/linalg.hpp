#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pmrf/error.hpp"
#include "pmrf/tensor.hpp"

namespace pmrf {

// Dense square-matrix helpers for the small covariance matrices this project
// works with (d up to a few thousand).  The eigendecomposition itself is
// delegated to Eigen's self-adjoint solver; everything above it (symmetry
// tolerance, eigenvalue clamping, error taxonomy) is ours.

namespace linalg_detail {

inline Eigen::MatrixXd to_eigen(const Tensor& m, const char* context) {
  if (m.rank() != 2 || m.shape()[0] != m.shape()[1]) {
    throw ShapeError(context, "requires a square rank-2 tensor, got " +
                                  Tensor::shape_string(m.shape()));
  }
  const std::size_t d = m.shape()[0];
  Eigen::MatrixXd e(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) e(i, j) = m.at(i, j);
  return e;
}

inline Tensor from_eigen(const Eigen::MatrixXd& e) {
  const std::size_t r = static_cast<std::size_t>(e.rows());
  const std::size_t c = static_cast<std::size_t>(e.cols());
  Tensor t({r, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t.at(i, j) = e(i, j);
  return t;
}

// Max |m_ij - m_ji| must stay within 1e-9 of the largest entry magnitude.
inline void check_symmetric(const Eigen::MatrixXd& m, const char* context) {
  double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9 * scale) {
    throw NumericError(context, "matrix is not symmetric (max asymmetry " +
                                    std::to_string(asym) + ")");
  }
}

}  // namespace linalg_detail

struct SymEig {
  std::vector<double> values;  // ascending
  Tensor vectors;              // column j is the eigenvector for values[j]
};

inline SymEig sym_eig(const Tensor& m) {
  Eigen::MatrixXd e = linalg_detail::to_eigen(m, "sym_eig");
  linalg_detail::check_symmetric(e, "sym_eig");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(e);
  if (solver.info() != Eigen::Success) {
    throw NumericError("sym_eig", "eigendecomposition did not converge");
  }
  SymEig out;
  out.values.assign(solver.eigenvalues().data(),
                    solver.eigenvalues().data() + solver.eigenvalues().size());
  out.vectors = linalg_detail::from_eigen(solver.eigenvectors());
  return out;
}

namespace linalg_detail {

// V * diag(f(lambda)) * V^T with slightly negative eigenvalues treated as 0.
template <typename F>
Tensor sym_function(const Tensor& m, const char* context, F&& f) {
  Eigen::MatrixXd e = to_eigen(m, context);
  check_symmetric(e, context);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(e);
  if (solver.info() != Eigen::Success) {
    throw NumericError(context, "eigendecomposition did not converge");
  }
  Eigen::VectorXd lam = solver.eigenvalues();
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    lam(i) = f(lam(i));
  }
  Eigen::MatrixXd out =
      solver.eigenvectors() * lam.asDiagonal() * solver.eigenvectors().transpose();
  return from_eigen(out);
}

}  // namespace linalg_detail

// Symmetric PSD square root.  Eigenvalues below zero (numerical noise from
// covariance estimation) are clamped to zero rather than rejected.
inline Tensor matrix_sqrt_psd(const Tensor& m) {
  return linalg_detail::sym_function(m, "matrix_sqrt_psd", [](double lam) {
    return std::sqrt(std::max(lam, 0.0));
  });
}

// Inverse square root of a positive-definite matrix.  An eigenvalue at or
// below min_eigenvalue means the matrix is singular for this purpose.
inline Tensor matrix_inv_sqrt_pd(const Tensor& m,
                                 double min_eigenvalue = 1e-12) {
  return linalg_detail::sym_function(
      m, "matrix_inv_sqrt_pd", [min_eigenvalue](double lam) {
        if (lam <= min_eigenvalue) {
          throw NumericError("matrix_inv_sqrt_pd",
                             "matrix is singular (eigenvalue " +
                                 std::to_string(lam) + ")");
        }
        return 1.0 / std::sqrt(lam);
      });
}

// Plain rank-2 matrix product (row-major, no transposes).
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul", "incompatible shapes " +
                                   Tensor::shape_string(a.shape()) + " x " +
                                   Tensor::shape_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a.at(i, p);
      for (std::size_t j = 0; j < n; ++j) c.at(i, j) += aip * b.at(p, j);
    }
  }
  return c;
}

// Matrix-vector product for a rank-2 matrix and rank-1 vector.
inline Tensor matvec(const Tensor& a, const Tensor& v) {
  if (a.rank() != 2 || v.rank() != 1 || a.shape()[1] != v.shape()[0]) {
    throw ShapeError("matvec", "incompatible shapes " +
                                   Tensor::shape_string(a.shape()) + " x " +
                                   Tensor::shape_string(v.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * v[p];
    out[i] = acc;
  }
  return out;
}

inline double trace(const Tensor& m) {
  if (m.rank() != 2 || m.shape()[0] != m.shape()[1]) {
    throw ShapeError("trace", "requires a square rank-2 tensor, got " +
                                  Tensor::shape_string(m.shape()));
  }
  double t = 0.0;
  for (std::size_t i = 0; i < m.shape()[0]; ++i) t += m.at(i, i);
  return t;
}

}  // namespace pmrf
