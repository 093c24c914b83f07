#pragma once

// Least squares through second moments.
//
// Every regression in the library is solved from the Gram matrix of the
// inputs and their cross moments with the target, never from raw rows, so the
// same routine serves exact Gaussian oracles and empirical samples alike.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "dagagg/error.hpp"

namespace dagagg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Eigenvalues below this fraction of the largest are treated as zero.
inline constexpr double kRankTolerance = 1e-10;
/// Orthogonality tolerance for exact population oracles.
inline constexpr double kSolverTolPopulation = 1e-8;
/// Orthogonality tolerance for finite-sample runs.
inline constexpr double kSolverTolSample = 1e-6;
/// Below -kPsdTolerance * lambda_max a Gram matrix is rejected as corrupted.
inline constexpr double kPsdTolerance = 1e-6;

/// Symmetric matrix of moments E[u_a u_b] with the variable labels attached.
class SecondMomentMatrix {
 public:
  SecondMomentMatrix() = default;

  explicit SecondMomentMatrix(Matrix entries, std::vector<std::string> labels = {})
      : entries_(std::move(entries)), labels_(std::move(labels)) {
    if (entries_.rows() != entries_.cols()) {
      throw DimensionMismatch("second-moment matrix must be square");
    }
    if (!labels_.empty() && labels_.size() != static_cast<std::size_t>(entries_.rows())) {
      throw DimensionMismatch("label count does not match matrix dimension");
    }
    const double scale = std::max(1.0, entries_.cwiseAbs().maxCoeff());
    if (entries_.size() > 0 && (entries_ - entries_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw InvalidArgument("second-moment matrix is not symmetric");
    }
  }

  const Matrix& entries() const { return entries_; }
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t dimension() const { return static_cast<std::size_t>(entries_.rows()); }

 private:
  Matrix entries_;
  std::vector<std::string> labels_;
};

struct LeastSquaresSolution {
  Vector weights;
  double achieved_mse = 0.0;
  std::size_t effective_rank = 0;
};

/// Minimum-norm solution of gram * w = cross.
///
/// Spectral components with eigenvalue below kRankTolerance * lambda_max are
/// dropped, which selects the minimum Euclidean norm minimizer when inputs are
/// collinear (e.g. a parent prediction that duplicates a local feature).
inline LeastSquaresSolution solve_least_squares(const Matrix& gram, const Vector& cross,
                                                double target_second_moment) {
  if (gram.rows() != gram.cols() || gram.rows() != cross.size()) {
    throw DimensionMismatch("gram is " + std::to_string(gram.rows()) + "x" +
                            std::to_string(gram.cols()) + " but cross has " +
                            std::to_string(cross.size()) + " entries");
  }
  LeastSquaresSolution out;
  const Eigen::Index n = gram.rows();
  out.weights = Vector::Zero(n);
  if (n == 0) {
    out.achieved_mse = std::max(0.0, target_second_moment);
    return out;
  }

  const Matrix sym = 0.5 * (gram + gram.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) throw Error("eigendecomposition failed");
  const Vector& values = eig.eigenvalues();
  const Matrix& vectors = eig.eigenvectors();
  const double lambda_max = values.maxCoeff();
  if (values.minCoeff() < -kPsdTolerance * std::max(lambda_max, 0.0)) {
    throw NotPsd("gram has eigenvalue " + std::to_string(values.minCoeff()) +
                 " against max " + std::to_string(lambda_max));
  }
  if (lambda_max <= 0.0) {
    out.achieved_mse = std::max(0.0, target_second_moment);
    return out;
  }

  const double cutoff = kRankTolerance * lambda_max;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (values(i) <= cutoff) continue;
    const double coord = vectors.col(i).dot(cross) / values(i);
    out.weights += coord * vectors.col(i);
    ++out.effective_rank;
  }
  out.achieved_mse = std::max(0.0, target_second_moment - out.weights.dot(cross));
  return out;
}

inline LeastSquaresSolution solve_least_squares(const SecondMomentMatrix& gram, const Vector& cross,
                                                double target_second_moment) {
  return solve_least_squares(gram.entries(), cross, target_second_moment);
}

inline double min_eigenvalue(const Matrix& m) {
  if (m.rows() != m.cols()) throw DimensionMismatch("min_eigenvalue needs a square matrix");
  if (m.rows() == 0) throw DimensionMismatch("min_eigenvalue of an empty matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw Error("eigendecomposition failed");
  return eig.eigenvalues().minCoeff();
}

inline double min_eigenvalue(const SecondMomentMatrix& m) { return min_eigenvalue(m.entries()); }

/// The m x m Gram of consecutive lower-bound features: 2 on the diagonal,
/// -1 on the first off-diagonals.
inline Matrix tridiagonal_difference_gram(std::size_t m) {
  const auto n = static_cast<Eigen::Index>(m);
  Matrix c = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, i) = 2.0;
    if (i + 1 < n) {
      c(i, i + 1) = -1.0;
      c(i + 1, i) = -1.0;
    }
  }
  return c;
}

/// 1 - (C^{-1})_{11} for the tridiagonal Gram above, evaluated by explicit
/// inversion. Equals the suffix-predictor MSE with m suffix features.
inline double tridiag_suffix_mse(std::size_t m) {
  if (m == 0) throw InvalidArgument("tridiag_suffix_mse requires m >= 1");
  const Matrix inverse = tridiagonal_difference_gram(m).inverse();
  return 1.0 - inverse(0, 0);
}

}  // namespace dagagg
