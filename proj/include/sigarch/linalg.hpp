#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace sigarch {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Nonnegative observation matrix, features as rows and samples as columns.
/// Construction validates: at least 1x1, finite, every entry >= 0.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  explicit FeatureMatrix(Matrix values);

  [[nodiscard]] const Matrix& values() const noexcept { return values_; }
  [[nodiscard]] Eigen::Index n() const noexcept { return values_.rows(); }
  [[nodiscard]] Eigen::Index m() const noexcept { return values_.cols(); }

  /// Column subset, in the given order.
  [[nodiscard]] FeatureMatrix columns(const std::vector<Eigen::Index>& idx) const;

 private:
  Matrix values_;
};

struct NmfOptions {
  int max_iters = 2000;
  double tol = 1e-8;
  std::uint64_t seed = 0;
  /// Keep the objective after every iteration in Factorization::objective_history.
  bool record_history = false;
};

/// X ~ W H. Columns of W are rescaled to unit L2 norm (H absorbs the scale),
/// so k may be smaller than requested when degenerate columns were pruned.
struct Factorization {
  Matrix w;
  Matrix h;
  int k = 0;
  double relative_error = 0.0;
  int iterations = 0;
  std::vector<double> objective_history;
};

/// Frobenius-norm NMF with Lee-Seung multiplicative updates.
/// Throws DegenerateInput for an all-zero X, InvalidRank unless 1 <= k <= min(n, m).
Factorization nmf_factorize(const FeatureMatrix& x, int k, const NmfOptions& options = {});

struct ProjectionResult {
  Vector coefficients;
  Vector reconstruction;
  double residual_norm = 0.0;
};

/// arg min_{h >= 0} ||x - M h||_2 by the Lawson-Hanson active-set method.
/// `tol` bounds the dual feasibility violation accepted at termination.
ProjectionResult nnls_solve(const Matrix& m, const Vector& x, double tol = 1e-10);

/// Largest KKT violation of `h` for the NNLS problem (M, x), using the
/// gradient g = M^T (M h - x): max over h_i = 0 of -g_i and over h_i > 0 of |g_i|.
/// Negative entries of h count as violations too.
double nnls_kkt_violation(const Matrix& m, const Vector& x, const Vector& h);

Vector reconstruct(const Matrix& m, const Vector& h);

/// Cosine of the angle between a and b; 0 when either has zero norm.
double cosine_similarity(const Vector& a, const Vector& b);

}  // namespace sigarch
