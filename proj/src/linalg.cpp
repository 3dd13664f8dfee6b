#include "sigarch/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sigarch/errors.hpp"
#include "sigarch/random.hpp"

namespace sigarch {

namespace {

constexpr double kDenominatorFloor = 1e-12;
constexpr double kPruneNorm = 1e-10;

void check_dims(Eigen::Index expected, Eigen::Index got, const char* what) {
  if (expected != got) {
    throw DimensionMismatch(std::string(what) + ": expected length " +
                            std::to_string(expected) + ", got " +
                            std::to_string(got));
  }
}

}  // namespace

FeatureMatrix::FeatureMatrix(Matrix values) : values_(std::move(values)) {
  if (values_.rows() < 1 || values_.cols() < 1) {
    throw InvalidParameter("feature matrix must be at least 1x1");
  }
  if (!values_.allFinite()) {
    throw InvalidParameter("feature matrix contains NaN or infinite entries");
  }
  if (values_.minCoeff() < 0.0) {
    throw InvalidParameter("feature matrix contains negative entries");
  }
}

FeatureMatrix FeatureMatrix::columns(const std::vector<Eigen::Index>& idx) const {
  Matrix sub(values_.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    sub.col(static_cast<Eigen::Index>(j)) = values_.col(idx[j]);
  }
  return FeatureMatrix(std::move(sub));
}

Factorization nmf_factorize(const FeatureMatrix& x, int k, const NmfOptions& options) {
  const Matrix& X = x.values();
  const Eigen::Index n = X.rows();
  const Eigen::Index m = X.cols();
  if (k < 1 || k > std::min(n, m)) {
    throw InvalidRank("rank " + std::to_string(k) + " outside [1, " +
                      std::to_string(std::min(n, m)) + "]");
  }
  if (options.max_iters < 1 || !(options.tol > 0.0)) {
    throw InvalidParameter("nmf: max_iters must be >= 1 and tol > 0");
  }
  if (X.maxCoeff() <= 0.0) {
    throw DegenerateInput("nmf: input matrix is all-zero");
  }

  Rng rng(options.seed);
  const double scale = X.mean() / k;
  Matrix W(n, k);
  Matrix H(k, m);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < n; ++i) W(i, j) = rng.uniform_open_low() * scale;
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < k; ++i) H(i, j) = rng.uniform_open_low() * scale;

  Factorization out;
  double previous = (X - W * H).squaredNorm();
  if (options.record_history) out.objective_history.push_back(previous);

  int it = 0;
  while (it < options.max_iters) {
    ++it;
    const Matrix wtx = W.transpose() * X;
    const Matrix wtwh = (W.transpose() * W) * H;
    H = H.cwiseProduct(wtx).cwiseQuotient((wtwh.array() + kDenominatorFloor).matrix());

    const Matrix xht = X * H.transpose();
    const Matrix whht = W * (H * H.transpose());
    W = W.cwiseProduct(xht).cwiseQuotient((whht.array() + kDenominatorFloor).matrix());

    const double objective = (X - W * H).squaredNorm();
    if (options.record_history) out.objective_history.push_back(objective);
    const bool converged =
        objective == 0.0 ||
        std::abs(previous - objective) < options.tol * std::max(previous, 1e-300);
    previous = objective;
    if (converged) break;
  }

  // Prune dead columns, then move the scale of each signature into H.
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (W.col(j).norm() >= kPruneNorm) keep.push_back(j);
  }
  if (keep.empty()) {
    throw DegenerateInput("nmf: every signature collapsed to zero");
  }
  const auto k_eff = static_cast<Eigen::Index>(keep.size());
  out.w.resize(n, k_eff);
  out.h.resize(k_eff, m);
  for (Eigen::Index s = 0; s < k_eff; ++s) {
    const double norm = W.col(keep[s]).norm();
    out.w.col(s) = W.col(keep[s]) / norm;
    out.h.row(s) = H.row(keep[s]) * norm;
  }
  out.k = static_cast<int>(k_eff);
  out.iterations = it;
  out.relative_error = (X - out.w * out.h).norm() / X.norm();
  return out;
}

ProjectionResult nnls_solve(const Matrix& m, const Vector& x, double tol) {
  check_dims(m.rows(), x.size(), "nnls_solve");
  if (m.cols() < 1) throw InvalidParameter("nnls_solve: matrix has no columns");
  if (!x.allFinite()) throw InvalidParameter("nnls_solve: x is not finite");
  if (!(tol > 0.0)) throw InvalidParameter("nnls_solve: tol must be positive");

  const Eigen::Index K = m.cols();
  Vector h = Vector::Zero(K);
  std::vector<bool> passive(static_cast<std::size_t>(K), false);
  // Columns whose entry produced a non-positive trial coefficient right away;
  // they are skipped until the passive set changes again.
  std::vector<bool> blocked(static_cast<std::size_t>(K), false);

  auto solve_passive = [&](Vector& z) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < K; ++i)
      if (passive[static_cast<std::size_t>(i)]) idx.push_back(i);
    Matrix sub(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = m.col(idx[c]);
    const Vector zp = sub.colPivHouseholderQr().solve(x);
    z.setZero(K);
    for (std::size_t c = 0; c < idx.size(); ++c) z(idx[c]) = zp(static_cast<Eigen::Index>(c));
  };

  const int max_outer = static_cast<int>(3 * K + 10);
  Vector z(K);
  for (int outer = 0; outer < max_outer; ++outer) {
    const Vector grad = m.transpose() * (x - m * h);
    Eigen::Index best = -1;
    double best_value = tol;
    for (Eigen::Index i = 0; i < K; ++i) {
      const auto si = static_cast<std::size_t>(i);
      if (!passive[si] && !blocked[si] && grad(i) > best_value) {
        best_value = grad(i);
        best = i;
      }
    }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;

    solve_passive(z);
    if (z(best) <= 0.0) {
      // Numerically dependent column; the step would not improve the fit.
      passive[static_cast<std::size_t>(best)] = false;
      blocked[static_cast<std::size_t>(best)] = true;
      continue;
    }
    std::fill(blocked.begin(), blocked.end(), false);

    for (int inner = 0; inner < max_outer; ++inner) {
      double alpha = 1.0;
      Eigen::Index limiting = -1;
      for (Eigen::Index i = 0; i < K; ++i) {
        if (passive[static_cast<std::size_t>(i)] && z(i) <= 0.0) {
          const double a = h(i) / (h(i) - z(i));
          if (limiting < 0 || a < alpha) {
            alpha = a;
            limiting = i;
          }
        }
      }
      if (limiting < 0) {
        h = z;
        break;
      }
      h += alpha * (z - h);
      h(limiting) = 0.0;
      for (Eigen::Index i = 0; i < K; ++i) {
        const auto si = static_cast<std::size_t>(i);
        if (passive[si] && h(i) <= 0.0) {
          passive[si] = false;
          h(i) = 0.0;
        }
      }
      solve_passive(z);
    }
  }

  h = h.cwiseMax(0.0);
  ProjectionResult out;
  out.reconstruction = m * h;
  out.residual_norm = (x - out.reconstruction).norm();
  out.coefficients = std::move(h);
  return out;
}

double nnls_kkt_violation(const Matrix& m, const Vector& x, const Vector& h) {
  check_dims(m.rows(), x.size(), "nnls_kkt_violation");
  check_dims(m.cols(), h.size(), "nnls_kkt_violation");
  const Vector grad = m.transpose() * (m * h - x);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    if (h(i) < 0.0) worst = std::max(worst, -h(i));
    if (h(i) > 0.0) {
      worst = std::max(worst, std::abs(grad(i)));
    } else {
      worst = std::max(worst, -grad(i));
    }
  }
  return worst;
}

Vector reconstruct(const Matrix& m, const Vector& h) {
  check_dims(m.cols(), h.size(), "reconstruct");
  return m * h;
}

double cosine_similarity(const Vector& a, const Vector& b) {
  check_dims(a.size(), b.size(), "cosine_similarity");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

}  // namespace sigarch
