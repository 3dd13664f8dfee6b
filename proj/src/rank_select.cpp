#include "sigarch/rank_select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sigarch/errors.hpp"
#include "sigarch/parallel.hpp"
#include "sigarch/random.hpp"

namespace sigarch {

namespace {

Matrix normalized_columns(const Matrix& w) {
  Matrix out = w;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double norm = out.col(j).norm();
    if (norm > 0.0) out.col(j) /= norm;
  }
  return out;
}

double cosine_distance_unit(const Vector& a, const Vector& b) {
  return std::max(0.0, 1.0 - a.dot(b));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace

void EnsembleConfig::validate() const {
  if (k_min < 1) throw InvalidParameter("rank_config.k_min must be >= 1");
  if (k_max < k_min) throw InvalidParameter("rank_config.k_max must be >= k_min (empty k range)");
  if (n_perturbations < 2) throw InvalidParameter("rank_config.n_perturbations must be >= 2");
  if (!(noise_magnitude > 0.0 && noise_magnitude < 1.0))
    throw InvalidParameter("rank_config.noise_magnitude must lie in (0, 1)");
  if (nmf_max_iters < 1) throw InvalidParameter("rank_config.nmf_max_iters must be >= 1");
  if (!(nmf_tol > 0.0)) throw InvalidParameter("rank_config.nmf_tol must be > 0");
  if (!(min_silhouette >= -1.0 && min_silhouette <= 1.0))
    throw InvalidParameter("rank_config.min_silhouette must lie in [-1, 1]");
  if (!(error_slack >= 1.0)) throw InvalidParameter("rank_config.error_slack must be >= 1");
  if (max_threads < 1) throw InvalidParameter("rank_config.max_threads must be >= 1");
}

FeatureMatrix perturb_matrix(const FeatureMatrix& x, double delta, std::uint64_t seed) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw InvalidParameter("perturb_matrix: delta must lie in (0, 1)");
  }
  Rng rng(seed);
  Matrix out = x.values();
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      out(i, j) *= 1.0 + rng.uniform(-delta, delta);
  return FeatureMatrix(std::move(out));
}

std::vector<int> solve_assignment(const Matrix& cost) {
  // Hungarian method with potentials, O(k^3); 1-based internally.
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw ShapeMismatch("solve_assignment: cost matrix must be square");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

EnsembleClustering cluster_ensemble_signatures(const std::vector<Matrix>& w_list, int k) {
  if (w_list.empty()) throw ShapeMismatch("cluster_ensemble_signatures: empty ensemble");
  const Eigen::Index n = w_list.front().rows();
  for (const auto& w : w_list) {
    if (w.rows() != n || w.cols() != k) {
      throw ShapeMismatch("cluster_ensemble_signatures: every W must be " +
                          std::to_string(n) + "x" + std::to_string(k));
    }
  }
  const auto runs = static_cast<int>(w_list.size());
  std::vector<Matrix> unit;
  unit.reserve(w_list.size());
  for (const auto& w : w_list) unit.push_back(normalized_columns(w));

  EnsembleClustering out;
  out.members.assign(static_cast<std::size_t>(k), std::vector<int>(static_cast<std::size_t>(runs)));
  out.centroids = unit.front();

  auto recompute_centroids = [&] {
    Matrix c = Matrix::Zero(n, k);
    for (int cl = 0; cl < k; ++cl)
      for (int r = 0; r < runs; ++r) c.col(cl) += unit[r].col(out.members[cl][r]);
    out.centroids = normalized_columns(c);
  };
  auto assign_run = [&](int r) {
    Matrix cost(k, k);
    for (int cl = 0; cl < k; ++cl)
      for (int j = 0; j < k; ++j)
        cost(cl, j) = cosine_distance_unit(out.centroids.col(cl), unit[r].col(j));
    const auto match = solve_assignment(cost);
    for (int cl = 0; cl < k; ++cl) out.members[cl][r] = match[cl];
  };

  for (int cl = 0; cl < k; ++cl) out.members[cl][0] = cl;
  for (int r = 1; r < runs; ++r) assign_run(r);
  recompute_centroids();
  for (int pass = 0; pass < 2; ++pass) {
    for (int r = 0; r < runs; ++r) assign_run(r);
    recompute_centroids();
  }

  out.silhouettes.assign(static_cast<std::size_t>(k), 1.0);
  if (k == 1) return out;

  // Silhouette with cosine distance; every cluster has exactly `runs` points.
  for (int cl = 0; cl < k; ++cl) {
    double total = 0.0;
    for (int r = 0; r < runs; ++r) {
      const Vector p = unit[r].col(out.members[cl][r]);
      double a = 0.0;
      for (int q = 0; q < runs; ++q) {
        if (q != r) a += cosine_distance_unit(p, unit[q].col(out.members[cl][q]));
      }
      a /= std::max(1, runs - 1);
      double b = std::numeric_limits<double>::infinity();
      for (int other = 0; other < k; ++other) {
        if (other == cl) continue;
        double d = 0.0;
        for (int q = 0; q < runs; ++q) d += cosine_distance_unit(p, unit[q].col(out.members[other][q]));
        b = std::min(b, d / runs);
      }
      const double denom = std::max(a, b);
      total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    out.silhouettes[cl] = std::clamp(total / runs, -1.0, 1.0);
  }
  return out;
}

RankSelectionReport select_rank(const FeatureMatrix& x, const EnsembleConfig& config) {
  config.validate();
  const auto limit = static_cast<int>(std::min(x.n(), x.m()));
  if (config.k_max > limit) {
    throw InvalidParameter("rank_config.k_max = " + std::to_string(config.k_max) +
                           " exceeds min(n, m) = " + std::to_string(limit));
  }
  const int n_k = config.k_max - config.k_min + 1;
  const int runs = config.n_perturbations;

  struct RunResult {
    Matrix w;
    double relative_error = 0.0;
  };
  std::vector<RunResult> results(static_cast<std::size_t>(n_k * runs));
  parallel_for(results.size(), static_cast<std::size_t>(config.max_threads), [&](std::size_t task) {
    const int k = config.k_min + static_cast<int>(task) / runs;
    const int r = static_cast<int>(task) % runs;
    const auto ku = static_cast<std::uint64_t>(k);
    const auto ru = static_cast<std::uint64_t>(r);
    const FeatureMatrix xp =
        perturb_matrix(x, config.noise_magnitude, derive_seed(config.nmf_seed, {ku, ru, 1}));
    const auto f = nmf_factorize(xp, k,
                                 {.max_iters = config.nmf_max_iters,
                                  .tol = config.nmf_tol,
                                  .seed = derive_seed(config.nmf_seed, {ku, ru, 2})});
    RunResult& out = results[task];
    out.w = Matrix::Zero(x.n(), k);
    out.w.leftCols(f.k) = f.w;  // pruned signatures stay as zero columns
    out.relative_error = f.relative_error;
  });

  RankSelectionReport report;
  for (int ki = 0; ki < n_k; ++ki) {
    const int k = config.k_min + ki;
    std::vector<Matrix> ws;
    std::vector<double> errors;
    for (int r = 0; r < runs; ++r) {
      ws.push_back(std::move(results[static_cast<std::size_t>(ki * runs + r)].w));
      errors.push_back(results[static_cast<std::size_t>(ki * runs + r)].relative_error);
    }
    const auto clustering = cluster_ensemble_signatures(ws, k);
    RankStats stats;
    stats.k = k;
    stats.min_silhouette = *std::min_element(clustering.silhouettes.begin(), clustering.silhouettes.end());
    double sum = 0.0;
    for (double s : clustering.silhouettes) sum += s;
    stats.mean_silhouette = sum / k;
    stats.relative_error = median(errors);
    if (!report.per_k.empty() && stats.relative_error > report.per_k.back().relative_error + 0.05) {
      std::ostringstream msg;
      msg << "relative error rose from " << report.per_k.back().relative_error << " at k="
          << k - 1 << " to " << stats.relative_error << " at k=" << k;
      report.warnings.push_back(msg.str());
    }
    report.per_k.push_back(stats);
  }

  const double error_ceiling = config.error_slack * report.per_k.back().relative_error;
  std::ostringstream why;
  for (auto it = report.per_k.rbegin(); it != report.per_k.rend(); ++it) {
    if (it->min_silhouette >= config.min_silhouette && it->relative_error <= error_ceiling) {
      report.chosen_k = it->k;
      why << "largest k with min silhouette >= " << config.min_silhouette
          << " and relative error <= " << config.error_slack << " x error at k_max";
      break;
    }
  }
  if (report.chosen_k == 0) {
    const auto best = std::max_element(
        report.per_k.begin(), report.per_k.end(),
        [](const RankStats& a, const RankStats& b) { return a.min_silhouette < b.min_silhouette; });
    report.chosen_k = best->k;
    why << "no k met both thresholds; fell back to argmax of min silhouette";
  }
  report.selection_rationale = why.str();
  return report;
}

}  // namespace sigarch
