#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sigarch/linalg.hpp"

namespace sigarch {

/// Bootstrap-ensemble parameters for choosing the latent dimension.
struct EnsembleConfig {
  int k_min = 1;
  int k_max = 8;
  int n_perturbations = 16;
  double noise_magnitude = 0.03;
  std::uint64_t nmf_seed = 0;
  int nmf_max_iters = 2000;
  double nmf_tol = 1e-8;
  /// A candidate k qualifies when its weakest cluster is at least this stable...
  double min_silhouette = 0.75;
  /// ...and its median error is within this factor of the error at k_max.
  double error_slack = 2.0;
  /// Worker cap for the (k, run) factorizations. Output does not depend on it.
  int max_threads = 1;

  /// Throws InvalidParameter naming the offending field.
  void validate() const;
};

struct RankStats {
  int k = 0;
  double min_silhouette = 0.0;
  double mean_silhouette = 0.0;
  double relative_error = 0.0;
};

struct RankSelectionReport {
  std::vector<RankStats> per_k;
  int chosen_k = 0;
  std::string selection_rationale;
  /// Consecutive-k error increases above 0.05; informational.
  std::vector<std::string> warnings;
};

/// X'_ij = X_ij (1 + u_ij), u_ij ~ U[-delta, delta]. Zeros stay zero.
FeatureMatrix perturb_matrix(const FeatureMatrix& x, double delta, std::uint64_t seed);

/// Cross-run clustering of signatures. members[c][r] is the column of run r
/// placed in cluster c; each cluster holds exactly one column per run.
struct EnsembleClustering {
  std::vector<std::vector<int>> members;
  std::vector<double> silhouettes;
  Matrix centroids;  // n x k, unit columns
};

EnsembleClustering cluster_ensemble_signatures(const std::vector<Matrix>& w_list, int k);

/// Minimum-cost perfect matching on a square cost matrix; returns the column
/// assigned to each row.
std::vector<int> solve_assignment(const Matrix& cost);

RankSelectionReport select_rank(const FeatureMatrix& x, const EnsembleConfig& config);

}  // namespace sigarch
