#pragma once
// Planted-factor generators used as oracles by the unit and acceptance tests.

#include <cmath>
#include <cstdint>

#include <filesystem>
#include <string>

#include "sigarch/archive.hpp"
#include "sigarch/data_io.hpp"
#include "sigarch/linalg.hpp"
#include "sigarch/random.hpp"

namespace sigarch::testing {

/// k nonnegative unit columns with pairwise cosine <= max_cosine.
inline Matrix separated_signatures(Rng& rng, Eigen::Index n, int k, double max_cosine = 0.5) {
  Matrix w(n, k);
  int j = 0;
  int attempts = 0;
  while (j < k) {
    if (++attempts > 100000) throw std::runtime_error("separated_signatures: unreachable");
    Vector c(n);
    for (Eigen::Index i = 0; i < n; ++i) c(i) = rng.uniform() < 0.3 ? rng.uniform(0.2, 1.0) : 0.02 * rng.uniform();
    c /= c.norm();
    bool ok = true;
    for (int q = 0; q < j && ok; ++q) ok = w.col(q).dot(c) <= max_cosine;
    if (ok) w.col(j++) = c;
  }
  return w;
}

struct PlantedMatrix {
  Matrix w;
  Matrix h;
  FeatureMatrix x;
};

/// X = (W H) o (1 + U), U ~ U[-noise, noise], with sparse-ish activations.
inline PlantedMatrix planted_matrix(std::uint64_t seed, Eigen::Index n, Eigen::Index m, int k,
                                    double noise) {
  Rng rng(seed);
  PlantedMatrix out;
  out.w = separated_signatures(rng, n, k);
  out.h.resize(k, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (int s = 0; s < k; ++s) {
      const double e = rng.exponential();
      out.h(s, j) = e * e;
    }
  Matrix x = out.w * out.h;
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i) x(i, j) *= 1.0 + rng.uniform(-noise, noise);
  out.x = FeatureMatrix(std::move(x));
  return out;
}

/// Labeled dataset over the raw (unnormalized) synthetic features.
inline LabeledDataset raw_dataset(const FeatureTable& table) { return make_dataset(table, table_matrix(table)); }

/// Family whose planted signature is closest in cosine to `column`.
inline std::string nearest_family(const SyntheticData& data, const Vector& column) {
  std::string best;
  double best_cos = -1.0;
  for (const auto& [label, ids] : data.family_signatures) {
    for (int id : ids) {
      const double c = cosine_similarity(data.signatures.col(id), column);
      if (c > best_cos) {
        best_cos = c;
        best = label;
      }
    }
  }
  return best;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("sigarch_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace sigarch::testing
