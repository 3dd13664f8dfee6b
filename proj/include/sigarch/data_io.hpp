#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sigarch/linalg.hpp"

namespace sigarch {

/// Marker used in ground-truth files for samples of a held-out family.
inline constexpr const char* kNovelLabel = "NOVEL";

struct FeatureRow {
  std::string sample_id;
  std::string label;  // empty = unlabeled
  std::vector<double> values;
};

struct FeatureTable {
  std::vector<std::string> header;  // feature names, without sample_id/label
  std::vector<FeatureRow> rows;

  /// Throws ParseError on ragged rows or duplicate names/ids.
  void validate() const;
};

/// Header `sample_id,label,<features...>`; empty label = unlabeled.
FeatureTable load_feature_csv(const std::filesystem::path& path);
FeatureTable parse_feature_csv(const std::string& text, const std::string& source = "<memory>");
void save_feature_csv(const FeatureTable& table, const std::filesystem::path& path);
std::string format_feature_csv(const FeatureTable& table);

/// Raw values as features x samples, without normalization.
FeatureMatrix table_matrix(const FeatureTable& table);

/// Per-feature z-score clamp followed by an affine map into [0, 1]:
/// v -> (clamp((v - mean) / std, -c, c) + post_shift) * post_scale.
struct NormalizationParams {
  std::vector<double> mean;
  std::vector<double> stddev;
  double clamp_sigmas = 3.0;
  std::vector<double> post_shift;
  std::vector<double> post_scale;

  [[nodiscard]] std::size_t feature_count() const noexcept { return mean.size(); }
};

struct NormalizedTable {
  FeatureMatrix matrix;  // features x samples
  NormalizationParams params;
};

NormalizedTable normalize(const FeatureTable& table);

/// Same transform as normalize(), with frozen parameters.
Vector apply_normalization(const NormalizationParams& params, const std::vector<double>& row);

/// Applies frozen parameters to every row of a table (features x samples).
FeatureMatrix apply_normalization(const NormalizationParams& params, const FeatureTable& table);

struct RareFamily {
  std::string label;
  double keep_fraction = 1.0;
};

struct TrialConfig {
  std::vector<std::string> families;  // known families
  std::string novel_family;
  std::vector<RareFamily> rare_families;
  double test_fraction = 0.1;
  int n_trials = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GroundTruthSet {
  std::vector<std::string> sample_ids;
  std::vector<std::string> true_labels;  // known label or novel_marker
  std::string novel_marker = kNovelLabel;

  void validate() const;
};

struct FamilyCounts {
  std::size_t available = 0;
  std::size_t kept = 0;
  std::size_t train = 0;
  std::size_t test = 0;
};

struct TrialSplit {
  FeatureTable train;
  FeatureTable test;  // rows keep their real label
  GroundTruthSet truth;
  std::uint64_t seed = 0;
  int trial_index = 0;
  std::map<std::string, FamilyCounts> counts;
};

/// One seeded train/test draw: the novel family goes entirely to test, rare
/// families are down-sampled before the split, the rest split by test_fraction.
/// Rows whose label is not configured are ignored.
TrialSplit sample_trial(const FeatureTable& table, const TrialConfig& config, int trial_index);

/// Writes train.csv, test.csv, truth.csv and manifest.json into `dir`.
void save_trial(const TrialSplit& split, const std::filesystem::path& dir);

/// Ground truth from a CSV whose first two columns are sample_id,label.
/// Labels equal to the marker, or listed in `novel_labels`, become the marker.
GroundTruthSet load_truth_csv(const std::filesystem::path& path,
                              const std::vector<std::string>& novel_labels = {});

struct SyntheticFamily {
  std::string label;
  int n_signatures = 1;
  int n_samples = 100;
};

struct SyntheticSpec {
  int n_features = 50;
  std::vector<SyntheticFamily> families;
  double noise = 0.01;
  std::optional<std::string> novel;
  std::uint64_t seed = 0;
  /// Upper bound on the cosine between signatures of different families.
  double max_cosine = 0.5;
  /// Weight of the shared family core in each of a family's signatures;
  /// 0 draws every signature independently.
  double family_coherence = 0.0;
  /// Mixing weights are Exp(1)^sharpness, normalized; 1 is a flat Dirichlet,
  /// larger values let one signature dominate each sample.
  double weight_sharpness = 1.0;

  void validate() const;
};

struct SyntheticData {
  FeatureTable table;
  /// n_features x total signatures, unit columns, grouped by family order.
  Matrix signatures;
  std::map<std::string, std::vector<int>> family_signatures;
  std::optional<std::string> novel;
};

/// Throws SeparationUnreachable when separated signatures cannot be drawn.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace sigarch
