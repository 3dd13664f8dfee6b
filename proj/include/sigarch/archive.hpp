#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sigarch/data_io.hpp"
#include "sigarch/linalg.hpp"
#include "sigarch/rank_select.hpp"

namespace sigarch {

inline constexpr int kArchiveFormatVersion = 1;

struct LabeledDataset {
  FeatureMatrix matrix;
  std::vector<std::string> sample_ids;
  std::vector<std::optional<std::string>> labels;
  std::vector<std::string> class_set;

  /// Throws InvalidParameter if ids repeat, sizes disagree, or a label is
  /// missing from class_set.
  void validate() const;
  [[nodiscard]] std::size_t labeled_count() const;
};

/// Builds a dataset from a table; class_set is the sorted set of labels.
LabeledDataset make_dataset(const FeatureTable& table, FeatureMatrix normalized);

struct ClusterAssignment {
  std::vector<std::optional<int>> cluster_of;
  std::vector<double> confidence_of;
  double threshold = 0.0;
};

/// Normalizes each H column to sum 1; sample j joins argmax cluster when the
/// normalized maximum exceeds tau (ties go to the lower index). All-zero
/// columns stay unassigned with confidence 0.
ClusterAssignment assign_clusters(const Matrix& h, double tau);

struct UniformityRule {
  int min_cluster_size = 10;
  double min_labeled_fraction = 0.3;
};

struct ClusterUniformity {
  bool is_uniform = false;
  std::optional<std::string> majority_label;
  int labeled_count = 0;
  int total_count = 0;
};

/// One record per cluster index in [0, k).
std::vector<ClusterUniformity> check_uniformity(const ClusterAssignment& assignment,
                                                std::span<const std::optional<std::string>> labels,
                                                int k, const UniformityRule& rule);

struct BuildConfig {
  double tau = 0.6;
  int max_depth = 5;
  int min_cluster_size = 10;
  double min_labeled_fraction = 0.3;
  EnsembleConfig rank_config = default_rank_config();

  void validate() const;

  // k = 1 always has a perfect silhouette, so builds start the search at 2.
  static EnsembleConfig default_rank_config() {
    EnsembleConfig c;
    c.k_min = 2;
    return c;
  }
};

struct SignatureMeta {
  int depth = 0;
  int source_cluster_size = 0;
  double mean_activation = 0.0;
};

struct SignatureArchive {
  Matrix m_matrix;  // n x K, unit columns
  std::vector<std::string> signature_labels;
  std::vector<SignatureMeta> signature_meta;
  std::vector<std::string> class_set;
  std::map<std::string, std::vector<int>> class_index;
  /// Train-time feature transform; absent when the build used raw features.
  std::optional<NormalizationParams> normalization;
  nlohmann::json build_config = nlohmann::json::object();
  nlohmann::json creation = nlohmann::json::object();

  [[nodiscard]] Eigen::Index feature_count() const noexcept { return m_matrix.rows(); }
  [[nodiscard]] Eigen::Index size() const noexcept { return m_matrix.cols(); }

  /// Appends an L2-normalized column. Throws InvalidParameter if the label is
  /// not in class_set or the column is zero.
  void add_signature(const Vector& column, const std::string& label, const SignatureMeta& meta);
  /// Checks every invariant (unit columns, class_index partition, labels).
  void validate() const;
};

enum class ClusterFate { archived, recursed, discarded, empty };

struct ClusterRecord {
  int cluster = 0;
  int size = 0;
  int labeled = 0;
  ClusterFate fate = ClusterFate::empty;
  std::optional<std::string> label;
  std::optional<int> signature_index;
  std::optional<int> child_node;
};

struct TraceNode {
  int id = 0;
  int parent = -1;
  int depth = 0;
  int n_samples = 0;
  int chosen_k = 0;
  int effective_k = 0;
  double relative_error = 0.0;
  /// Samples whose normalized activation stayed at or below tau.
  int unassigned = 0;
  /// Child node that re-factorizes the unassigned samples, if any.
  std::optional<int> residue_node;
  /// Set when the node could not be factorized (e.g. all-zero submatrix).
  std::optional<std::string> failure;
  std::vector<ClusterRecord> clusters;
  RankSelectionReport rank_report;
};

struct BuildTrace {
  std::vector<TraceNode> nodes;
  int total_samples = 0;
  int archived_samples = 0;
  int discarded_samples = 0;
  /// Unassigned samples that were not passed on to a residue node.
  int unassigned_samples = 0;
  [[nodiscard]] int max_depth_reached() const;
};

struct BuildResult {
  SignatureArchive archive;
  BuildTrace trace;
};

/// Hierarchical factorize / cluster / archive-uniform / recurse procedure.
/// Throws BuildFailed when no signature could be archived.
BuildResult build_archive(const LabeledDataset& dataset, const BuildConfig& config);

void save_archive(const SignatureArchive& archive, const std::filesystem::path& path);
SignatureArchive load_archive(const std::filesystem::path& path);
nlohmann::json archive_to_json(const SignatureArchive& archive);
SignatureArchive archive_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const BuildTrace& trace);
nlohmann::json to_json(const RankSelectionReport& report);
nlohmann::json to_json(const BuildConfig& config);
BuildConfig build_config_from_json(const nlohmann::json& doc);
// Keys absent from doc keep their value from base.
EnsembleConfig ensemble_config_from_json(const nlohmann::json& doc, EnsembleConfig base = {});
nlohmann::json to_json(const EnsembleConfig& config);
nlohmann::json to_json(const NormalizationParams& params);
NormalizationParams normalization_from_json(const nlohmann::json& doc);

}  // namespace sigarch
