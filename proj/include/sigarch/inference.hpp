#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sigarch/archive.hpp"
#include "sigarch/linalg.hpp"

namespace sigarch {

enum class Metric { projection_similarity, ensemble_voting, data_augmentation };

const char* metric_name(Metric m);
/// Accepts the full names and the short forms projection/ensemble/augmentation.
Metric parse_metric(const std::string& name);

struct AugmentationConfig {
  int p = 10;
  double epsilon_norm = 0.015;
  int n_bootstrap = 50;
  std::uint64_t seed = 0;
  int max_threads = 1;

  void validate() const;
};

/// Threshold-free knobs shared by every metric.
struct MetricParams {
  double vote_threshold = 0.5;
  AugmentationConfig augmentation;
};

struct Prediction {
  std::optional<std::string> label;  // nullopt = REJECT
  /// The label the metric would emit at threshold 0, before rejection.
  std::optional<std::string> candidate;
  double confidence = 0.0;
  Metric metric = Metric::projection_similarity;
  std::vector<double> similarities;          // S_j for the unperturbed sample
  std::map<std::string, int> votes;          // ensemble voting: V_C
  std::map<std::string, double> normalized_votes;  // ensemble voting: V_C / |I^C|
  std::vector<double> perturbed_similarities;      // augmentation: top S per perturbation

  [[nodiscard]] bool rejected() const noexcept { return !label.has_value(); }
  [[nodiscard]] std::string outcome() const { return label.value_or("REJECT"); }
};

/// S_j = cos(M_:,j, M h~) where h~ is the NNLS projection of x.
std::vector<double> score_signatures(const SignatureArchive& archive, const Vector& x);

/// Decision rules applied to precomputed scores S (one per signature).
Prediction decide_projection(const SignatureArchive& archive, std::vector<double> scores, double threshold);
Prediction decide_ensemble(const SignatureArchive& archive, std::vector<double> scores, double vote_threshold,
                           double threshold);

Prediction classify_projection(const SignatureArchive& archive, const Vector& x, double threshold);
Prediction classify_ensemble(const SignatureArchive& archive, const Vector& x, double vote_threshold,
                             double threshold);
Prediction classify_augmented(const SignatureArchive& archive, const Vector& x,
                              const AugmentationConfig& aug, double threshold);

/// Dispatches to the classify_* routine for `metric`.
Prediction classify(const SignatureArchive& archive, const Vector& x, Metric metric,
                    const MetricParams& params, double threshold);

/// The metric's confidence with no rejection applied.
double confidence_score(const SignatureArchive& archive, const Vector& x, Metric metric,
                        const MetricParams& params);

/// {sample_id, metric, outcome, confidence[, detail]} for JSON lines output.
nlohmann::json prediction_to_json(const std::string& sample_id, const Prediction& p, bool with_detail);

}  // namespace sigarch
