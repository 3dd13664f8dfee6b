#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sigarch/data_io.hpp"

namespace sigarch {

/// One classified sample as read back from a predictions file.
struct PredictionRecord {
  std::string sample_id;
  std::optional<std::string> label;  // nullopt = REJECT
  double confidence = 0.0;
};

struct ClassMetrics {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  int support = 0;
};

struct EvalReport {
  std::map<std::string, ClassMetrics> per_class;
  double macro_f1 = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double weighted_f1 = 0.0;
  /// Known-class samples rejected / known-class samples.
  double rejection_seen = 0.0;
  /// Novel samples rejected / novel samples; nullopt without novel samples.
  std::optional<double> rejection_novel;
  double coverage = 0.0;
  int total = 0;
  int accepted = 0;
  int known = 0;
  int novel = 0;
};

/// Metrics over accepted known-class predictions. Macro averages run over
/// the union of true and predicted labels; undefined ratios count as 0 in
/// the averages and are reported absent per class. Throws AlignmentError
/// when prediction and truth ids differ.
EvalReport classification_metrics(const std::vector<PredictionRecord>& predictions,
                                  const GroundTruthSet& truth);

/// How accepted NOVEL samples enter the risk of a risk-coverage point.
enum class NovelAccounting {
  /// Count as false positives of the class they were assigned to.
  penalize,
  /// Ignore them (risk over known-class samples only).
  exclude,
};

struct RiskCoveragePoint {
  double threshold = 0.0;
  double coverage = 0.0;
  double risk = 0.0;
};

struct RiskCoverageCurve {
  std::vector<RiskCoveragePoint> points;  // coverage ascending
  double aurc = 0.0;
};

/// Sweeps the rejection threshold over {0, 1} and the unique confidences
/// (down-sampled to n_points quantiles). Risk is 1 - macro F1 over the
/// accepted samples; where coverage is 0 the risk of the smallest positive
/// coverage is carried over so the curve starts at coverage 0.
RiskCoverageCurve risk_coverage_curve(const std::vector<double>& confidences,
                                      const std::vector<std::optional<std::string>>& predicted,
                                      const GroundTruthSet& truth, int n_points = 512,
                                      NovelAccounting accounting = NovelAccounting::penalize);

/// Trapezoidal area under risk(coverage), divided by the largest coverage.
/// Throws InvalidParameter for fewer than 2 points.
double aurc(const RiskCoverageCurve& curve);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const RiskCoverageCurve& curve);
std::string curve_to_csv(const RiskCoverageCurve& curve);

}  // namespace sigarch
