#include "sigarch/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <unordered_map>

#include "sigarch/errors.hpp"

namespace sigarch {

namespace {

struct LabelCounts {
  int tp = 0;
  int predicted = 0;
  int support = 0;
};

struct Averages {
  std::map<std::string, ClassMetrics> per_class;
  double macro_f1 = 0.0, macro_precision = 0.0, macro_recall = 0.0, weighted_f1 = 0.0;
};

/// `pairs` holds (true label or nullopt for novel, predicted label).
Averages average_metrics(const std::vector<std::pair<std::optional<std::string>, std::string>>& pairs) {
  std::map<std::string, LabelCounts> counts;
  for (const auto& [truth, pred] : pairs) {
    ++counts[pred].predicted;
    if (truth) {
      ++counts[*truth].support;
      if (*truth == pred) ++counts[pred].tp;
    }
  }
  Averages out;
  int total_support = 0;
  for (const auto& [label, c] : counts) {
    ClassMetrics m;
    m.support = c.support;
    if (c.predicted > 0) m.precision = static_cast<double>(c.tp) / c.predicted;
    if (c.support > 0) m.recall = static_cast<double>(c.tp) / c.support;
    const double p = m.precision.value_or(0.0);
    const double r = m.recall.value_or(0.0);
    if (m.precision && m.recall) m.f1 = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    const double f = m.f1.value_or(0.0);
    out.macro_f1 += f;
    out.macro_precision += p;
    out.macro_recall += r;
    out.weighted_f1 += f * c.support;
    total_support += c.support;
    out.per_class[label] = m;
  }
  if (!counts.empty()) {
    const auto L = static_cast<double>(counts.size());
    out.macro_f1 /= L;
    out.macro_precision /= L;
    out.macro_recall /= L;
  }
  out.weighted_f1 = total_support > 0 ? out.weighted_f1 / total_support : 0.0;
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

EvalReport classification_metrics(const std::vector<PredictionRecord>& predictions,
                                  const GroundTruthSet& truth) {
  truth.validate();
  std::unordered_map<std::string, std::size_t> truth_index;
  for (std::size_t i = 0; i < truth.sample_ids.size(); ++i) truth_index[truth.sample_ids[i]] = i;
  if (predictions.empty()) throw AlignmentError("no predictions to evaluate");
  std::vector<bool> covered(truth.sample_ids.size(), false);
  for (const auto& p : predictions) {
    const auto it = truth_index.find(p.sample_id);
    if (it == truth_index.end()) throw AlignmentError("prediction for unknown sample id '" + p.sample_id + "'");
    if (covered[it->second]) throw AlignmentError("duplicate prediction for sample id '" + p.sample_id + "'");
    covered[it->second] = true;
  }
  for (std::size_t i = 0; i < covered.size(); ++i) {
    if (!covered[i]) throw AlignmentError("no prediction for sample id '" + truth.sample_ids[i] + "'");
  }

  EvalReport report;
  std::vector<std::pair<std::optional<std::string>, std::string>> pairs;
  int known_rejected = 0;
  int novel_rejected = 0;
  std::set<std::string> known_labels;
  for (const auto& p : predictions) {
    const std::string& t = truth.true_labels[truth_index.at(p.sample_id)];
    const bool is_novel = t == truth.novel_marker;
    ++report.total;
    if (p.label) ++report.accepted;
    if (is_novel) {
      ++report.novel;
      if (!p.label) ++novel_rejected;
      continue;
    }
    ++report.known;
    known_labels.insert(t);
    if (!p.label) {
      ++known_rejected;
    } else {
      pairs.emplace_back(t, *p.label);
    }
  }
  auto avg = average_metrics(pairs);
  for (const auto& label : known_labels) avg.per_class.try_emplace(label);
  report.per_class = std::move(avg.per_class);
  report.macro_f1 = avg.macro_f1;
  report.macro_precision = avg.macro_precision;
  report.macro_recall = avg.macro_recall;
  report.weighted_f1 = avg.weighted_f1;
  report.coverage = static_cast<double>(report.accepted) / report.total;
  report.rejection_seen = report.known > 0 ? static_cast<double>(known_rejected) / report.known : 0.0;
  if (report.novel > 0) report.rejection_novel = static_cast<double>(novel_rejected) / report.novel;
  return report;
}

RiskCoverageCurve risk_coverage_curve(const std::vector<double>& confidences,
                                      const std::vector<std::optional<std::string>>& predicted,
                                      const GroundTruthSet& truth, int n_points,
                                      NovelAccounting accounting) {
  const std::size_t total = confidences.size();
  if (predicted.size() != total || truth.true_labels.size() != total) {
    throw AlignmentError("risk_coverage_curve: " + std::to_string(total) + " confidences, " +
                         std::to_string(predicted.size()) + " labels, " +
                         std::to_string(truth.true_labels.size()) + " truths");
  }
  if (total == 0) throw AlignmentError("risk_coverage_curve: no samples");
  if (n_points < 2) throw InvalidParameter("risk_coverage_curve: n_points must be >= 2");
  for (double c : confidences) {
    if (!(c >= 0.0 && c <= 1.0)) throw InvalidParameter("risk_coverage_curve: confidence outside [0, 1]");
  }

  std::vector<double> unique(confidences);
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  const auto interior_budget = static_cast<std::size_t>(n_points);
  std::vector<double> grid;
  if (unique.size() <= interior_budget) {
    grid = unique;
  } else {
    for (std::size_t i = 0; i < interior_budget; ++i) {
      const double pos = static_cast<double>(i) * static_cast<double>(unique.size() - 1) /
                         static_cast<double>(interior_budget - 1);
      grid.push_back(unique[static_cast<std::size_t>(std::llround(pos))]);
    }
  }
  grid.push_back(0.0);
  grid.push_back(1.0);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  RiskCoverageCurve curve;
  double previous_coverage = 2.0;
  for (double t : grid) {
    std::vector<std::pair<std::optional<std::string>, std::string>> pairs;
    std::size_t accepted = 0;
    for (std::size_t i = 0; i < total; ++i) {
      if (!(confidences[i] > t) || !predicted[i]) continue;
      ++accepted;
      const bool novel = truth.true_labels[i] == truth.novel_marker;
      if (novel) {
        if (accounting == NovelAccounting::penalize) pairs.emplace_back(std::nullopt, *predicted[i]);
      } else {
        pairs.emplace_back(truth.true_labels[i], *predicted[i]);
      }
    }
    RiskCoveragePoint point;
    point.threshold = t;
    point.coverage = static_cast<double>(accepted) / static_cast<double>(total);
    point.risk = pairs.empty() ? 0.0 : 1.0 - average_metrics(pairs).macro_f1;
    if (point.coverage > previous_coverage) {
      throw std::logic_error("risk_coverage_curve: coverage increased with the threshold");
    }
    previous_coverage = point.coverage;
    curve.points.push_back(point);
  }
  // Thresholds ascend, so coverage descends; store coverage-ascending.
  std::reverse(curve.points.begin(), curve.points.end());
  const auto first_positive = std::find_if(curve.points.begin(), curve.points.end(),
                                           [](const RiskCoveragePoint& p) { return p.coverage > 0.0; });
  if (first_positive != curve.points.end()) {
    for (auto it = curve.points.begin(); it != first_positive; ++it) it->risk = first_positive->risk;
  }
  curve.aurc = aurc(curve);
  return curve;
}

double aurc(const RiskCoverageCurve& curve) {
  if (curve.points.size() < 2) throw InvalidParameter("aurc: need at least 2 curve points");
  std::vector<RiskCoveragePoint> pts = curve.points;
  std::stable_sort(pts.begin(), pts.end(),
                   [](const RiskCoveragePoint& a, const RiskCoveragePoint& b) { return a.coverage < b.coverage; });
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += (pts[i].coverage - pts[i - 1].coverage) * (pts[i].risk + pts[i - 1].risk) / 2.0;
  }
  const double span = pts.back().coverage;
  if (!(span > 0.0)) return 0.0;
  return std::clamp(area / span, 0.0, 1.0);
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [label, m] : r.per_class) {
    nlohmann::json j = {{"support", m.support}};
    j["precision"] = m.precision ? nlohmann::json(*m.precision) : nlohmann::json(nullptr);
    j["recall"] = m.recall ? nlohmann::json(*m.recall) : nlohmann::json(nullptr);
    j["f1"] = m.f1 ? nlohmann::json(*m.f1) : nlohmann::json(nullptr);
    per_class[label] = std::move(j);
  }
  return {{"per_class", per_class},
          {"macro_f1", r.macro_f1},
          {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall},
          {"weighted_f1", r.weighted_f1},
          {"rejection_seen", r.rejection_seen},
          {"rejection_novel", r.rejection_novel ? nlohmann::json(*r.rejection_novel) : nlohmann::json(nullptr)},
          {"coverage", r.coverage},
          {"total", r.total},
          {"accepted", r.accepted},
          {"known", r.known},
          {"novel", r.novel}};
}

nlohmann::json to_json(const RiskCoverageCurve& curve) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : curve.points) {
    pts.push_back({{"threshold", p.threshold}, {"coverage", p.coverage}, {"risk", p.risk}});
  }
  return {{"points", pts}, {"aurc", curve.aurc}};
}

std::string curve_to_csv(const RiskCoverageCurve& curve) {
  std::string out = "threshold,coverage,risk\n";
  for (const auto& p : curve.points) {
    out += format_double(p.threshold) + "," + format_double(p.coverage) + "," + format_double(p.risk) + "\n";
  }
  return out;
}

}  // namespace sigarch
