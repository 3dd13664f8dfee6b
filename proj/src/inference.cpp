#include "sigarch/inference.hpp"

#include <algorithm>
#include <cmath>

#include "sigarch/errors.hpp"
#include "sigarch/parallel.hpp"
#include "sigarch/random.hpp"

namespace sigarch {

namespace {

void check_input(const SignatureArchive& archive, const Vector& x) {
  if (archive.size() < 1) throw InvalidParameter("archive has no signatures");
  if (x.size() != archive.feature_count()) {
    throw DimensionMismatch("sample has " + std::to_string(x.size()) + " features, archive has " +
                            std::to_string(archive.feature_count()));
  }
}

void check_threshold(double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw InvalidParameter("threshold must lie in [0, 1]");
  }
}

void check_vote_threshold(double vote_threshold) {
  if (!(vote_threshold >= 0.0 && vote_threshold <= 1.0)) {
    throw InvalidParameter("vote_threshold must lie in [0, 1]");
  }
}

void check_scores(const SignatureArchive& archive, const std::vector<double>& scores) {
  if (archive.size() < 1) throw InvalidParameter("archive has no signatures");
  if (scores.size() != static_cast<std::size_t>(archive.size())) {
    throw DimensionMismatch("got " + std::to_string(scores.size()) + " scores for " +
                            std::to_string(archive.size()) + " signatures");
  }
}

std::size_t argmax_lowest(const std::vector<double>& s) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < s.size(); ++j)
    if (s[j] > s[best]) best = j;
  return best;
}

}  // namespace

const char* metric_name(Metric m) {
  switch (m) {
    case Metric::projection_similarity: return "projection_similarity";
    case Metric::ensemble_voting: return "ensemble_voting";
    case Metric::data_augmentation: return "data_augmentation";
  }
  return "unknown";
}

Metric parse_metric(const std::string& name) {
  if (name == "projection_similarity" || name == "projection") return Metric::projection_similarity;
  if (name == "ensemble_voting" || name == "ensemble") return Metric::ensemble_voting;
  if (name == "data_augmentation" || name == "augmentation") return Metric::data_augmentation;
  throw InvalidParameter("unknown metric '" + name + "'");
}

void AugmentationConfig::validate() const {
  if (p < 1) throw InvalidParameter("augmentation.p must be >= 1");
  if (n_bootstrap < 1) throw InvalidParameter("augmentation.n_bootstrap must be >= 1");
  if (!(epsilon_norm > 0.0) || !std::isfinite(epsilon_norm)) {
    throw InvalidParameter("augmentation.epsilon_norm must be positive");
  }
  if (max_threads < 1) throw InvalidParameter("augmentation.max_threads must be >= 1");
}

std::vector<double> score_signatures(const SignatureArchive& archive, const Vector& x) {
  check_input(archive, x);
  const auto projection = nnls_solve(archive.m_matrix, x);
  std::vector<double> s(static_cast<std::size_t>(archive.size()));
  for (Eigen::Index j = 0; j < archive.size(); ++j) {
    s[static_cast<std::size_t>(j)] =
        std::clamp(cosine_similarity(archive.m_matrix.col(j), projection.reconstruction), 0.0, 1.0);
  }
  return s;
}

Prediction decide_projection(const SignatureArchive& archive, std::vector<double> scores, double threshold) {
  check_threshold(threshold);
  check_scores(archive, scores);
  Prediction out;
  out.metric = Metric::projection_similarity;
  out.similarities = std::move(scores);
  const std::size_t best = argmax_lowest(out.similarities);
  out.confidence = out.similarities[best];
  out.candidate = archive.signature_labels[best];
  if (out.confidence > threshold) out.label = out.candidate;
  return out;
}

Prediction classify_projection(const SignatureArchive& archive, const Vector& x, double threshold) {
  check_threshold(threshold);
  return decide_projection(archive, score_signatures(archive, x), threshold);
}

Prediction decide_ensemble(const SignatureArchive& archive, std::vector<double> scores, double vote_threshold,
                           double threshold) {
  check_threshold(threshold);
  check_vote_threshold(vote_threshold);
  check_scores(archive, scores);
  Prediction out;
  out.metric = Metric::ensemble_voting;
  out.similarities = std::move(scores);

  std::optional<std::string> best;
  double best_vote = -1.0;
  double best_peak = -1.0;
  // class_set order is the final tie-break, so iterate in that order.
  for (const auto& label : archive.class_set) {
    const auto it = archive.class_index.find(label);
    if (it == archive.class_index.end() || it->second.empty()) continue;
    int votes = 0;
    double peak = 0.0;
    for (int j : it->second) {
      const double s = out.similarities[static_cast<std::size_t>(j)];
      if (s > vote_threshold) ++votes;
      peak = std::max(peak, s);
    }
    const double normalized = static_cast<double>(votes) / static_cast<double>(it->second.size());
    out.votes[label] = votes;
    out.normalized_votes[label] = normalized;
    if (normalized > best_vote || (normalized == best_vote && peak > best_peak)) {
      best = label;
      best_vote = normalized;
      best_peak = peak;
    }
  }
  out.confidence = std::max(0.0, best_vote);
  out.candidate = best;
  if (best && out.confidence > threshold) out.label = best;
  return out;
}

Prediction classify_ensemble(const SignatureArchive& archive, const Vector& x, double vote_threshold,
                             double threshold) {
  check_threshold(threshold);
  check_vote_threshold(vote_threshold);
  return decide_ensemble(archive, score_signatures(archive, x), vote_threshold, threshold);
}

Prediction classify_augmented(const SignatureArchive& archive, const Vector& x,
                              const AugmentationConfig& aug, double threshold) {
  check_threshold(threshold);
  aug.validate();
  check_input(archive, x);
  Prediction out;
  out.metric = Metric::data_augmentation;
  out.similarities = score_signatures(archive, x);
  // A zero sample has no direction to perturb around.
  if (x.isZero(0.0)) return out;

  const auto total = static_cast<std::size_t>(aug.p) * static_cast<std::size_t>(aug.n_bootstrap);
  std::vector<double> top(total);
  std::vector<std::size_t> top_index(total);
  parallel_for(total, static_cast<std::size_t>(aug.max_threads), [&](std::size_t t) {
    Rng rng(derive_seed(aug.seed, {t / static_cast<std::size_t>(aug.p), t % static_cast<std::size_t>(aug.p)}));
    Vector eps(x.size());
    double norm = 0.0;
    do {
      for (Eigen::Index i = 0; i < x.size(); ++i) eps(i) = rng.normal();
      norm = eps.norm();
    } while (!(norm > 0.0));
    const Vector perturbed = (x + eps * (aug.epsilon_norm / norm)).cwiseMax(0.0);
    const auto s = score_signatures(archive, perturbed);
    top_index[t] = argmax_lowest(s);
    top[t] = s[top_index[t]];
  });

  double sum = 0.0;
  std::map<std::string, int> counts;
  for (std::size_t t = 0; t < total; ++t) {
    sum += top[t];
    ++counts[archive.signature_labels[top_index[t]]];
  }
  out.perturbed_similarities = top;
  out.confidence = std::clamp(sum / static_cast<double>(total), 0.0, 1.0);

  // Modal label; ties resolved by class_set order.
  std::optional<std::string> modal;
  int modal_count = 0;
  for (const auto& label : archive.class_set) {
    const auto it = counts.find(label);
    if (it != counts.end() && it->second > modal_count) {
      modal = label;
      modal_count = it->second;
    }
  }
  out.candidate = modal;
  if (modal && out.confidence > threshold) out.label = modal;
  return out;
}

Prediction classify(const SignatureArchive& archive, const Vector& x, Metric metric,
                    const MetricParams& params, double threshold) {
  switch (metric) {
    case Metric::projection_similarity: return classify_projection(archive, x, threshold);
    case Metric::ensemble_voting: return classify_ensemble(archive, x, params.vote_threshold, threshold);
    case Metric::data_augmentation: return classify_augmented(archive, x, params.augmentation, threshold);
  }
  throw InvalidParameter("unknown metric");
}

double confidence_score(const SignatureArchive& archive, const Vector& x, Metric metric,
                        const MetricParams& params) {
  return classify(archive, x, metric, params, 1.0).confidence;
}

nlohmann::json prediction_to_json(const std::string& sample_id, const Prediction& p, bool with_detail) {
  nlohmann::json j = {{"sample_id", sample_id},
                      {"metric", metric_name(p.metric)},
                      {"outcome", p.outcome()},
                      {"confidence", p.confidence}};
  if (with_detail) {
    nlohmann::json d = {{"similarities", p.similarities}};
    if (p.metric == Metric::ensemble_voting) {
      d["votes"] = p.votes;
      d["normalized_votes"] = p.normalized_votes;
    }
    if (p.metric == Metric::data_augmentation) d["perturbed_similarities"] = p.perturbed_similarities;
    j["detail"] = std::move(d);
  }
  return j;
}

}  // namespace sigarch
