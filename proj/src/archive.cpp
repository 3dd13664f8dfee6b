#include "sigarch/archive.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "sigarch/errors.hpp"
#include "sigarch/random.hpp"

namespace sigarch {

void LabeledDataset::validate() const {
  const auto m = static_cast<std::size_t>(matrix.m());
  if (sample_ids.size() != m || labels.size() != m) {
    throw InvalidParameter("dataset: matrix has " + std::to_string(m) + " columns but " +
                           std::to_string(sample_ids.size()) + " ids and " +
                           std::to_string(labels.size()) + " labels");
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : sample_ids) {
    if (!seen.insert(id).second) throw InvalidParameter("dataset: duplicate sample id '" + id + "'");
  }
  const std::set<std::string> classes(class_set.begin(), class_set.end());
  if (classes.size() != class_set.size()) throw InvalidParameter("dataset: class_set has duplicates");
  for (const auto& label : labels) {
    if (label && !classes.contains(*label)) {
      throw InvalidParameter("dataset: label '" + *label + "' not in class_set");
    }
  }
}

std::size_t LabeledDataset::labeled_count() const {
  return static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](const auto& l) { return l.has_value(); }));
}

LabeledDataset make_dataset(const FeatureTable& table, FeatureMatrix normalized) {
  LabeledDataset ds;
  ds.matrix = std::move(normalized);
  std::set<std::string> classes;
  for (const auto& row : table.rows) {
    ds.sample_ids.push_back(row.sample_id);
    if (row.label.empty()) {
      ds.labels.emplace_back(std::nullopt);
    } else {
      ds.labels.emplace_back(row.label);
      classes.insert(row.label);
    }
  }
  ds.class_set.assign(classes.begin(), classes.end());
  ds.validate();
  return ds;
}

ClusterAssignment assign_clusters(const Matrix& h, double tau) {
  if (!(tau >= 0.0 && tau < 1.0)) throw InvalidParameter("assign_clusters: tau must lie in [0, 1)");
  if (h.size() > 0 && h.minCoeff() < 0.0) throw InvalidParameter("assign_clusters: H has negative entries");
  ClusterAssignment out;
  out.threshold = tau;
  const auto m = static_cast<std::size_t>(h.cols());
  out.cluster_of.assign(m, std::nullopt);
  out.confidence_of.assign(m, 0.0);
  for (Eigen::Index j = 0; j < h.cols(); ++j) {
    const double total = h.col(j).sum();
    if (!(total > 0.0)) continue;
    Eigen::Index best = 0;
    for (Eigen::Index s = 1; s < h.rows(); ++s) {
      if (h(s, j) > h(best, j)) best = s;
    }
    const double confidence = h(best, j) / total;
    out.confidence_of[static_cast<std::size_t>(j)] = confidence;
    if (confidence > tau) out.cluster_of[static_cast<std::size_t>(j)] = static_cast<int>(best);
  }
  return out;
}

std::vector<ClusterUniformity> check_uniformity(const ClusterAssignment& assignment,
                                                std::span<const std::optional<std::string>> labels,
                                                int k, const UniformityRule& rule) {
  if (labels.size() != assignment.cluster_of.size()) {
    throw DimensionMismatch("check_uniformity: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(assignment.cluster_of.size()) + " assignments");
  }
  std::vector<ClusterUniformity> out(static_cast<std::size_t>(k));
  std::vector<std::set<std::string>> distinct(static_cast<std::size_t>(k));
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const auto& c = assignment.cluster_of[j];
    if (!c) continue;
    auto& rec = out.at(static_cast<std::size_t>(*c));
    ++rec.total_count;
    if (labels[j]) {
      ++rec.labeled_count;
      distinct[static_cast<std::size_t>(*c)].insert(*labels[j]);
    }
  }
  for (std::size_t c = 0; c < out.size(); ++c) {
    auto& rec = out[c];
    rec.is_uniform = rec.total_count >= rule.min_cluster_size && rec.labeled_count > 0 &&
                     static_cast<double>(rec.labeled_count) >=
                         rule.min_labeled_fraction * static_cast<double>(rec.total_count) &&
                     distinct[c].size() == 1;
    if (rec.is_uniform) rec.majority_label = *distinct[c].begin();
  }
  return out;
}

void BuildConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidParameter("tau must lie in (0, 1)");
  if (max_depth < 1) throw InvalidParameter("max_depth must be >= 1");
  if (min_cluster_size < 1) throw InvalidParameter("min_cluster_size must be >= 1");
  if (!(min_labeled_fraction > 0.0 && min_labeled_fraction <= 1.0))
    throw InvalidParameter("min_labeled_fraction must lie in (0, 1]");
  rank_config.validate();
}

void SignatureArchive::add_signature(const Vector& column, const std::string& label,
                                     const SignatureMeta& meta) {
  if (std::find(class_set.begin(), class_set.end(), label) == class_set.end()) {
    throw InvalidParameter("archive: label '" + label + "' not in class_set");
  }
  if (m_matrix.cols() > 0 && column.size() != m_matrix.rows()) {
    throw DimensionMismatch("archive: signature has " + std::to_string(column.size()) +
                            " features, archive has " + std::to_string(m_matrix.rows()));
  }
  const double norm = column.norm();
  if (!(norm > 0.0) || !column.allFinite() || column.minCoeff() < 0.0) {
    throw InvalidParameter("archive: signature must be finite, nonnegative and nonzero");
  }
  const Eigen::Index K = m_matrix.cols();
  m_matrix.conservativeResize(column.size(), K + 1);
  m_matrix.col(K) = column / norm;
  signature_labels.push_back(label);
  signature_meta.push_back(meta);
  class_index[label].push_back(static_cast<int>(K));
}

void SignatureArchive::validate() const {
  const auto K = static_cast<std::size_t>(m_matrix.cols());
  if (signature_labels.size() != K || signature_meta.size() != K) {
    throw FormatError("archive: label/meta count does not match signature count");
  }
  if (K > 0 && (!m_matrix.allFinite() || m_matrix.minCoeff() < 0.0)) {
    throw FormatError("archive: signatures must be finite and nonnegative");
  }
  for (Eigen::Index j = 0; j < m_matrix.cols(); ++j) {
    if (std::abs(m_matrix.col(j).norm() - 1.0) > 1e-9) {
      throw FormatError("archive: signature " + std::to_string(j) + " is not unit norm");
    }
  }
  std::vector<int> seen(K, 0);
  for (const auto& [label, idx] : class_index) {
    if (std::find(class_set.begin(), class_set.end(), label) == class_set.end()) {
      throw FormatError("archive: class_index label '" + label + "' not in class_set");
    }
    for (int i : idx) {
      if (i < 0 || static_cast<std::size_t>(i) >= K || signature_labels[static_cast<std::size_t>(i)] != label) {
        throw FormatError("archive: class_index entry for '" + label + "' is inconsistent");
      }
      ++seen[static_cast<std::size_t>(i)];
    }
  }
  if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; })) {
    throw FormatError("archive: class_index does not partition the signatures");
  }
}

int BuildTrace::max_depth_reached() const {
  int d = 0;
  for (const auto& node : nodes) d = std::max(d, node.depth);
  return d;
}

namespace {

struct PendingNode {
  int id;
  int parent;
  int depth;
  std::vector<Eigen::Index> samples;  // column indices into the full matrix
};

}  // namespace

BuildResult build_archive(const LabeledDataset& dataset, const BuildConfig& config) {
  config.validate();
  dataset.validate();
  if (dataset.class_set.empty() || dataset.labeled_count() < 2) {
    throw BuildFailed("build needs at least 2 labeled samples and 1 known class (got " +
                      std::to_string(dataset.labeled_count()) + " labeled)");
  }
  const UniformityRule rule{config.min_cluster_size, config.min_labeled_fraction};
  const Eigen::Index n = dataset.matrix.n();

  BuildResult result;
  SignatureArchive& archive = result.archive;
  BuildTrace& trace = result.trace;
  archive.class_set = dataset.class_set;
  archive.m_matrix.resize(n, 0);
  trace.total_samples = static_cast<int>(dataset.matrix.m());

  std::vector<PendingNode> queue;
  {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(dataset.matrix.m()));
    for (std::size_t j = 0; j < all.size(); ++j) all[j] = static_cast<Eigen::Index>(j);
    queue.push_back({0, -1, 0, std::move(all)});
  }

  // Breadth-first: nodes are processed, and signatures inserted, in
  // (depth, node index, cluster index) order.
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    const PendingNode node = queue[qi];
    TraceNode rec;
    rec.id = node.id;
    rec.parent = node.parent;
    rec.depth = node.depth;
    rec.n_samples = static_cast<int>(node.samples.size());

    const FeatureMatrix sub = dataset.matrix.columns(node.samples);
    std::vector<std::optional<std::string>> labels;
    labels.reserve(node.samples.size());
    for (auto j : node.samples) labels.push_back(dataset.labels[static_cast<std::size_t>(j)]);

    EnsembleConfig rank = config.rank_config;
    const int limit = static_cast<int>(std::min(sub.n(), sub.m()));
    rank.k_max = std::min(rank.k_max, limit);
    rank.k_min = std::min(rank.k_min, rank.k_max);
    rank.nmf_seed = derive_seed(config.rank_config.nmf_seed, {static_cast<std::uint64_t>(node.id), 0x5e1ec7});

    Factorization factors;
    try {
      if (sub.values().maxCoeff() <= 0.0) throw DegenerateInput("submatrix is all-zero");
      rec.rank_report = select_rank(sub, rank);
      rec.chosen_k = rec.rank_report.chosen_k;
      factors = nmf_factorize(sub, rec.chosen_k,
                              {.max_iters = rank.nmf_max_iters,
                               .tol = rank.nmf_tol,
                               .seed = derive_seed(rank.nmf_seed, {0xf1a1})});
    } catch (const DegenerateInput& e) {
      rec.failure = e.what();
      trace.discarded_samples += rec.n_samples;
      trace.nodes.push_back(std::move(rec));
      continue;
    }
    rec.effective_k = factors.k;
    rec.relative_error = factors.relative_error;

    const auto assignment = assign_clusters(factors.h, config.tau);
    const auto uniformity = check_uniformity(assignment, labels, factors.k, rule);

    std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(factors.k));
    std::vector<double> confidence_sum(static_cast<std::size_t>(factors.k), 0.0);
    std::vector<Eigen::Index> residue;
    for (std::size_t j = 0; j < node.samples.size(); ++j) {
      if (const auto& c = assignment.cluster_of[j]) {
        members[static_cast<std::size_t>(*c)].push_back(node.samples[j]);
        confidence_sum[static_cast<std::size_t>(*c)] += assignment.confidence_of[j];
      } else {
        residue.push_back(node.samples[j]);
      }
    }
    rec.unassigned = static_cast<int>(residue.size());
    const auto can_recurse = [&](std::size_t size) {
      return node.depth + 1 < config.max_depth && size >= static_cast<std::size_t>(config.min_cluster_size) &&
             size < node.samples.size();
    };

    for (int c = 0; c < factors.k; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      ClusterRecord cr;
      cr.cluster = c;
      cr.size = uniformity[cu].total_count;
      cr.labeled = uniformity[cu].labeled_count;
      if (cr.size == 0) {
        cr.fate = ClusterFate::empty;
      } else if (uniformity[cu].is_uniform) {
        cr.fate = ClusterFate::archived;
        cr.label = uniformity[cu].majority_label;
        cr.signature_index = static_cast<int>(archive.size());
        archive.add_signature(factors.w.col(c), *cr.label,
                              {node.depth, cr.size, confidence_sum[cu] / cr.size});
        trace.archived_samples += cr.size;
      } else if (can_recurse(members[cu].size())) {
        cr.fate = ClusterFate::recursed;
        cr.child_node = static_cast<int>(queue.size());
        queue.push_back({*cr.child_node, node.id, node.depth + 1, members[cu]});
      } else {
        cr.fate = ClusterFate::discarded;
        trace.discarded_samples += cr.size;
      }
      rec.clusters.push_back(std::move(cr));
    }
    // Samples below tau carry mixed signatures; they get their own
    // factorization when there are enough of them.
    if (!residue.empty()) {
      if (can_recurse(residue.size())) {
        rec.residue_node = static_cast<int>(queue.size());
        queue.push_back({*rec.residue_node, node.id, node.depth + 1, std::move(residue)});
      } else {
        trace.unassigned_samples += rec.unassigned;
      }
    }
    trace.nodes.push_back(std::move(rec));
  }

  if (archive.size() == 0) {
    throw BuildFailed("no uniform labeled cluster was found; archive is empty");
  }
  archive.validate();
  archive.build_config = to_json(config);
  archive.creation = {{"total_samples", trace.total_samples},
                      {"labeled_samples", dataset.labeled_count()},
                      {"nodes", trace.nodes.size()},
                      {"max_depth_reached", trace.max_depth_reached()}};
  return result;
}

}  // namespace sigarch
