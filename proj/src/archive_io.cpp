#include <fstream>
#include <set>
#include <sstream>

#include "sigarch/archive.hpp"
#include "sigarch/errors.hpp"
#include "json_config.hpp"

namespace sigarch {

using nlohmann::json;
using detail::read_opt;
using detail::reject_unknown;

namespace {

const char* fate_name(ClusterFate f) {
  switch (f) {
    case ClusterFate::archived: return "archived";
    case ClusterFate::recursed: return "recursed";
    case ClusterFate::discarded: return "discarded";
    case ClusterFate::empty: return "empty";
  }
  return "unknown";
}

template <typename T>
T take(const json& doc, const char* key) {
  if (!doc.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace

json to_json(const EnsembleConfig& c) {
  return {{"k_min", c.k_min},
          {"k_max", c.k_max},
          {"n_perturbations", c.n_perturbations},
          {"noise_magnitude", c.noise_magnitude},
          {"nmf_seed", c.nmf_seed},
          {"nmf_max_iters", c.nmf_max_iters},
          {"nmf_tol", c.nmf_tol},
          {"min_silhouette", c.min_silhouette},
          {"error_slack", c.error_slack}};
}

EnsembleConfig ensemble_config_from_json(const json& doc, EnsembleConfig c) {
  reject_unknown(doc,
                 {"k_min", "k_max", "n_perturbations", "noise_magnitude", "nmf_seed", "nmf_max_iters",
                  "nmf_tol", "min_silhouette", "error_slack"},
                 "rank_config");
  read_opt(doc, "k_min", c.k_min, "rank_config");
  read_opt(doc, "k_max", c.k_max, "rank_config");
  read_opt(doc, "n_perturbations", c.n_perturbations, "rank_config");
  read_opt(doc, "noise_magnitude", c.noise_magnitude, "rank_config");
  read_opt(doc, "nmf_seed", c.nmf_seed, "rank_config");
  read_opt(doc, "nmf_max_iters", c.nmf_max_iters, "rank_config");
  read_opt(doc, "nmf_tol", c.nmf_tol, "rank_config");
  read_opt(doc, "min_silhouette", c.min_silhouette, "rank_config");
  read_opt(doc, "error_slack", c.error_slack, "rank_config");
  return c;
}

json to_json(const BuildConfig& c) {
  return {{"tau", c.tau},
          {"max_depth", c.max_depth},
          {"min_cluster_size", c.min_cluster_size},
          {"min_labeled_fraction", c.min_labeled_fraction},
          {"rank_config", to_json(c.rank_config)}};
}

BuildConfig build_config_from_json(const json& doc) {
  reject_unknown(doc, {"tau", "max_depth", "min_cluster_size", "min_labeled_fraction", "rank_config"}, "build");
  BuildConfig c;
  read_opt(doc, "tau", c.tau, "build");
  read_opt(doc, "max_depth", c.max_depth, "build");
  read_opt(doc, "min_cluster_size", c.min_cluster_size, "build");
  read_opt(doc, "min_labeled_fraction", c.min_labeled_fraction, "build");
  if (doc.contains("rank_config")) c.rank_config = ensemble_config_from_json(doc.at("rank_config"), c.rank_config);
  return c;
}

json to_json(const NormalizationParams& p) {
  return {{"mean", p.mean},
          {"stddev", p.stddev},
          {"clamp_sigmas", p.clamp_sigmas},
          {"post_shift", p.post_shift},
          {"post_scale", p.post_scale}};
}

NormalizationParams normalization_from_json(const json& doc) {
  NormalizationParams p;
  p.mean = take<std::vector<double>>(doc, "mean");
  p.stddev = take<std::vector<double>>(doc, "stddev");
  p.clamp_sigmas = take<double>(doc, "clamp_sigmas");
  p.post_shift = take<std::vector<double>>(doc, "post_shift");
  p.post_scale = take<std::vector<double>>(doc, "post_scale");
  const auto n = p.mean.size();
  if (p.stddev.size() != n || p.post_shift.size() != n || p.post_scale.size() != n) {
    throw FormatError("normalization: per-feature arrays disagree in length");
  }
  return p;
}

json to_json(const RankSelectionReport& r) {
  json per_k = json::array();
  for (const auto& s : r.per_k) {
    per_k.push_back({{"k", s.k},
                     {"min_silhouette", s.min_silhouette},
                     {"mean_silhouette", s.mean_silhouette},
                     {"relative_error", s.relative_error}});
  }
  return {{"per_k", per_k},
          {"chosen_k", r.chosen_k},
          {"selection_rationale", r.selection_rationale},
          {"warnings", r.warnings}};
}

json to_json(const BuildTrace& t) {
  json nodes = json::array();
  for (const auto& node : t.nodes) {
    json clusters = json::array();
    for (const auto& c : node.clusters) {
      json jc = {{"cluster", c.cluster}, {"size", c.size}, {"labeled", c.labeled}, {"fate", fate_name(c.fate)}};
      if (c.label) jc["label"] = *c.label;
      if (c.signature_index) jc["signature_index"] = *c.signature_index;
      if (c.child_node) jc["child_node"] = *c.child_node;
      clusters.push_back(std::move(jc));
    }
    json jn = {{"id", node.id},
               {"parent", node.parent},
               {"depth", node.depth},
               {"n_samples", node.n_samples},
               {"chosen_k", node.chosen_k},
               {"effective_k", node.effective_k},
               {"relative_error", node.relative_error},
               {"unassigned", node.unassigned},
               {"clusters", clusters}};
    if (node.failure) jn["failure"] = *node.failure;
    if (node.residue_node) jn["residue_node"] = *node.residue_node;
    nodes.push_back(std::move(jn));
  }
  return {{"total_samples", t.total_samples},
          {"archived_samples", t.archived_samples},
          {"discarded_samples", t.discarded_samples},
          {"unassigned_samples", t.unassigned_samples},
          {"max_depth_reached", t.max_depth_reached()},
          {"nodes", nodes}};
}

json archive_to_json(const SignatureArchive& a) {
  json header = {{"format_version", kArchiveFormatVersion},
                 {"n", a.feature_count()},
                 {"K", a.size()},
                 {"class_set", a.class_set},
                 {"build_config", a.build_config},
                 {"creation", a.creation}};
  if (a.normalization) header["normalization"] = to_json(*a.normalization);
  json signatures = json::array();
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    const auto& meta = a.signature_meta[static_cast<std::size_t>(j)];
    std::vector<double> values(a.m_matrix.col(j).data(), a.m_matrix.col(j).data() + a.feature_count());
    signatures.push_back({{"label", a.signature_labels[static_cast<std::size_t>(j)]},
                          {"meta",
                           {{"depth", meta.depth},
                            {"source_cluster_size", meta.source_cluster_size},
                            {"mean_activation", meta.mean_activation}}},
                          {"values", values}});
  }
  return {{"header", header}, {"signatures", signatures}};
}

SignatureArchive archive_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("header") || !doc.contains("signatures")) {
    throw FormatError("archive: missing header or signatures");
  }
  const json& header = doc.at("header");
  const int version = take<int>(header, "format_version");
  if (version != kArchiveFormatVersion) {
    throw FormatError("archive: format_version " + std::to_string(version) +
                      " is not supported (this build reads version " +
                      std::to_string(kArchiveFormatVersion) + ")");
  }
  SignatureArchive a;
  const auto n = take<Eigen::Index>(header, "n");
  const auto K = take<Eigen::Index>(header, "K");
  a.class_set = take<std::vector<std::string>>(header, "class_set");
  if (header.contains("build_config")) a.build_config = header.at("build_config");
  if (header.contains("creation")) a.creation = header.at("creation");
  if (header.contains("normalization")) a.normalization = normalization_from_json(header.at("normalization"));

  const json& sigs = doc.at("signatures");
  if (!sigs.is_array() || static_cast<Eigen::Index>(sigs.size()) != K) {
    throw FormatError("archive: header says K=" + std::to_string(K) + " but found " +
                      std::to_string(sigs.is_array() ? sigs.size() : 0) + " signatures");
  }
  a.m_matrix.resize(n, K);
  for (Eigen::Index j = 0; j < K; ++j) {
    const json& s = sigs.at(static_cast<std::size_t>(j));
    const auto values = take<std::vector<double>>(s, "values");
    if (static_cast<Eigen::Index>(values.size()) != n) {
      throw FormatError("archive: signature " + std::to_string(j) + " has " +
                        std::to_string(values.size()) + " values, expected " + std::to_string(n));
    }
    for (Eigen::Index i = 0; i < n; ++i) a.m_matrix(i, j) = values[static_cast<std::size_t>(i)];
    const auto label = take<std::string>(s, "label");
    const json meta = take<json>(s, "meta");
    a.signature_labels.push_back(label);
    a.signature_meta.push_back({take<int>(meta, "depth"), take<int>(meta, "source_cluster_size"),
                                take<double>(meta, "mean_activation")});
    a.class_index[label].push_back(static_cast<int>(j));
  }
  a.validate();
  return a;
}

void save_archive(const SignatureArchive& archive, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << archive_to_json(archive).dump(1) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

SignatureArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("archive '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return archive_from_json(doc);
}

}  // namespace sigarch
