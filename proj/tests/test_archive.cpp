#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "sigarch/archive.hpp"
#include "sigarch/errors.hpp"

using namespace sigarch;
using testing::nearest_family;
using testing::raw_dataset;

namespace {

using Labels = std::vector<std::optional<std::string>>;

ClusterAssignment all_in_cluster_zero(std::size_t m) {
  ClusterAssignment a;
  a.cluster_of.assign(m, 0);
  a.confidence_of.assign(m, 1.0);
  a.threshold = 0.5;
  return a;
}

BuildConfig small_build(int k_max) {
  BuildConfig c;
  c.rank_config.k_max = k_max;
  c.rank_config.n_perturbations = 6;
  c.rank_config.nmf_max_iters = 300;
  c.rank_config.nmf_tol = 1e-6;
  return c;
}

SyntheticData families(std::vector<SyntheticFamily> fams, std::uint64_t seed, int n_features = 40) {
  SyntheticSpec spec;
  spec.n_features = n_features;
  spec.families = std::move(fams);
  spec.noise = 0.01;
  spec.seed = seed;
  return generate_synthetic(spec);
}

void check_accounting(const BuildTrace& t) {
  CHECK(t.archived_samples + t.discarded_samples + t.unassigned_samples == t.total_samples);
  int archived = 0;
  for (const auto& node : t.nodes)
    for (const auto& c : node.clusters)
      if (c.fate == ClusterFate::archived) archived += c.size;
  CHECK(archived == t.archived_samples);
}

}  // namespace

TEST_CASE("assign_clusters threshold rule") {
  Matrix h(2, 3);
  h << 0.9, 0.55, 2,
       0.1, 0.45, 2;
  const auto a = assign_clusters(h, 0.7);
  REQUIRE(a.cluster_of[0].has_value());
  CHECK(*a.cluster_of[0] == 0);
  CHECK(a.confidence_of[0] == doctest::Approx(0.9));
  CHECK_FALSE(a.cluster_of[1].has_value());
  CHECK(a.confidence_of[1] == doctest::Approx(0.55));

  const auto tie = assign_clusters(h, 0.4);
  REQUIRE(tie.cluster_of[2].has_value());
  CHECK(*tie.cluster_of[2] == 0);
  CHECK(tie.confidence_of[2] == doctest::Approx(0.5));
}

TEST_CASE("assign_clusters leaves all-zero columns unassigned") {
  Matrix h = Matrix::Zero(3, 2);
  h(1, 1) = 4.0;
  const auto a = assign_clusters(h, 0.0);
  CHECK_FALSE(a.cluster_of[0].has_value());
  CHECK(a.confidence_of[0] == 0.0);
  REQUIRE(a.cluster_of[1].has_value());
  CHECK(*a.cluster_of[1] == 1);
  CHECK(a.confidence_of[1] == 1.0);
}

TEST_CASE("assign_clusters invariant: assigned iff confidence > tau") {
  Rng rng(4);
  Matrix h(4, 300);
  for (Eigen::Index j = 0; j < h.cols(); ++j)
    for (Eigen::Index i = 0; i < h.rows(); ++i) h(i, j) = rng.exponential();
  for (double tau : {0.0, 0.3, 0.6, 0.9}) {
    const auto a = assign_clusters(h, tau);
    for (std::size_t j = 0; j < a.cluster_of.size(); ++j) {
      CHECK(a.cluster_of[j].has_value() == (a.confidence_of[j] > tau));
      CHECK(a.confidence_of[j] >= 0.0);
      CHECK(a.confidence_of[j] <= 1.0);
    }
  }
}

TEST_CASE("check_uniformity examples") {
  const UniformityRule loose{1, 0.3};
  {
    const Labels l{"A", "A", "A"};
    const auto u = check_uniformity(all_in_cluster_zero(3), l, 1, loose);
    CHECK(u[0].is_uniform);
    CHECK(u[0].majority_label == std::optional<std::string>("A"));
  }
  {
    const Labels l{"A", "A", "B"};
    const auto u = check_uniformity(all_in_cluster_zero(3), l, 1, loose);
    CHECK_FALSE(u[0].is_uniform);
    CHECK_FALSE(u[0].majority_label.has_value());
  }
  {
    const Labels l{"A", "A", std::nullopt};
    const auto u = check_uniformity(all_in_cluster_zero(3), l, 1, {1, 0.5});
    CHECK(u[0].is_uniform);
    CHECK(u[0].labeled_count == 2);
    CHECK(u[0].total_count == 3);
  }
  {
    const Labels l{"A", std::nullopt, std::nullopt};
    CHECK_FALSE(check_uniformity(all_in_cluster_zero(3), l, 1, {1, 0.5})[0].is_uniform);
    CHECK_FALSE(check_uniformity(all_in_cluster_zero(3), Labels{"A", "A", "A"}, 1, {4, 0.3})[0].is_uniform);
  }
}

TEST_CASE("build on a single class never recurses into clusters") {
  const auto data = families({{"A", 2, 80}}, 3);
  const auto result = build_archive(raw_dataset(data.table), small_build(4));
  CHECK(result.archive.size() >= 1);
  for (const auto& l : result.archive.signature_labels) CHECK(l == "A");
  const auto& nodes = result.trace.nodes;
  for (const auto& c : nodes.front().clusters) CHECK(c.fate != ClusterFate::recursed);
  // Only low-confidence residue may be re-factorized.
  for (const auto& node : nodes) {
    if (node.parent < 0) continue;
    CHECK(nodes[static_cast<std::size_t>(node.parent)].residue_node == std::optional<int>(node.id));
  }
  check_accounting(result.trace);
}

TEST_CASE("build separates two classes with disjoint signatures") {
  Rng rng(21);
  FeatureTable table;
  const int n = 20;
  for (int i = 0; i < n; ++i) table.header.push_back("f" + std::to_string(i));
  Vector sig_a = Vector::Zero(n), sig_b = Vector::Zero(n);
  for (int i = 0; i < n / 2; ++i) sig_a(i) = rng.uniform(0.2, 1.0);
  for (int i = n / 2; i < n; ++i) sig_b(i) = rng.uniform(0.2, 1.0);
  for (int j = 0; j < 120; ++j) {
    const bool is_a = j % 2 == 0;
    const Vector& s = is_a ? sig_a : sig_b;
    const double scale = rng.uniform(0.5, 2.0);
    FeatureRow row{"s" + std::to_string(j), is_a ? "A" : "B", {}};
    for (int i = 0; i < n; ++i) row.values.push_back(s(i) * scale * (1.0 + rng.uniform(-0.01, 0.01)));
    table.rows.push_back(std::move(row));
  }
  const auto result = build_archive(raw_dataset(table), small_build(4));
  const auto& a = result.archive;
  REQUIRE(a.class_index.contains("A"));
  REQUIRE(a.class_index.contains("B"));
  CHECK_FALSE(a.class_index.at("A").empty());
  CHECK_FALSE(a.class_index.at("B").empty());
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    const auto& planted = a.signature_labels[static_cast<std::size_t>(j)] == "A" ? sig_a : sig_b;
    const auto& other = a.signature_labels[static_cast<std::size_t>(j)] == "A" ? sig_b : sig_a;
    CHECK(cosine_similarity(a.m_matrix.col(j), planted) > cosine_similarity(a.m_matrix.col(j), other));
  }
  check_accounting(result.trace);
}

TEST_CASE("build recurses when the first factorization merges classes") {
  const auto data = families({{"A", 1, 60}, {"B", 1, 60}, {"C", 1, 60}}, 12);
  auto config = small_build(2);
  config.rank_config.k_min = 2;
  const auto result = build_archive(raw_dataset(data.table), config);
  CHECK(result.trace.max_depth_reached() >= 1);
  const auto& root = result.trace.nodes.front().clusters;
  CHECK(std::any_of(root.begin(), root.end(), [](const ClusterRecord& c) { return c.fate == ClusterFate::recursed; }));
  CHECK(result.archive.class_index.size() == 3);
  for (Eigen::Index j = 0; j < result.archive.size(); ++j) {
    CHECK(nearest_family(data, result.archive.m_matrix.col(j)) ==
          result.archive.signature_labels[static_cast<std::size_t>(j)]);
  }
  check_accounting(result.trace);
  result.archive.validate();
}

TEST_CASE("build accounting holds with shuffled labels") {
  auto data = families({{"A", 2, 50}, {"B", 2, 50}}, 31);
  Rng rng(2);
  std::vector<std::string> labels;
  for (const auto& r : data.table.rows) labels.push_back(r.label);
  rng.shuffle(labels.begin(), labels.end());
  for (std::size_t j = 0; j < labels.size(); ++j) data.table.rows[j].label = labels[j];
  try {
    const auto result = build_archive(raw_dataset(data.table), small_build(4));
    check_accounting(result.trace);
    CHECK(result.trace.max_depth_reached() < 5);
  } catch (const BuildFailed&) {
    // Nothing uniform survived: also a valid outcome.
  }
}

TEST_CASE("build rejects unlabeled input") {
  auto data = families({{"A", 1, 30}}, 1);
  for (auto& r : data.table.rows) r.label.clear();
  CHECK_THROWS_AS(build_archive(raw_dataset(data.table), small_build(3)), BuildFailed);
}

TEST_CASE("build is deterministic and thread-count invariant") {
  const auto data = families({{"A", 1, 40}, {"B", 2, 40}}, 8);
  auto config = small_build(4);
  config.rank_config.nmf_seed = 5;
  const auto a = build_archive(raw_dataset(data.table), config);
  config.rank_config.max_threads = 3;
  const auto b = build_archive(raw_dataset(data.table), config);
  CHECK(a.archive.m_matrix == b.archive.m_matrix);
  CHECK(a.archive.signature_labels == b.archive.signature_labels);
  CHECK(to_json(a.trace) == to_json(b.trace));
}

TEST_CASE("BuildConfig validation") {
  BuildConfig c;
  c.tau = 1.5;
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
  c = BuildConfig{};
  c.min_labeled_fraction = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
  c = BuildConfig{};
  c.max_depth = 0;
  CHECK_THROWS_AS(c.validate(), InvalidParameter);
  CHECK_THROWS_AS(build_config_from_json({{"tau", 0.5}, {"bogus", 1}}), ConfigError);
  CHECK(build_config_from_json({{"rank_config", {{"k_max", 4}}}}).rank_config.k_min == 2);
}

TEST_CASE("archive round-trip is exact") {
  const auto data = families({{"A", 1, 40}, {"B", 1, 40}}, 19);
  auto normalized = normalize(data.table);
  auto result = build_archive(make_dataset(data.table, normalized.matrix), small_build(3));
  result.archive.normalization = normalized.params;
  const auto dir = testing::scratch_dir("roundtrip");
  save_archive(result.archive, dir / "a.json");
  const auto loaded = load_archive(dir / "a.json");
  const auto& a = result.archive;
  CHECK(loaded.m_matrix == a.m_matrix);
  CHECK(loaded.signature_labels == a.signature_labels);
  CHECK(loaded.class_set == a.class_set);
  CHECK(loaded.class_index == a.class_index);
  REQUIRE(loaded.signature_meta.size() == a.signature_meta.size());
  for (std::size_t i = 0; i < a.signature_meta.size(); ++i) {
    CHECK(loaded.signature_meta[i].depth == a.signature_meta[i].depth);
    CHECK(loaded.signature_meta[i].source_cluster_size == a.signature_meta[i].source_cluster_size);
    CHECK(loaded.signature_meta[i].mean_activation == a.signature_meta[i].mean_activation);
  }
  REQUIRE(loaded.normalization.has_value());
  CHECK(loaded.normalization->mean == a.normalization->mean);
  CHECK(loaded.normalization->stddev == a.normalization->stddev);
  CHECK(loaded.build_config == a.build_config);
  CHECK(archive_to_json(loaded) == archive_to_json(a));
}

TEST_CASE("archive load failures") {
  const auto data = families({{"A", 1, 30}}, 2);
  const auto result = build_archive(raw_dataset(data.table), small_build(2));
  const auto dir = testing::scratch_dir("loadfail");
  const std::string text = archive_to_json(result.archive).dump();

  std::ofstream(dir / "truncated.json") << text.substr(0, text.size() / 2);
  CHECK_THROWS_AS(load_archive(dir / "truncated.json"), FormatError);

  auto future = archive_to_json(result.archive);
  future["header"]["format_version"] = kArchiveFormatVersion + 1;
  std::ofstream(dir / "future.json") << future.dump();
  try {
    load_archive(dir / "future.json");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(std::to_string(kArchiveFormatVersion + 1)) != std::string::npos);
    CHECK(msg.find(std::to_string(kArchiveFormatVersion)) != std::string::npos);
  }

  CHECK_THROWS_AS(load_archive(dir / "missing.json"), IoError);
}

TEST_CASE("archive rejects bad signatures") {
  SignatureArchive a;
  a.class_set = {"A"};
  a.m_matrix.resize(3, 0);
  CHECK_THROWS_AS(a.add_signature(Vector::Ones(3), "Z", {}), InvalidParameter);
  CHECK_THROWS_AS(a.add_signature(Vector::Zero(3), "A", {}), InvalidParameter);
  a.add_signature(Vector::Constant(3, 2.0), "A", {});
  CHECK(a.m_matrix.col(0).norm() == doctest::Approx(1.0));
  CHECK(a.class_index.at("A") == std::vector<int>{0});
}
