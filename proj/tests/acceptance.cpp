// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [criterion numbers...]   (default: all)
// Criterion 9 runs only when SIGARCH_EMBER_CSV and SIGARCH_EMBER_CONFIG are set.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sigarch/archive.hpp"
#include "sigarch/cli.hpp"
#include "sigarch/data_io.hpp"
#include "sigarch/eval.hpp"
#include "sigarch/inference.hpp"
#include "sigarch/rank_select.hpp"

using namespace sigarch;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Tolerances and budgets.
constexpr double kKktTol = 1e-6;
constexpr double kCandidateSlack = 1e-12;  // relative, on the NNLS objective
constexpr double kMonotoneSlack = 1e-12;   // relative, per NMF iteration
constexpr double kPlantedNmfError = 1e-3;
constexpr double kAurcExactTol = 1e-12;
constexpr double kEnsembleAurcMargin = 0.02;
constexpr double kLinalgBudgetSec = 60.0;
constexpr double kLongBudgetSec = 600.0;

struct Verdict {
  enum class State { pass, fail, skip } state;
  std::string detail;
};

Verdict verdict(bool ok, std::string detail) { return {ok ? Verdict::State::pass : Verdict::State::fail, std::move(detail)}; }

class Stopwatch {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

Matrix random_nonneg(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix out(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) out(i, j) = rng.uniform();
  return out;
}

// 1. NNLS: KKT residual and optimality against random feasible points.
Verdict nnls_correctness() {
  const Stopwatch clock;
  Rng rng(1);
  double worst_kkt = 0.0;
  int beaten = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(10));
    const auto k = static_cast<Eigen::Index>(1 + rng.below(10));
    const Matrix m = random_nonneg(rng, n, k);
    Vector x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = rng.uniform(-0.5, 2.0);
    const auto r = nnls_solve(m, x);
    worst_kkt = std::max(worst_kkt, nnls_kkt_violation(m, x, r.coefficients));
    const double best = r.residual_norm * r.residual_norm;
    const double scale = std::max(1.0, 2.0 * r.coefficients.maxCoeff());
    Vector h(k);
    bool lost = false;
    for (int c = 0; c < 10000 && !lost; ++c) {
      // Half the candidates are local perturbations of the solution.
      if (c % 2 == 0) {
        for (Eigen::Index i = 0; i < k; ++i) h(i) = rng.uniform(0.0, scale);
      } else {
        for (Eigen::Index i = 0; i < k; ++i) h(i) = std::max(0.0, r.coefficients(i) + rng.uniform(-0.05, 0.05));
      }
      lost = (x - m * h).squaredNorm() < best - kCandidateSlack * std::max(1.0, best);
    }
    beaten += lost;
  }
  const double secs = clock.seconds();
  return verdict(worst_kkt <= kKktTol && beaten == 0 && secs < kLinalgBudgetSec,
                 "max KKT violation " + sci(worst_kkt) + ", instances beaten by a candidate " +
                     std::to_string(beaten) + "/1000, " + fixed(secs, 1) + " s");
}

// 2. NMF: monotone objective and planted recovery.
Verdict nmf_monotone_and_recovery() {
  const Stopwatch clock;
  int violations = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(500 + seed);
    const auto n = static_cast<Eigen::Index>(5 + rng.below(20));
    const auto m = static_cast<Eigen::Index>(5 + rng.below(30));
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::min(n, m))));
    const FeatureMatrix x(random_nonneg(rng, n, m));
    const auto f = nmf_factorize(x, k, {.max_iters = 200, .tol = 1e-300, .seed = seed, .record_history = true});
    for (std::size_t i = 1; i < f.objective_history.size(); ++i) {
      violations += f.objective_history[i] > f.objective_history[i - 1] * (1.0 + kMonotoneSlack);
    }
  }
  Rng rng(2024);
  const Matrix w = random_nonneg(rng, 20, 3);
  const Matrix h = random_nonneg(rng, 3, 30);
  const auto f = nmf_factorize(FeatureMatrix(w * h), 3, {.max_iters = 5000, .tol = 1e-10, .seed = 1});
  const double secs = clock.seconds();
  return verdict(violations == 0 && f.relative_error <= kPlantedNmfError && secs < kLinalgBudgetSec,
                 "objective increases " + std::to_string(violations) + " over 100 runs, planted 20x30 k=3 error " +
                     std::to_string(f.relative_error) + ", " + fixed(secs, 1) + " s");
}

// 3. Rank selection on planted 50x200 matrices.
Verdict rank_recovery() {
  const Stopwatch clock;
  bool ok = true;
  std::string detail;
  for (int truth = 2; truth <= 6; ++truth) {
    int hits = 0;
    for (int t = 0; t < 10; ++t) {
      const auto planted = testing::planted_matrix(1000 + 17 * static_cast<std::uint64_t>(truth) + t, 50, 200, truth, 0.01);
      EnsembleConfig config;
      config.k_min = 2;
      config.k_max = 8;
      config.n_perturbations = 16;
      config.nmf_max_iters = 500;
      config.nmf_tol = 1e-6;
      config.nmf_seed = static_cast<std::uint64_t>(t);
      hits += select_rank(planted.x, config).chosen_k == truth;
    }
    ok = ok && hits >= 9;
    detail += "k=" + std::to_string(truth) + ":" + std::to_string(hits) + "/10 ";
  }
  const double secs = clock.seconds();
  return verdict(ok && secs < kLongBudgetSec, detail + fixed(secs, 1) + " s");
}

// 4. Archive purity and sample accounting on a 3-class, 2-signatures-per-class fixture.
Verdict archive_purity() {
  int impure = 0, broken_accounts = 0, signatures = 0;
  std::set<std::string> classes_seen;
  for (std::uint64_t seed : {41, 42, 43}) {
    SyntheticSpec spec;
    spec.n_features = 60;
    spec.noise = 0.01;
    spec.seed = seed;
    spec.family_coherence = 0.6;
    spec.families = {{"A", 2, 80}, {"B", 2, 80}, {"C", 2, 80}};
    const auto data = generate_synthetic(spec);
    BuildConfig config;
    config.min_cluster_size = 5;
    config.rank_config.k_max = 8;
    config.rank_config.n_perturbations = 8;
    config.rank_config.nmf_max_iters = 300;
    config.rank_config.nmf_tol = 1e-5;
    config.rank_config.nmf_seed = seed;
    const auto result = build_archive(testing::raw_dataset(data.table), config);
    const auto& a = result.archive;
    for (Eigen::Index j = 0; j < a.size(); ++j) {
      const auto& label = a.signature_labels[static_cast<std::size_t>(j)];
      impure += testing::nearest_family(data, a.m_matrix.col(j)) != label;
      classes_seen.insert(label);
      ++signatures;
    }
    const auto& t = result.trace;
    broken_accounts += t.archived_samples + t.discarded_samples + t.unassigned_samples != t.total_samples ||
                       t.total_samples != static_cast<int>(data.table.rows.size());
  }
  return verdict(impure == 0 && broken_accounts == 0 && classes_seen.size() == 3,
                 std::to_string(signatures) + " signatures over 3 builds, mislabeled " + std::to_string(impure) +
                     ", accounting mismatches " + std::to_string(broken_accounts));
}

bool monotone_coverage(const RiskCoverageCurve& curve) {
  for (std::size_t i = 1; i < curve.points.size(); ++i)
    if (curve.points[i].coverage < curve.points[i - 1].coverage) return false;
  return true;
}

struct SelectiveTrial {
  bool operating_point = false;
  double aurc_ensemble = 0.0;
  double aurc_projection = 0.0;
  bool monotone = true;
};

std::vector<SelectiveTrial> g_selective;  // shared by criteria 5 and 6
double g_selective_secs = 0.0;

double class_f1(const EvalReport& r, const std::string& label) {
  const auto it = r.per_class.find(label);
  return it != r.per_class.end() && it->second.f1 ? *it->second.f1 : 0.0;
}

/// Five families, E held out as novel, C and D kept at 10% and 5%.
SelectiveTrial selective_trial(int t) {
  SyntheticSpec spec;
  spec.n_features = 80;
  spec.noise = 0.05;
  spec.seed = 100 + static_cast<std::uint64_t>(t);
  spec.family_coherence = 0.6;
  spec.weight_sharpness = 2.0;
  spec.families = {{"A", 3, 600}, {"B", 3, 600}, {"C", 3, 600}, {"D", 3, 600}, {"E", 3, 200}};
  spec.novel = "E";
  const auto data = generate_synthetic(spec);

  TrialConfig tc;
  tc.families = {"A", "B", "C", "D"};
  tc.novel_family = "E";
  tc.rare_families = {{"C", 0.1}, {"D", 0.05}};
  tc.test_fraction = 0.3;
  tc.seed = static_cast<std::uint64_t>(t);
  const auto split = sample_trial(data.table, tc, t);

  BuildConfig bc;
  bc.min_cluster_size = 5;
  bc.rank_config.k_max = 10;
  bc.rank_config.n_perturbations = 8;
  bc.rank_config.nmf_max_iters = 300;
  bc.rank_config.nmf_tol = 1e-5;
  bc.rank_config.nmf_seed = static_cast<std::uint64_t>(t);
  const auto archive = build_archive(testing::raw_dataset(split.train), bc).archive;

  const auto test = table_matrix(split.test);
  const double vote_threshold = 0.9;
  std::vector<double> conf_e, conf_p;
  std::vector<std::optional<std::string>> cand_e, cand_p;
  for (Eigen::Index j = 0; j < test.m(); ++j) {
    const auto scores = score_signatures(archive, test.values().col(j));
    const auto e = decide_ensemble(archive, scores, vote_threshold, 0.0);
    const auto p = decide_projection(archive, scores, 0.0);
    conf_e.push_back(e.confidence);
    cand_e.push_back(e.candidate);
    conf_p.push_back(p.confidence);
    cand_p.push_back(p.candidate);
  }

  SelectiveTrial out;
  std::set<double> thresholds(conf_e.begin(), conf_e.end());
  thresholds.insert(0.0);
  for (double th : thresholds) {
    std::vector<PredictionRecord> records;
    for (std::size_t j = 0; j < conf_e.size(); ++j) {
      records.push_back({split.truth.sample_ids[j], conf_e[j] > th ? cand_e[j] : std::nullopt, conf_e[j]});
    }
    const auto r = classification_metrics(records, split.truth);
    if (r.macro_f1 >= 0.95 && r.rejection_novel.value_or(0.0) >= 0.90 && class_f1(r, "C") >= 0.90 &&
        class_f1(r, "D") >= 0.90) {
      out.operating_point = true;
      break;
    }
  }
  const auto ce = risk_coverage_curve(conf_e, cand_e, split.truth);
  const auto cp = risk_coverage_curve(conf_p, cand_p, split.truth);
  out.aurc_ensemble = ce.aurc;
  out.aurc_projection = cp.aurc;
  out.monotone = monotone_coverage(ce) && monotone_coverage(cp);
  return out;
}

void run_selective_trials() {
  if (!g_selective.empty()) return;
  const Stopwatch clock;
  for (int t = 0; t < 10; ++t) g_selective.push_back(selective_trial(t));
  g_selective_secs = clock.seconds();
}

// 5. Selective classification with a held-out family and rare families.
Verdict selective_classification() {
  run_selective_trials();
  int good = 0;
  for (const auto& t : g_selective) good += t.operating_point;
  return verdict(good >= 8 && g_selective_secs < kLongBudgetSec,
                 std::to_string(good) + "/10 trials have a qualifying threshold, " + fixed(g_selective_secs, 1) + " s");
}

// 6. Ensemble voting AURC no worse than projection similarity.
Verdict metric_ordering() {
  run_selective_trials();
  double ens = 0.0, proj = 0.0;
  for (const auto& t : g_selective) {
    ens += t.aurc_ensemble;
    proj += t.aurc_projection;
  }
  ens /= static_cast<double>(g_selective.size());
  proj /= static_cast<double>(g_selective.size());
  return verdict(ens <= proj + kEnsembleAurcMargin,
                 "mean AURC ensemble " + fixed(ens) + ", projection " + fixed(proj));
}

// 7. Risk-coverage machinery on hand-integrated fixtures.
Verdict risk_coverage_machinery() {
  GroundTruthSet truth;
  truth.sample_ids = {"a", "b", "c", "d"};
  truth.true_labels = {"A", "A", "A", "A"};
  const auto curve = risk_coverage_curve({0.9, 0.8, 0.6, 0.4}, {"A", "A", "B", "A"}, truth);
  const double expected = 31.0 / 140.0;
  const bool exact = std::abs(curve.aurc - expected) <= kAurcExactTol;

  const double triangle = aurc(RiskCoverageCurve{{{1.0, 0.0, 0.0}, {0.0, 1.0, 1.0}}, 0.0});
  const double rectangle = aurc(RiskCoverageCurve{{{1.0, 0.0, 0.2}, {0.0, 1.0, 0.2}}, 0.0});

  bool monotone = monotone_coverage(curve);
  Rng rng(77);
  for (int s = 0; s < 200; ++s) {
    const std::size_t m = 1 + rng.below(50);
    GroundTruthSet t;
    std::vector<double> conf;
    std::vector<std::optional<std::string>> pred;
    for (std::size_t i = 0; i < m; ++i) {
      t.sample_ids.push_back("s" + std::to_string(i));
      t.true_labels.push_back(rng.uniform() < 0.1 ? std::string(kNovelLabel) : std::string(1, 'A' + rng.below(3)));
      conf.push_back(rng.uniform());
      pred.emplace_back(std::string(1, 'A' + rng.below(3)));
    }
    monotone = monotone && monotone_coverage(risk_coverage_curve(conf, pred, t));
  }
  for (const auto& t : g_selective) monotone = monotone && t.monotone;

  return verdict(exact && triangle == 0.5 && rectangle == 0.2 && monotone,
                 "fixture AURC " + fixed(curve.aurc, 15) + " (expected 31/140), triangle " + fixed(triangle, 15) +
                     ", rectangle " + fixed(rectangle, 15) + ", coverage monotone " + (monotone ? "yes" : "no"));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Runs the CLI pipeline in `dir` and returns every output, keyed by name.
std::map<std::string, std::string> cli_pipeline(const fs::path& dir, const fs::path& config, int threads) {
  std::map<std::string, std::string> outputs;
  const std::string cfg = config.string();
  const std::string th = std::to_string(threads);
  auto step = [&](const std::string& name, std::vector<std::string> args) {
    args.insert(args.begin(), {"--config", cfg, "--threads", th});
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (code != cli::kExitOk) throw std::runtime_error(name + " failed: " + err.str());
    // Summaries mention file paths, which differ between run directories.
    std::string text = out.str();
    for (auto pos = text.find(dir.string()); pos != std::string::npos; pos = text.find(dir.string(), pos)) {
      text.replace(pos, dir.string().size(), "<dir>");
    }
    outputs[name + ".stdout"] = text;
  };
  const auto p = [&](const char* f) { return (dir / f).string(); };
  step("synth", {"synth", "--out", p("data.csv")});
  step("sample-trial", {"sample-trial", "--input", p("data.csv"), "--out-dir", p("trial"), "--trial", "0"});
  step("build", {"build", "--train", p("trial/train.csv"), "--archive", p("arch.json")});
  step("classify", {"classify", "--archive", p("arch.json"), "--input", p("trial/test.csv"), "--out", p("pred.jsonl"),
                    "--detail"});
  step("evaluate", {"evaluate", "--predictions", p("pred.jsonl"), "--truth", p("trial/truth.csv"), "--out",
                    p("eval.json")});
  step("rc-curve", {"rc-curve", "--archive", p("arch.json"), "--input", p("trial/test.csv"), "--truth",
                    p("trial/truth.csv"), "--out-csv", p("rc.csv"), "--out-svg", p("rc.svg")});
  for (const char* f : {"arch.json", "arch.trace.json", "arch.rank_reports.json", "pred.jsonl", "eval.json", "rc.csv",
                        "rc.svg", "trial/train.csv", "trial/test.csv", "trial/truth.csv"}) {
    outputs[f] = slurp(dir / f);
  }
  return outputs;
}

// 8. Byte-identical CLI outputs across repeated runs and thread counts.
Verdict determinism() {
  const auto root = testing::scratch_dir("acceptance_determinism");
  const json config = {
      {"seed", 7},
      {"normalize", false},
      {"metric", "ensemble"},
      {"vote_threshold", 0.9},
      {"synth",
       {{"n_features", 40},
        {"noise", 0.03},
        {"family_coherence", 0.6},
        {"families", {{{"label", "A"}, {"n_signatures", 2}, {"n_samples", 80}},
                      {{"label", "B"}, {"n_signatures", 2}, {"n_samples", 80}},
                      {{"label", "C"}, {"n_signatures", 2}, {"n_samples", 40}}}}}},
      {"trial", {{"families", {"A", "B"}}, {"novel_family", "C"}, {"test_fraction", 0.3}}},
      {"build",
       {{"min_cluster_size", 5},
        {"rank_config", {{"k_max", 6}, {"n_perturbations", 6}, {"nmf_max_iters", 200}, {"nmf_tol", 1e-5}}}}}};
  const auto config_path = root / "cfg.json";
  std::ofstream(config_path) << config.dump(2);

  std::vector<std::map<std::string, std::string>> runs;
  for (auto [name, threads] : std::vector<std::pair<std::string, int>>{{"r1", 1}, {"r2", 1}, {"r4", 4}}) {
    const auto dir = root / name;
    fs::create_directories(dir);
    runs.push_back(cli_pipeline(dir, config_path, threads));
  }
  std::vector<std::string> differing;
  for (const auto& [key, value] : runs[0]) {
    if (runs[1].at(key) != value || runs[2].at(key) != value) differing.push_back(key);
  }
  std::string detail = std::to_string(runs[0].size()) + " artifacts compared across threads {1, 1, 4}";
  for (const auto& d : differing) detail += ", differs: " + d;
  return verdict(differing.empty(), detail);
}

// 9. Optional run on user-supplied real-world features.
Verdict user_corpus() {
  const char* csv = std::getenv("SIGARCH_EMBER_CSV");
  const char* config = std::getenv("SIGARCH_EMBER_CONFIG");
  if (!csv || !config) return {Verdict::State::skip, "set SIGARCH_EMBER_CSV and SIGARCH_EMBER_CONFIG to run"};
  const auto dir = testing::scratch_dir("acceptance_corpus");
  const auto cfg = cli::load_run_config(config);
  const auto split = sample_trial(load_feature_csv(csv), cfg.trial, 0);
  save_trial(split, dir);
  std::ostringstream out, err;
  const std::vector<std::vector<std::string>> steps = {
      {"--config", config, "build", "--train", (dir / "train.csv").string(), "--archive", (dir / "arch.json").string()},
      {"--config", config, "classify", "--archive", (dir / "arch.json").string(), "--input",
       (dir / "test.csv").string(), "--out", (dir / "pred.jsonl").string()},
      {"--config", config, "evaluate", "--predictions", (dir / "pred.jsonl").string(), "--truth",
       (dir / "truth.csv").string(), "--out", (dir / "eval.json").string()}};
  for (const auto& args : steps) {
    if (cli::run(args, out, err) != cli::kExitOk) return verdict(false, "pipeline failed: " + err.str());
  }
  const auto report = json::parse(slurp(dir / "eval.json"));
  const double seen = report.at("rejection_seen").get<double>();
  const double novel = report.value("rejection_novel", json(nullptr)).is_null()
                           ? -1.0
                           : report.at("rejection_novel").get<double>();
  return verdict(novel > seen, "rejection_seen " + fixed(seen) + ", rejection_novel " + fixed(novel) +
                                   ", macro_f1 " + fixed(report.at("macro_f1").get<double>()));
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria = {
      {1, nnls_correctness},  {2, nmf_monotone_and_recovery}, {3, rank_recovery},
      {4, archive_purity},    {5, selective_classification},  {6, metric_ordering},
      {7, risk_coverage_machinery}, {8, determinism},         {9, user_corpus}};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  bool all_ok = true;
  for (const auto& [id, fn] : criteria) {
    if (!wanted.empty() && !wanted.contains(id)) continue;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {Verdict::State::fail, std::string("exception: ") + e.what()};
    }
    const char* tag = v.state == Verdict::State::pass ? "PASS" : v.state == Verdict::State::fail ? "FAIL" : "SKIP";
    std::cout << "criterion " << id << ": " << tag << "  " << v.detail << std::endl;
    all_ok = all_ok && v.state != Verdict::State::fail;
  }
  return all_ok ? 0 : 1;
}
