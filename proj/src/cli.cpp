#include "sigarch/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "json_config.hpp"
#include "sigarch/errors.hpp"
#include "sigarch/parallel.hpp"

namespace sigarch::cli {

using nlohmann::json;
using detail::read_opt;
using detail::reject_unknown;

namespace fs = std::filesystem;

SyntheticSpec RunConfig::default_synth() {
  SyntheticSpec s;
  s.families = {{"A", 1, 100}, {"B", 1, 100}, {"C", 1, 100}};
  return s;
}

void RunConfig::set_seed(std::uint64_t seed) {
  build.rank_config.nmf_seed = seed;
  augmentation.seed = seed;
  trial.seed = seed;
  synth.seed = seed;
}

void RunConfig::set_threads(int n) {
  threads = n;
  build.rank_config.max_threads = n;
  augmentation.max_threads = n;
}

void RunConfig::validate() const {
  build.validate();
  augmentation.validate();
  synth.validate();
  if (!trial.families.empty()) trial.validate();
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw InvalidParameter("threshold must lie in [0, 1]");
  if (!(vote_threshold >= 0.0 && vote_threshold < 1.0)) throw InvalidParameter("vote_threshold must lie in [0, 1)");
  if (threads < 1) throw InvalidParameter("threads must be >= 1");
}

namespace {

AugmentationConfig augmentation_from_json(const json& doc, AugmentationConfig c) {
  reject_unknown(doc, {"p", "epsilon_norm", "n_bootstrap", "seed"}, "augmentation");
  read_opt(doc, "p", c.p, "augmentation");
  read_opt(doc, "epsilon_norm", c.epsilon_norm, "augmentation");
  read_opt(doc, "n_bootstrap", c.n_bootstrap, "augmentation");
  read_opt(doc, "seed", c.seed, "augmentation");
  return c;
}

TrialConfig trial_from_json(const json& doc, TrialConfig c) {
  reject_unknown(doc, {"families", "novel_family", "rare_families", "test_fraction", "n_trials", "seed"}, "trial");
  read_opt(doc, "families", c.families, "trial");
  read_opt(doc, "novel_family", c.novel_family, "trial");
  read_opt(doc, "test_fraction", c.test_fraction, "trial");
  read_opt(doc, "n_trials", c.n_trials, "trial");
  read_opt(doc, "seed", c.seed, "trial");
  if (doc.contains("rare_families")) {
    const auto& rare = doc.at("rare_families");
    if (!rare.is_array()) throw ConfigError("trial.rare_families must be an array");
    c.rare_families.clear();
    for (const auto& r : rare) {
      reject_unknown(r, {"label", "keep_fraction"}, "trial.rare_families[]");
      RareFamily f;
      read_opt(r, "label", f.label, "trial.rare_families[]");
      read_opt(r, "keep_fraction", f.keep_fraction, "trial.rare_families[]");
      c.rare_families.push_back(std::move(f));
    }
  }
  return c;
}

SyntheticSpec synth_from_json(const json& doc, SyntheticSpec s) {
  reject_unknown(doc,
                 {"n_features", "families", "noise", "novel", "seed", "max_cosine", "family_coherence",
                  "weight_sharpness"},
                 "synth");
  read_opt(doc, "n_features", s.n_features, "synth");
  read_opt(doc, "noise", s.noise, "synth");
  read_opt(doc, "seed", s.seed, "synth");
  read_opt(doc, "max_cosine", s.max_cosine, "synth");
  read_opt(doc, "family_coherence", s.family_coherence, "synth");
  read_opt(doc, "weight_sharpness", s.weight_sharpness, "synth");
  if (doc.contains("novel")) {
    if (doc.at("novel").is_null()) {
      s.novel.reset();
    } else {
      std::string novel;
      read_opt(doc, "novel", novel, "synth");
      s.novel = novel;
    }
  }
  if (doc.contains("families")) {
    const auto& fams = doc.at("families");
    if (!fams.is_array()) throw ConfigError("synth.families must be an array");
    s.families.clear();
    for (const auto& f : fams) {
      reject_unknown(f, {"label", "n_signatures", "n_samples"}, "synth.families[]");
      SyntheticFamily fam;
      read_opt(f, "label", fam.label, "synth.families[]");
      read_opt(f, "n_signatures", fam.n_signatures, "synth.families[]");
      read_opt(f, "n_samples", fam.n_samples, "synth.families[]");
      s.families.push_back(std::move(fam));
    }
  }
  return s;
}

json to_json(const SyntheticSpec& s) {
  json fams = json::array();
  for (const auto& f : s.families) {
    fams.push_back({{"label", f.label}, {"n_signatures", f.n_signatures}, {"n_samples", f.n_samples}});
  }
  return {{"n_features", s.n_features},
          {"families", fams},
          {"noise", s.noise},
          {"novel", s.novel ? json(*s.novel) : json(nullptr)},
          {"seed", s.seed},
          {"max_cosine", s.max_cosine},
          {"family_coherence", s.family_coherence},
          {"weight_sharpness", s.weight_sharpness}};
}

json to_json(const TrialConfig& t) {
  json rare = json::array();
  for (const auto& r : t.rare_families) rare.push_back({{"label", r.label}, {"keep_fraction", r.keep_fraction}});
  return {{"families", t.families},
          {"novel_family", t.novel_family},
          {"rare_families", rare},
          {"test_fraction", t.test_fraction},
          {"n_trials", t.n_trials},
          {"seed", t.seed}};
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

void report_error(std::ostream& err, const std::exception& e) {
  const auto* typed = dynamic_cast<const Error*>(&e);
  err << "error: " << (typed ? typed->kind() : "RuntimeError") << ": " << one_line(e.what()) << "\n";
}

FeatureMatrix features_for(const SignatureArchive& archive, const FeatureTable& table) {
  if (table.header.size() != static_cast<std::size_t>(archive.feature_count())) {
    throw DimensionMismatch("feature count mismatch: archive has " + std::to_string(archive.feature_count()) +
                            " features, input has " + std::to_string(table.header.size()));
  }
  if (table.rows.empty()) throw DegenerateInput("input table has no rows");
  return archive.normalization ? apply_normalization(*archive.normalization, table) : table_matrix(table);
}

std::vector<Prediction> classify_all(const SignatureArchive& archive, const FeatureMatrix& x,
                                     const RunConfig& cfg, double threshold) {
  MetricParams params;
  params.vote_threshold = cfg.vote_threshold;
  params.augmentation = cfg.augmentation;
  params.augmentation.max_threads = 1;
  std::vector<Prediction> out(static_cast<std::size_t>(x.m()));
  parallel_for(out.size(), static_cast<std::size_t>(cfg.threads), [&](std::size_t j) {
    out[j] = classify(archive, x.values().col(static_cast<Eigen::Index>(j)), cfg.metric, params, threshold);
  });
  return out;
}

/// Truth taken from the table's own labels: archive classes stay, any other
/// label is a novel family.
GroundTruthSet truth_from_labels(const FeatureTable& table, const SignatureArchive& archive) {
  GroundTruthSet truth;
  for (const auto& row : table.rows) {
    if (row.label.empty()) {
      throw ParseError("row '" + row.sample_id + "' has no label; pass --truth");
    }
    truth.sample_ids.push_back(row.sample_id);
    truth.true_labels.push_back(archive.class_index.contains(row.label) ? row.label : std::string(kNovelLabel));
  }
  truth.validate();
  return truth;
}

std::vector<PredictionRecord> read_predictions(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<PredictionRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("sample_id") || !doc.contains("outcome")) {
      throw ParseError(where + ": expected an object with sample_id and outcome");
    }
    try {
      PredictionRecord r;
      r.sample_id = doc.at("sample_id").get<std::string>();
      const auto outcome = doc.at("outcome").get<std::string>();
      if (outcome != "REJECT") r.label = outcome;
      if (doc.contains("confidence")) r.confidence = doc.at("confidence").get<double>();
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  return records;
}

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 1;
  bool verbose = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
};

class Logger {
 public:
  Logger(std::ostream& err, bool on) : err_(err), on_(on) {}
  void operator()(const std::string& msg) const {
    if (on_) err_ << msg << "\n";
  }

 private:
  std::ostream& err_;
  bool on_;
};

int cmd_build(const RunConfig& cfg, const fs::path& train, const fs::path& archive_path, std::ostream& out,
              const Logger& log) {
  const FeatureTable table = load_feature_csv(train);
  log("loaded " + std::to_string(table.rows.size()) + " rows x " + std::to_string(table.header.size()) +
      " features from " + train.string());
  std::optional<NormalizationParams> params;
  FeatureMatrix x;
  if (cfg.normalize) {
    auto nt = normalize(table);
    x = std::move(nt.matrix);
    params = std::move(nt.params);
  } else {
    x = table_matrix(table);
  }
  BuildResult result = build_archive(make_dataset(table, std::move(x)), cfg.build);
  result.archive.normalization = std::move(params);
  if (archive_path.has_parent_path()) fs::create_directories(archive_path.parent_path());
  save_archive(result.archive, archive_path);

  const fs::path dir = cfg.output_dir.empty() ? archive_path.parent_path() : fs::path(cfg.output_dir);
  const std::string stem = archive_path.stem().string();
  write_text(dir / (stem + ".trace.json"), to_json(result.trace).dump(2) + "\n");
  json reports = json::array();
  for (const auto& node : result.trace.nodes) {
    if (node.failure) continue;
    reports.push_back({{"node", node.id}, {"depth", node.depth}, {"report", to_json(node.rank_report)}});
    log("node " + std::to_string(node.id) + " depth " + std::to_string(node.depth) + ": k=" +
        std::to_string(node.chosen_k) + " (" + node.rank_report.selection_rationale + ")");
  }
  write_text(dir / (stem + ".rank_reports.json"), reports.dump(2) + "\n");
  write_text(dir / (stem + ".run_config.json"), to_json(cfg).dump(2) + "\n");

  const auto& t = result.trace;
  std::string classes;
  for (const auto& c : result.archive.class_set) classes += (classes.empty() ? "" : ",") + c;
  out << "archive " << archive_path.string() << ": K=" << result.archive.size() << " classes=" << classes
      << " depth=" << t.max_depth_reached() << " nodes=" << t.nodes.size() << " archived=" << t.archived_samples
      << " discarded=" << t.discarded_samples << " unassigned=" << t.unassigned_samples
      << " samples=" << t.total_samples << "\n";
  return kExitOk;
}

int cmd_classify(const RunConfig& cfg, const fs::path& archive_path, const fs::path& input,
                 const fs::path& out_path, bool detail, std::ostream& out, const Logger& log) {
  const SignatureArchive archive = load_archive(archive_path);
  const FeatureTable table = load_feature_csv(input);
  const FeatureMatrix x = features_for(archive, table);
  log("classifying " + std::to_string(table.rows.size()) + " samples with " + metric_name(cfg.metric));
  const auto predictions = classify_all(archive, x, cfg, cfg.threshold);

  std::string lines;
  std::map<std::string, int> counts;
  int accepted = 0;
  for (std::size_t j = 0; j < predictions.size(); ++j) {
    lines += prediction_to_json(table.rows[j].sample_id, predictions[j], detail).dump() + "\n";
    ++counts[predictions[j].outcome()];
    if (!predictions[j].rejected()) ++accepted;
  }
  write_text(out_path, lines);

  out << "coverage=" << fmt(static_cast<double>(accepted) / static_cast<double>(predictions.size()))
      << " accepted=" << accepted << "/" << predictions.size();
  for (const auto& [label, n] : counts) out << " " << label << "=" << n;
  out << "\n";
  return kExitOk;
}

int cmd_evaluate(const fs::path& predictions_path, const fs::path& truth_path, const std::vector<std::string>& novel,
                 const std::string& out_path, std::ostream& out) {
  const auto records = read_predictions(predictions_path);
  const GroundTruthSet truth = load_truth_csv(truth_path, novel);
  const EvalReport report = classification_metrics(records, truth);
  if (!out_path.empty()) write_text(out_path, to_json(report).dump(2) + "\n");
  out << "macro_f1=" << fmt(report.macro_f1) << " macro_precision=" << fmt(report.macro_precision)
      << " macro_recall=" << fmt(report.macro_recall) << " weighted_f1=" << fmt(report.weighted_f1)
      << " coverage=" << fmt(report.coverage) << "\n";
  out << "rejection_seen=" << fmt(report.rejection_seen) << " rejection_novel="
      << (report.rejection_novel ? fmt(*report.rejection_novel) : std::string("n/a")) << " known=" << report.known
      << " novel=" << report.novel << "\n";
  return kExitOk;
}

int cmd_rc_curve(const RunConfig& cfg, const fs::path& archive_path, const fs::path& input,
                 const std::string& truth_path, const std::vector<std::string>& novel, const fs::path& csv_path,
                 const std::string& svg_path, int n_points, std::ostream& out, const Logger& log) {
  const SignatureArchive archive = load_archive(archive_path);
  const FeatureTable table = load_feature_csv(input);
  const FeatureMatrix x = features_for(archive, table);
  const GroundTruthSet truth =
      truth_path.empty() ? truth_from_labels(table, archive) : load_truth_csv(truth_path, novel);
  if (truth.sample_ids.size() != table.rows.size()) {
    throw AlignmentError("truth has " + std::to_string(truth.sample_ids.size()) + " rows, input has " +
                         std::to_string(table.rows.size()));
  }
  for (std::size_t j = 0; j < truth.sample_ids.size(); ++j) {
    if (truth.sample_ids[j] != table.rows[j].sample_id) {
      throw AlignmentError("truth row " + std::to_string(j + 1) + " is '" + truth.sample_ids[j] +
                           "' but input row is '" + table.rows[j].sample_id + "'");
    }
  }
  log("scoring " + std::to_string(table.rows.size()) + " samples with " + metric_name(cfg.metric));
  const auto predictions = classify_all(archive, x, cfg, 0.0);
  std::vector<double> confidences;
  std::vector<std::optional<std::string>> candidates;
  for (const auto& p : predictions) {
    confidences.push_back(p.confidence);
    candidates.push_back(p.candidate);
  }
  const RiskCoverageCurve curve = risk_coverage_curve(confidences, candidates, truth, n_points);
  write_text(csv_path, curve_to_csv(curve));
  if (!svg_path.empty()) {
    write_text(svg_path, render_curve_svg(curve, std::string("Risk-coverage, ") + metric_name(cfg.metric)));
  }
  out << "AURC=" << fmt(curve.aurc, 6) << " points=" << curve.points.size() << "\n";
  return kExitOk;
}

int cmd_synth(const RunConfig& cfg, const fs::path& csv_path, const std::string& planted_path, std::ostream& out) {
  const SyntheticData data = generate_synthetic(cfg.synth);
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  save_feature_csv(data.table, csv_path);
  json signatures = json::array();
  for (Eigen::Index c = 0; c < data.signatures.cols(); ++c) {
    signatures.push_back(std::vector<double>(data.signatures.col(c).begin(), data.signatures.col(c).end()));
  }
  const json planted = {{"spec", to_json(cfg.synth)},
                        {"family_signatures", data.family_signatures},
                        {"novel", data.novel ? json(*data.novel) : json(nullptr)},
                        {"signatures", signatures}};
  const fs::path planted_file =
      planted_path.empty() ? fs::path(csv_path).replace_extension(".planted.json") : fs::path(planted_path);
  write_text(planted_file, planted.dump(1) + "\n");
  out << "wrote " << data.table.rows.size() << " rows x " << data.table.header.size() << " features to "
      << csv_path.string() << "\n";
  return kExitOk;
}

int cmd_sample_trial(const RunConfig& cfg, const fs::path& input, const fs::path& dir, int trial_index,
                     std::ostream& out) {
  const FeatureTable table = load_feature_csv(input);
  const TrialSplit split = sample_trial(table, cfg.trial, trial_index);
  save_trial(split, dir);
  out << "trial " << trial_index << ": train=" << split.train.rows.size() << " test=" << split.test.rows.size();
  for (const auto& [label, c] : split.counts) out << " " << label << "=" << c.train << "/" << c.test;
  out << "\n";
  return kExitOk;
}

}  // namespace

RunConfig run_config_from_json(const json& doc) {
  reject_unknown(doc,
                 {"seed", "threads", "normalize", "output_dir", "metric", "threshold", "vote_threshold", "build",
                  "augmentation", "trial", "synth"},
                 "config");
  RunConfig c;
  if (doc.contains("build")) c.build = build_config_from_json(doc.at("build"));
  if (doc.contains("augmentation")) c.augmentation = augmentation_from_json(doc.at("augmentation"), c.augmentation);
  if (doc.contains("trial")) c.trial = trial_from_json(doc.at("trial"), c.trial);
  if (doc.contains("synth")) c.synth = synth_from_json(doc.at("synth"), c.synth);
  read_opt(doc, "normalize", c.normalize, "config");
  read_opt(doc, "output_dir", c.output_dir, "config");
  read_opt(doc, "threshold", c.threshold, "config");
  read_opt(doc, "vote_threshold", c.vote_threshold, "config");
  if (doc.contains("metric")) {
    std::string name;
    read_opt(doc, "metric", name, "config");
    try {
      c.metric = parse_metric(name);
    } catch (const Error& e) {
      throw ConfigError(std::string("config.metric: ") + e.what());
    }
  }
  if (doc.contains("seed")) {
    std::uint64_t seed = 0;
    read_opt(doc, "seed", seed, "config");
    c.set_seed(seed);
  }
  if (doc.contains("threads")) {
    int threads = 1;
    read_opt(doc, "threads", threads, "config");
    c.set_threads(threads);
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(doc);
}

json to_json(const RunConfig& c) {
  return {{"threads", c.threads},
          {"normalize", c.normalize},
          {"output_dir", c.output_dir},
          {"metric", metric_name(c.metric)},
          {"threshold", c.threshold},
          {"vote_threshold", c.vote_threshold},
          {"build", sigarch::to_json(c.build)},
          {"augmentation",
           {{"p", c.augmentation.p},
            {"epsilon_norm", c.augmentation.epsilon_norm},
            {"n_bootstrap", c.augmentation.n_bootstrap},
            {"seed", c.augmentation.seed}}},
          {"trial", to_json(c.trial)},
          {"synth", to_json(c.synth)}};
}

std::string render_curve_svg(const RiskCoverageCurve& curve, const std::string& title) {
  constexpr double kWidth = 480, kHeight = 360, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
  constexpr double kPlotW = kWidth - kLeft - kRight, kPlotH = kHeight - kTop - kBottom;
  const auto px = [&](double coverage) { return fmt(kLeft + coverage * kPlotW, 2); };
  const auto py = [&](double risk) { return fmt(kTop + (1.0 - std::clamp(risk, 0.0, 1.0)) * kPlotH, 2); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    s << "<line x1=\"" << px(v) << "\" y1=\"" << py(0) << "\" x2=\"" << px(v) << "\" y2=\"" << py(1)
      << "\" stroke=\"#ddd\"/>\n";
    s << "<line x1=\"" << px(0) << "\" y1=\"" << py(v) << "\" x2=\"" << px(1) << "\" y2=\"" << py(v)
      << "\" stroke=\"#ddd\"/>\n";
    s << "<text x=\"" << px(v) << "\" y=\"" << fmt(kHeight - kBottom + 16, 2) << "\" text-anchor=\"middle\">"
      << fmt(v, 2) << "</text>\n";
    s << "<text x=\"" << fmt(kLeft - 6, 2) << "\" y=\"" << py(v) << "\" text-anchor=\"end\" dy=\"4\">" << fmt(v, 2)
      << "</text>\n";
  }
  s << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kPlotW << "\" height=\"" << kPlotH
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  s << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    s << (i ? " " : "") << px(curve.points[i].coverage) << "," << py(curve.points[i].risk);
  }
  s << "\"/>\n";
  s << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">coverage</text>\n";
  s << "<text x=\"16\" y=\"" << kTop + kPlotH / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << kTop + kPlotH / 2 << ")\">risk</text>\n";
  s << "<text x=\"" << fmt(kLeft + kPlotW - 8, 2) << "\" y=\"" << kTop + 18 << "\" text-anchor=\"end\">AURC "
    << fmt(curve.aurc, 4) << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Signature-archive classifier with abstention", "sigarch"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  g.seed_opt = app.add_option("--seed", g.seed, "Base seed for every randomized step");
  g.threads_opt = app.add_option("--threads", g.threads, "Worker thread cap")->check(CLI::PositiveNumber);
  app.add_flag("--verbose,-v", g.verbose, "Progress on stderr");

  std::string archive, input, output, truth, svg, out_dir, metric;
  std::vector<std::string> novel;
  double threshold = 0.0, vote_threshold = 0.5;
  bool detail = false;
  int n_points = 512, trial_index = 0;

  auto* build = app.add_subcommand("build", "Build a signature archive from a labeled CSV");
  build->add_option("--train", input, "Training CSV")->required();
  build->add_option("--archive", archive, "Output archive JSON")->required();
  build->add_option("--out-dir", out_dir, "Directory for trace and rank reports");

  auto* classify_cmd = app.add_subcommand("classify", "Classify a CSV against an archive");
  classify_cmd->add_option("--archive", archive, "Archive JSON")->required();
  classify_cmd->add_option("--input", input, "CSV to classify")->required();
  classify_cmd->add_option("--out", output, "Predictions JSONL")->required();
  auto* metric_opt_c = classify_cmd->add_option("--metric", metric, "projection | ensemble | augmentation");
  auto* threshold_opt = classify_cmd->add_option("--threshold", threshold, "Reject when confidence <= threshold");
  auto* vote_opt_c = classify_cmd->add_option("--vote-threshold", vote_threshold, "Similarity needed for a vote");
  classify_cmd->add_flag("--detail", detail, "Include per-signature scores");

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against ground truth");
  evaluate->add_option("--predictions", input, "Predictions JSONL")->required();
  evaluate->add_option("--truth", truth, "CSV with sample_id,label")->required();
  evaluate->add_option("--novel", novel, "Truth labels to treat as novel");
  evaluate->add_option("--out", output, "EvalReport JSON");

  auto* rc = app.add_subcommand("rc-curve", "Risk-coverage curve and AURC");
  rc->add_option("--archive", archive, "Archive JSON")->required();
  rc->add_option("--input", input, "Labeled CSV to score")->required();
  rc->add_option("--truth", truth, "CSV with sample_id,label (default: labels of --input)");
  rc->add_option("--novel", novel, "Truth labels to treat as novel");
  rc->add_option("--out-csv", output, "Curve CSV")->required();
  rc->add_option("--out-svg", svg, "Curve SVG");
  rc->add_option("--points", n_points, "Maximum number of thresholds")->check(CLI::Range(2, 1 << 20));
  auto* metric_opt_r = rc->add_option("--metric", metric, "projection | ensemble | augmentation");
  auto* vote_opt_r = rc->add_option("--vote-threshold", vote_threshold, "Similarity needed for a vote");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
  synth->add_option("--out", output, "Output CSV")->required();
  synth->add_option("--planted", truth, "Planted-signature JSON (default: <out>.planted.json)");

  auto* trial = app.add_subcommand("sample-trial", "Draw one train/test split");
  trial->add_option("--input", input, "Labeled CSV")->required();
  trial->add_option("--out-dir", out_dir, "Directory for train/test/truth files")->required();
  trial->add_option("--trial", trial_index, "Trial index")->check(CLI::NonNegativeNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: UsageError: " << one_line(e.what()) << "\n";
    return kExitConfig;
  }

  RunConfig cfg;
  try {
    if (!g.config_path.empty()) cfg = load_run_config(g.config_path);
    if (*g.seed_opt) cfg.set_seed(g.seed);
    if (*g.threads_opt) cfg.set_threads(g.threads);
    if ((*metric_opt_c || *metric_opt_r) && !metric.empty()) cfg.metric = parse_metric(metric);
    if (*threshold_opt) cfg.threshold = threshold;
    if (*vote_opt_c || *vote_opt_r) cfg.vote_threshold = vote_threshold;
    if (!out_dir.empty() && build->parsed()) cfg.output_dir = out_dir;
    cfg.validate();
    if (trial->parsed()) cfg.trial.validate();
  } catch (const std::exception& e) {
    report_error(err, e);
    return kExitConfig;
  }

  const Logger log(err, g.verbose);
  try {
    if (build->parsed()) return cmd_build(cfg, input, archive, out, log);
    if (classify_cmd->parsed()) return cmd_classify(cfg, archive, input, output, detail, out, log);
    if (evaluate->parsed()) return cmd_evaluate(input, truth, novel, output, out);
    if (rc->parsed()) return cmd_rc_curve(cfg, archive, input, truth, novel, output, svg, n_points, out, log);
    if (synth->parsed()) return cmd_synth(cfg, output, truth, out);
    if (trial->parsed()) return cmd_sample_trial(cfg, input, out_dir, trial_index, out);
  } catch (const ConfigError& e) {
    report_error(err, e);
    return kExitConfig;
  } catch (const std::exception& e) {
    report_error(err, e);
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace sigarch::cli
