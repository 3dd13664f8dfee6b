#include "sigarch/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "sigarch/errors.hpp"
#include "sigarch/random.hpp"

namespace sigarch {

namespace {

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no,
                                        const std::string& source) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) {
    throw ParseError(source + ":" + std::to_string(line_no) + ": unterminated quoted field");
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

double transform_value(const NormalizationParams& p, std::size_t f, double v) {
  const double z = p.stddev[f] > 0.0 ? (v - p.mean[f]) / p.stddev[f] : 0.0;
  const double clamped = std::clamp(z, -p.clamp_sigmas, p.clamp_sigmas);
  return std::clamp((clamped + p.post_shift[f]) * p.post_scale[f], 0.0, 1.0);
}

}  // namespace

void FeatureTable::validate() const {
  std::unordered_set<std::string> names;
  for (const auto& h : header) {
    if (!names.insert(h).second) throw ParseError("duplicate feature name '" + h + "'");
  }
  std::unordered_set<std::string> ids;
  for (const auto& row : rows) {
    if (!ids.insert(row.sample_id).second) throw ParseError("duplicate sample_id '" + row.sample_id + "'");
    if (row.values.size() != header.size()) {
      throw ParseError("row '" + row.sample_id + "' has " + std::to_string(row.values.size()) +
                       " features, header has " + std::to_string(header.size()));
    }
  }
}

FeatureTable parse_feature_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  FeatureTable table;
  bool have_header = false;
  std::unordered_set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line, line_no, source);
    if (!have_header) {
      if (fields.size() < 3 || fields[0] != "sample_id" || fields[1] != "label") {
        throw ParseError(source + ":" + std::to_string(line_no) +
                         ": header must start with sample_id,label and name at least one feature");
      }
      table.header.assign(fields.begin() + 2, fields.end());
      have_header = true;
      std::unordered_set<std::string> names;
      for (const auto& h : table.header) {
        if (!names.insert(h).second) throw ParseError(source + ": duplicate feature name '" + h + "'");
      }
      continue;
    }
    if (fields.size() != table.header.size() + 2) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(table.header.size() + 2) + " columns, found " +
                       std::to_string(fields.size()));
    }
    FeatureRow row;
    row.sample_id = fields[0];
    row.label = fields[1];
    if (row.sample_id.empty()) throw ParseError(source + ":" + std::to_string(line_no) + ": empty sample_id");
    if (!ids.insert(row.sample_id).second) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": duplicate sample_id '" + row.sample_id + "'");
    }
    row.values.reserve(table.header.size());
    for (std::size_t c = 2; c < fields.size(); ++c) {
      const std::string& cell = fields[c];
      double v = 0.0;
      const char* begin = cell.data();
      const char* end = cell.data() + cell.size();
      while (begin < end && *begin == ' ') ++begin;
      while (end > begin && end[-1] == ' ') --end;
      if (begin < end && *begin == '+') ++begin;
      const auto res = std::from_chars(begin, end, v);
      if (begin == end || res.ec != std::errc() || res.ptr != end || !std::isfinite(v)) {
        throw ParseError(source + ":" + std::to_string(line_no) + ": column " + std::to_string(c + 1) +
                         " ('" + table.header[c - 2] + "'): non-numeric value '" + cell + "'");
      }
      row.values.push_back(v);
    }
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw ParseError(source + ": missing header row");
  return table;
}

FeatureTable load_feature_csv(const std::filesystem::path& path) {
  return parse_feature_csv(read_file(path), path.string());
}

std::string format_feature_csv(const FeatureTable& table) {
  std::string out = "sample_id,label";
  for (const auto& h : table.header) out += "," + csv_field(h);
  out += "\n";
  for (const auto& row : table.rows) {
    out += csv_field(row.sample_id) + "," + csv_field(row.label);
    for (double v : row.values) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

void save_feature_csv(const FeatureTable& table, const std::filesystem::path& path) {
  write_file(path, format_feature_csv(table));
}

FeatureMatrix table_matrix(const FeatureTable& table) {
  table.validate();
  Matrix m(static_cast<Eigen::Index>(table.header.size()), static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t j = 0; j < table.rows.size(); ++j) {
    for (std::size_t i = 0; i < table.header.size(); ++i) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = table.rows[j].values[i];
    }
  }
  return FeatureMatrix(std::move(m));
}

NormalizedTable normalize(const FeatureTable& table) {
  if (table.rows.empty() || table.header.empty()) throw DegenerateInput("normalize: empty table");
  if (table.rows.size() < 2) throw DegenerateInput("normalize: need at least 2 rows");
  table.validate();
  const std::size_t n = table.header.size();
  const double count = static_cast<double>(table.rows.size());
  NormalizationParams p;
  p.mean.assign(n, 0.0);
  p.stddev.assign(n, 0.0);
  p.post_shift.assign(n, p.clamp_sigmas);
  p.post_scale.assign(n, 1.0 / (2.0 * p.clamp_sigmas));
  for (const auto& row : table.rows)
    for (std::size_t f = 0; f < n; ++f) p.mean[f] += row.values[f];
  for (auto& m : p.mean) m /= count;
  for (const auto& row : table.rows)
    for (std::size_t f = 0; f < n; ++f) {
      const double d = row.values[f] - p.mean[f];
      p.stddev[f] += d * d;
    }
  for (auto& s : p.stddev) s = std::sqrt(s / count);
  return {apply_normalization(p, table), std::move(p)};
}

Vector apply_normalization(const NormalizationParams& params, const std::vector<double>& row) {
  if (row.size() != params.feature_count()) {
    throw DimensionMismatch("apply_normalization: row has " + std::to_string(row.size()) +
                            " features, parameters expect " + std::to_string(params.feature_count()));
  }
  Vector out(static_cast<Eigen::Index>(row.size()));
  for (std::size_t f = 0; f < row.size(); ++f) {
    if (!std::isfinite(row[f])) throw InvalidParameter("apply_normalization: non-finite feature value");
    out(static_cast<Eigen::Index>(f)) = transform_value(params, f, row[f]);
  }
  return out;
}

FeatureMatrix apply_normalization(const NormalizationParams& params, const FeatureTable& table) {
  if (table.header.size() != params.feature_count()) {
    throw DimensionMismatch("feature count mismatch: table has " + std::to_string(table.header.size()) +
                            " features, archive expects " + std::to_string(params.feature_count()));
  }
  if (table.rows.empty()) throw DegenerateInput("apply_normalization: empty table");
  Matrix m(static_cast<Eigen::Index>(params.feature_count()), static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t j = 0; j < table.rows.size(); ++j) {
    m.col(static_cast<Eigen::Index>(j)) = apply_normalization(params, table.rows[j].values);
  }
  return FeatureMatrix(std::move(m));
}

void TrialConfig::validate() const {
  if (families.empty()) throw ConfigError("trial.families must not be empty");
  const std::set<std::string> fam(families.begin(), families.end());
  if (fam.size() != families.size()) throw ConfigError("trial.families has duplicates");
  if (!novel_family.empty() && fam.contains(novel_family)) {
    throw ConfigError("trial.novel_family '" + novel_family + "' is also listed as a known family");
  }
  for (const auto& r : rare_families) {
    if (r.label == novel_family) throw ConfigError("trial.novel_family cannot be rare");
    if (!fam.contains(r.label)) throw ConfigError("trial.rare_families: unknown family '" + r.label + "'");
    if (!(r.keep_fraction > 0.0 && r.keep_fraction <= 1.0)) {
      throw ConfigError("trial.rare_families['" + r.label + "'].keep_fraction must lie in (0, 1]");
    }
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("trial.test_fraction must lie in (0, 1)");
  if (n_trials < 1) throw ConfigError("trial.n_trials must be >= 1");
}

void GroundTruthSet::validate() const {
  if (sample_ids.size() != true_labels.size()) throw AlignmentError("truth: ids and labels differ in length");
  std::unordered_set<std::string> ids;
  for (const auto& id : sample_ids) {
    if (!ids.insert(id).second) throw AlignmentError("truth: duplicate sample id '" + id + "'");
  }
}

TrialSplit sample_trial(const FeatureTable& table, const TrialConfig& config, int trial_index) {
  config.validate();
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < table.rows.size(); ++i) by_label[table.rows[i].label].push_back(i);
  auto require = [&](const std::string& label) {
    if (!by_label.contains(label)) throw ConfigError("family '" + label + "' not present in table");
  };
  for (const auto& f : config.families) require(f);
  if (!config.novel_family.empty()) require(config.novel_family);

  TrialSplit split;
  split.seed = config.seed;
  split.trial_index = trial_index;
  split.train.header = table.header;
  split.test.header = table.header;

  std::vector<std::pair<std::size_t, bool>> test_rows;  // row, is_novel
  std::vector<std::size_t> train_rows;
  std::uint64_t family_index = 0;
  auto draw = [&](const std::string& label, double keep, bool novel) {
    Rng rng(derive_seed(config.seed, {static_cast<std::uint64_t>(trial_index), family_index++}));
    std::vector<std::size_t> rows = by_label.at(label);
    rng.shuffle(rows.begin(), rows.end());
    FamilyCounts& counts = split.counts[label];
    counts.available = rows.size();
    std::size_t kept = rows.size();
    if (keep < 1.0) kept = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(keep * static_cast<double>(rows.size()))));
    rows.resize(kept);
    counts.kept = kept;
    if (novel) {
      counts.test = kept;
      for (auto r : rows) test_rows.emplace_back(r, true);
      return;
    }
    const auto n_test = static_cast<std::size_t>(std::llround(config.test_fraction * static_cast<double>(kept)));
    counts.test = n_test;
    counts.train = kept - n_test;
    for (std::size_t i = 0; i < kept; ++i) {
      if (i < n_test) {
        test_rows.emplace_back(rows[i], false);
      } else {
        train_rows.push_back(rows[i]);
      }
    }
  };
  for (const auto& f : config.families) {
    double keep = 1.0;
    for (const auto& r : config.rare_families)
      if (r.label == f) keep = r.keep_fraction;
    draw(f, keep, false);
  }
  if (!config.novel_family.empty()) draw(config.novel_family, 1.0, true);

  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  for (auto r : train_rows) split.train.rows.push_back(table.rows[r]);
  for (const auto& [r, novel] : test_rows) {
    split.test.rows.push_back(table.rows[r]);
    split.truth.sample_ids.push_back(table.rows[r].sample_id);
    split.truth.true_labels.push_back(novel ? std::string(kNovelLabel) : table.rows[r].label);
  }
  return split;
}

void save_trial(const TrialSplit& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_feature_csv(split.train, dir / "train.csv");
  save_feature_csv(split.test, dir / "test.csv");
  std::string truth = "sample_id,label\n";
  for (std::size_t i = 0; i < split.truth.sample_ids.size(); ++i) {
    truth += csv_field(split.truth.sample_ids[i]) + "," + csv_field(split.truth.true_labels[i]) + "\n";
  }
  write_file(dir / "truth.csv", truth);
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [label, c] : split.counts) {
    counts[label] = {{"available", c.available}, {"kept", c.kept}, {"train", c.train}, {"test", c.test}};
  }
  const nlohmann::json manifest = {{"seed", split.seed},
                                   {"trial_index", split.trial_index},
                                   {"train_rows", split.train.rows.size()},
                                   {"test_rows", split.test.rows.size()},
                                   {"per_family", counts}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

GroundTruthSet load_truth_csv(const std::filesystem::path& path, const std::vector<std::string>& novel_labels) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  GroundTruthSet truth;
  const std::set<std::string> novel(novel_labels.begin(), novel_labels.end());
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line, line_no, path.string());
    if (header) {
      if (fields.size() < 2 || fields[0] != "sample_id" || fields[1] != "label") {
        throw ParseError(path.string() + ": truth header must start with sample_id,label");
      }
      header = false;
      continue;
    }
    if (fields.size() < 2) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": missing label column");
    truth.sample_ids.push_back(fields[0]);
    truth.true_labels.push_back(novel.contains(fields[1]) ? std::string(kNovelLabel) : fields[1]);
  }
  if (header) throw ParseError(path.string() + ": missing header row");
  truth.validate();
  return truth;
}

void SyntheticSpec::validate() const {
  if (n_features < 1) throw InvalidParameter("synth.n_features must be >= 1");
  if (families.empty()) throw InvalidParameter("synth.families must not be empty");
  std::set<std::string> labels;
  for (const auto& f : families) {
    if (f.label.empty()) throw InvalidParameter("synth: family label must not be empty");
    if (!labels.insert(f.label).second) throw InvalidParameter("synth: duplicate family '" + f.label + "'");
    if (f.n_signatures < 1 || f.n_samples < 1) {
      throw InvalidParameter("synth: family '" + f.label + "' needs n_signatures >= 1 and n_samples >= 1");
    }
  }
  if (!(noise >= 0.0 && noise <= 0.2)) throw InvalidParameter("synth.noise must lie in [0, 0.2]");
  if (novel && !labels.contains(*novel)) throw InvalidParameter("synth.novel must name a family");
  if (!(max_cosine > 0.0 && max_cosine < 1.0)) throw InvalidParameter("synth.max_cosine must lie in (0, 1)");
  if (!(family_coherence >= 0.0 && family_coherence < 1.0)) {
    throw InvalidParameter("synth.family_coherence must lie in [0, 1)");
  }
  if (!(weight_sharpness >= 1.0)) throw InvalidParameter("synth.weight_sharpness must be >= 1");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {0x5197}));
  const auto n = static_cast<Eigen::Index>(spec.n_features);
  int total = 0;
  for (const auto& f : spec.families) total += f.n_signatures;

  SyntheticData out;
  out.novel = spec.novel;
  out.signatures.resize(n, total);
  constexpr int kMaxAttempts = 2000;
  auto sparse_unit = [&] {
    Vector c(n);
    // Sparse support with a faint background keeps random directions apart.
    for (Eigen::Index i = 0; i < n; ++i) {
      c(i) = rng.uniform() < 0.3 ? rng.uniform(0.2, 1.0) : 0.02 * rng.uniform();
    }
    return Vector(c / c.norm());
  };
  std::vector<int> owner(static_cast<std::size_t>(total));
  int s = 0;
  for (std::size_t f = 0; f < spec.families.size(); ++f) {
    const Vector core = sparse_unit();
    for (int v = 0; v < spec.families[f].n_signatures; ++v, ++s) {
      bool placed = false;
      for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
        // Variants of one family share a core; other families must stay
        // below max_cosine from every one of them.
        Vector c = spec.family_coherence * core + (1.0 - spec.family_coherence) * sparse_unit();
        c /= c.norm();
        bool ok = true;
        for (int q = 0; q < s && ok; ++q) {
          if (owner[static_cast<std::size_t>(q)] != static_cast<int>(f)) ok = out.signatures.col(q).dot(c) <= spec.max_cosine;
        }
        if (ok) {
          out.signatures.col(s) = c;
          owner[static_cast<std::size_t>(s)] = static_cast<int>(f);
          placed = true;
        }
      }
      if (!placed) {
        throw SeparationUnreachable("could not draw " + std::to_string(total) + " signatures in " +
                                    std::to_string(n) + " features with between-family cosine <= " +
                                    std::to_string(spec.max_cosine));
      }
    }
  }

  out.table.header.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out.table.header.push_back("f" + std::to_string(i));
  int sig_offset = 0;
  for (const auto& fam : spec.families) {
    auto& idx = out.family_signatures[fam.label];
    for (int v = 0; v < fam.n_signatures; ++v) idx.push_back(sig_offset + v);
    for (int j = 0; j < fam.n_samples; ++j) {
      Vector weights(fam.n_signatures);
      for (int v = 0; v < fam.n_signatures; ++v) {
        const double e = rng.exponential();
        weights(v) = std::pow(e, spec.weight_sharpness);
      }
      weights /= weights.sum();
      const double scale = rng.uniform(0.5, 2.0);
      Vector x = scale * out.signatures.middleCols(sig_offset, fam.n_signatures) * weights;
      FeatureRow row;
      row.sample_id = fam.label + "_" + std::to_string(j);
      row.label = fam.label;
      row.values.resize(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) {
        row.values[static_cast<std::size_t>(i)] = x(i) * (1.0 + rng.uniform(-spec.noise, spec.noise));
      }
      out.table.rows.push_back(std::move(row));
    }
    sig_offset += fam.n_signatures;
  }
  return out;
}

}  // namespace sigarch
