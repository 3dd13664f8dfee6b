#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sigarch/archive.hpp"
#include "sigarch/data_io.hpp"
#include "sigarch/eval.hpp"
#include "sigarch/inference.hpp"

namespace sigarch::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Everything a command may need. Precedence, lowest first: built-in
/// defaults, the config document, command-line flags.
struct RunConfig {
  BuildConfig build;
  AugmentationConfig augmentation;
  TrialConfig trial;
  SyntheticSpec synth = default_synth();
  Metric metric = Metric::ensemble_voting;
  double threshold = 0.0;
  double vote_threshold = 0.5;
  /// Fit z-score normalization on the training table and store it in the archive.
  bool normalize = true;
  /// Where build writes its trace and rank reports; empty = next to the archive.
  std::string output_dir;
  int threads = 1;

  /// Overwrites every module seed.
  void set_seed(std::uint64_t seed);
  void set_threads(int n);
  /// Throws the owning module's error for the first invalid field.
  void validate() const;

  static SyntheticSpec default_synth();
};

/// Strict: unknown keys at any level throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

/// Self-contained SVG line plot of a risk-coverage curve.
std::string render_curve_svg(const RiskCoverageCurve& curve, const std::string& title);

/// Runs one command line (without the program name). Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sigarch::cli
