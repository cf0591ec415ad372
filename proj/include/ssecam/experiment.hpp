#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssecam/config.hpp"
#include "ssecam/curves.hpp"
#include "ssecam/gradcheck.hpp"
#include "ssecam/training.hpp"

namespace ssecam {

/// A generated dataset root: <root>/train and <root>/eval.
struct DataSplits {
  std::vector<SceneSample> train;
  std::vector<SceneSample> eval;
};

/// Generates both splits under `root`.
void generate_splits(const SceneConfig& config, const std::filesystem::path& root, bool force);
DataSplits load_splits(const std::filesystem::path& root);

/// Trains one model and writes config.json, loss.csv and checkpoint/ under
/// `out_dir`. On a numeric abort the partial loss.csv and numeric_abort.json
/// are written before the NumericAbort is rethrown.
TrainResult run_train(const ExperimentConfig& config, std::uint64_t seed,
                      const std::vector<SceneSample>& train_set, const std::filesystem::path& out_dir,
                      const std::string& name);

struct EvalRequest {
  std::vector<double> scales{0.5, 1.0, 1.5};
  bool flip = true;
  BackgroundConfig background;
  bool filter_labels = true;
  int threads = 1;
  std::vector<double> gap_scales{0.5, 1.5};
  bool write_labels = true;
};

struct EvalResult {
  std::vector<CurveRow> rows;  // per-scale rows, then MS
  std::vector<GapRow> gaps;
};

/// Pseudo labels and metrics on the train split, equivariance gaps on the
/// eval split. Writes labels/*.pgm, metrics.csv, curves.csv, curves.svg and
/// gap.csv. The MS row is written to metrics.csv only for more than one
/// scale. Throws ArtifactMismatch if checkpoint and data disagree.
EvalResult run_eval(const Checkpoint& checkpoint, const DataSplits& data, const EvalRequest& request,
                    const std::filesystem::path& out_dir);

struct SweepSpec {
  std::string axis;                   // branch_rate | rescale_range | alpha | eta
  std::vector<nlohmann::json> values;
  std::vector<std::uint64_t> seeds;   // empty: the config's seeds

  /// Strict parse; ConfigError on unknown keys, unknown axis or no values.
  static SweepSpec from_json(const nlohmann::json& doc);
};

struct SweepCell {
  std::size_t value_index = 0;
  std::string value_label;  // compact JSON of the value
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<CurveRow> rows;
};

/// Trains and evaluates every (value, seed) cell in spec order. A failing
/// cell is recorded with its error and the sweep continues. Writes
/// sweep.csv (long format) and sweep.svg (MS mIoU per seed plus median).
std::vector<SweepCell> run_sweep(const SweepSpec& spec, const nlohmann::json& base_config,
                                 const DataSplits& data, const std::filesystem::path& out_dir);

/// Long-format table: axis,value,seed,scale,metric,score,status.
std::string sweep_csv(const SweepSpec& spec, const std::vector<SweepCell>& cells);

struct GradcheckReport {
  std::vector<GradCheckResult> finite_difference;
  std::vector<GradCheckResult> adjoint;
  bool passed() const;
};

/// 64-bit finite-difference checks of every differentiable op, the backbone
/// and the composed two-branch loss, plus dot-product tests of the resize
/// and flip operators over randomly drawn shape pairs. `inject_broken` adds a
/// case whose backward rule is deliberately wrong.
GradcheckReport run_gradcheck_suite(bool inject_broken = false);

/// One line per check: name, worst error, tolerance, PASS/FAIL.
std::string format_gradcheck_report(const GradcheckReport& report);

}  // namespace ssecam
