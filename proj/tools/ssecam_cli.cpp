// Command-line front end: gen-data, train, eval, sweep, gradcheck, report.
//
// Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
// 3 IO error, 4 numeric abort, 5 artifact mismatch.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ssecam/config.hpp"
#include "ssecam/errors.hpp"
#include "ssecam/experiment.hpp"
#include "ssecam/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ssecam;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kIo = 3, kNumeric = 4, kMismatch = 5 };

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + " is not valid JSON: " + e.what());
  }
}

// Config document from an optional file plus --set overrides and global flags.
json config_document(const std::string& path, const std::vector<std::string>& sets,
                     const Globals& g) {
  json doc = path.empty() ? json::object() : read_json(path);
  for (const std::string& s : sets) apply_override(doc, s);
  if (g.seed) doc["seeds"] = json::array({*g.seed});
  if (g.threads) doc["threads"] = *g.threads;
  return doc;
}

std::string default_model_name(const ExperimentConfig& cfg) {
  if (cfg.train.eta == 0.0) return "baseline";
  return "ssenet(" + scale_label(cfg.train.branch_rate) + ")";
}

fs::path checkpoint_dir(const fs::path& p) {
  if (fs::exists(p / "manifest.json")) return p;
  if (fs::exists(p / "checkpoint" / "manifest.json")) return p / "checkpoint";
  return p;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_gen_data(const std::string& config, const std::vector<std::string>& sets,
                 const std::string& out, bool force, const Globals& g) {
  json doc = config_document(config, sets, {});
  if (g.seed) doc["scene"]["seed"] = *g.seed;
  const ExperimentConfig cfg = parse_experiment_config(doc);
  generate_splits(cfg.scene, out, force);
  std::printf("wrote %d train and %d eval samples to %s\n", cfg.scene.train_count,
              cfg.scene.eval_count, out.c_str());
  return kOk;
}

int cmd_train(const std::string& config, const std::vector<std::string>& sets,
              const std::string& data, const std::string& out, const std::string& name,
              const Globals& g) {
  const ExperimentConfig cfg = parse_experiment_config(config_document(config, sets, g));
  const DataSplits splits = load_splits(data);
  if (splits.train.front().image.shape().h < cfg.augment.crop) {
    throw ArtifactMismatch("dataset canvas is smaller than augment.crop");
  }
  const std::string model = name.empty() ? default_model_name(cfg) : name;
  const TrainResult r = run_train(cfg, cfg.seeds.front(), splits.train, out, model);
  const TrainRecord& last = r.trace.back();
  std::printf("trained %s (seed %llu): %d steps, final loss %.6f (cls %.6f/%.6f, ser %.6f)\n",
              model.c_str(), static_cast<unsigned long long>(cfg.seeds.front()),
              static_cast<int>(r.trace.size()), last.total, last.cls_large, last.cls_small, last.ser);
  return kOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, std::vector<double> scales,
             bool flip, const std::string& out, const std::string& config,
             const std::vector<std::string>& sets, const Globals& g) {
  const ExperimentConfig cfg = parse_experiment_config(config_document(config, sets, g));
  const Checkpoint ck = load_checkpoint(checkpoint_dir(checkpoint));
  const DataSplits splits = load_splits(data);
  EvalRequest req;
  req.scales = scales.empty() ? cfg.test_scales : scales;
  req.flip = flip;
  req.background = cfg.background;
  req.filter_labels = cfg.filter_labels;
  req.threads = cfg.threads;
  const EvalResult r = run_eval(ck, splits, req, out);
  std::fputs(slurp(fs::path(out) / "metrics.csv").c_str(), stdout);
  for (const GapRow& gap : r.gaps) {
    std::printf("equivariance gap @%s: %.6g (%d degenerate)\n", scale_label(gap.scale).c_str(),
                gap.mean_gap, gap.degenerate);
  }
  return kOk;
}

int cmd_sweep(const std::string& spec_path, const std::string& config,
              const std::vector<std::string>& sets, const std::string& data, const std::string& out,
              const Globals& g) {
  const SweepSpec spec = SweepSpec::from_json(read_json(spec_path));
  const json doc = config_document(config, sets, g);
  parse_experiment_config(doc);
  const DataSplits splits = load_splits(data);
  const std::vector<SweepCell> cells = run_sweep(spec, doc, splits, out);
  int failed = 0;
  for (const SweepCell& c : cells) {
    if (c.ok) {
      std::printf("%s=%s seed %llu: MS mIoU %.4f\n", spec.axis.c_str(), c.value_label.c_str(),
                  static_cast<unsigned long long>(c.seed), c.rows.back().metrics.miou);
    } else {
      ++failed;
      std::printf("%s=%s seed %llu: FAILED (%s)\n", spec.axis.c_str(), c.value_label.c_str(),
                  static_cast<unsigned long long>(c.seed), c.error.c_str());
    }
  }
  std::printf("%d cells, %d failed\n", static_cast<int>(cells.size()), failed);
  return kOk;
}

int cmd_gradcheck(bool inject_broken) {
  const GradcheckReport report = run_gradcheck_suite(inject_broken);
  std::fputs(format_gradcheck_report(report).c_str(), stdout);
  return report.passed() ? kOk : kFailure;
}

// Merges metrics.csv files from several eval runs into one table and one
// per-scale plot with a series per (model, seed).
int cmd_report(const std::vector<std::string>& evals, const std::string& out,
               const std::string& metric) {
  static const std::map<std::string, int> columns{{"miou", 3}, {"m_fn", 4}, {"m_fp", 5}};
  const auto col = columns.find(metric);
  if (col == columns.end()) throw ConfigError("--metric must be one of miou, m_fn, m_fp");

  std::string merged = "model,seed,scale,miou,m_fn,m_fp,skipped\n";
  std::vector<Series> series;
  for (const std::string& dir : evals) {
    const auto rows = parse_csv(slurp(fs::path(dir) / "metrics.csv"));
    if (rows.empty() || rows.front().size() != 7 || rows.front()[0] != "model") {
      throw IoError(dir + "/metrics.csv has an unexpected header");
    }
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.size() != 7) throw IoError(dir + "/metrics.csv: malformed row " + std::to_string(i));
      std::string line;
      for (std::size_t k = 0; k < r.size(); ++k) line += (k ? "," : "") + csv_escape(r[k]);
      merged += line + "\n";
      if (r[2] == "MS") continue;
      const std::string label = r[0] + " seed " + r[1];
      if (series.empty() || series.back().name != label) series.push_back(Series{label, {}});
      series.back().points.emplace_back(std::stod(r[2]), std::stod(r[col->second]));
    }
  }
  write_text_file(fs::path(out) / "metrics.csv", merged);
  emit_svg_plot(series, PlotAxes{metric + " per test scale", "test scale", metric, {}},
                fs::path(out) / ("per_scale_" + metric + ".svg"));
  std::printf("merged %d eval runs into %s\n", static_cast<int>(evals.size()), out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scale-equivariant CAM experiments on synthetic shape scenes"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  int threads = 1;
  auto* seed_opt = app.add_option("--seed", seed, "Override the seed list with a single seed");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string config, out, data, checkpoint, spec, name, metric = "miou";
  std::vector<std::string> sets, evals;
  std::vector<double> scales;
  bool force = false, flip = false, inject = false;

  auto* gen = app.add_subcommand("gen-data", "Generate the train and eval splits");
  gen->add_option("--config", config, "Experiment config (JSON)");
  gen->add_option("--out", out, "Output dataset root")->required();
  gen->add_flag("--force", force, "Overwrite a populated output directory");
  gen->add_option("--set", sets, "key=value config override (repeatable)");

  auto* train = app.add_subcommand("train", "Train one model");
  train->add_option("--config", config, "Experiment config (JSON)");
  train->add_option("--data", data, "Dataset root from gen-data")->required();
  train->add_option("--out", out, "Run directory")->required();
  train->add_option("--set", sets, "key=value config override (repeatable)");
  train->add_option("--name", name, "Model name recorded in the checkpoint");

  auto* eval = app.add_subcommand("eval", "Pseudo labels, metrics, curves and equivariance gaps");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint or run directory")->required();
  eval->add_option("--data", data, "Dataset root from gen-data")->required();
  eval->add_option("--scales", scales, "Comma-separated test scales")->delimiter(',');
  eval->add_flag("--flip", flip, "Add horizontally flipped inference");
  eval->add_option("--out", out, "Output directory")->required();
  eval->add_option("--config", config, "Experiment config (background and filtering)");
  eval->add_option("--set", sets, "key=value config override (repeatable)");

  auto* sweep = app.add_subcommand("sweep", "Train and evaluate over one config axis");
  sweep->add_option("--spec", spec, "Sweep spec (JSON)")->required();
  sweep->add_option("--config", config, "Base experiment config (JSON)");
  sweep->add_option("--set", sets, "key=value config override (repeatable)");
  sweep->add_option("--data", data, "Dataset root from gen-data")->required();
  sweep->add_option("--out", out, "Output directory")->required();

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference and adjoint self-checks");
  grad->add_flag("--inject-broken", inject, "Add a case with a deliberately wrong backward rule");

  auto* report = app.add_subcommand("report", "Merge eval metrics and plot per-scale curves");
  report->add_option("--eval", evals, "Eval output directories")->required();
  report->add_option("--out", out, "Output directory")->required();
  report->add_option("--metric", metric, "miou, m_fn or m_fp");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  if (*seed_opt) g.seed = seed;
  if (*threads_opt) g.threads = threads;

  try {
    if (*gen) return cmd_gen_data(config, sets, out, force, g);
    if (*train) return cmd_train(config, sets, data, out, name, g);
    if (*eval) return cmd_eval(checkpoint, data, scales, flip, out, config, sets, g);
    if (*sweep) return cmd_sweep(spec, config, sets, data, out, g);
    if (*grad) return cmd_gradcheck(inject);
    if (*report) return cmd_report(evals, out, metric);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const NumericAbort& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kNumeric;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const ArtifactMismatch& e) {
    std::cerr << "artifact mismatch: " << e.what() << '\n';
    return kMismatch;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
