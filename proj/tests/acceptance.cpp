// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Usage: acceptance [--work DIR] [--threads N]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "metrics_oracle.hpp"
#include "ssecam/experiment.hpp"
#include "ssecam/gradcheck.hpp"
#include "ssecam/ops.hpp"
#include "ssecam/parallel.hpp"
#include "ssecam/report.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace ssecam;

namespace {

constexpr double kOpTolerance = 1e-5;
constexpr double kComposedTolerance = 1e-4;
constexpr double kGradcheckSeconds = 120.0;
constexpr double kAdjointTolerance = 1e-10;
constexpr int kAdjointShapePairs = 24;
constexpr int kMetricTrials = 1000;
constexpr double kMiouMargin = 0.01;        // one mIoU point
constexpr double kGapRatio = 0.8;
constexpr double kMsSlack = 0.005;          // half a point
constexpr double kFloatUlp = 1.1920928955078125e-07;
constexpr double kMinClassFrequency = 0.10;
const std::vector<std::uint64_t> kSeeds{0, 1, 2};
const std::vector<double> kTestScales{0.5, 1.0, 1.5};
const std::vector<double> kGapScales{0.5, 1.5};

struct Outcome {
  int id;
  bool pass;
  std::string detail;
};

std::vector<Outcome> outcomes;

void report(int id, bool pass, const std::string& detail) {
  outcomes.push_back({id, pass, detail});
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Runs a check body, turning an exception into a FAIL line.
void guarded(int id, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what());
  }
}

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const GradcheckReport r = run_gradcheck_suite();
  const double elapsed = seconds_since(t0);
  double worst_op = 0.0, composed = -1.0;
  bool ok = true;
  for (const GradCheckResult& c : r.finite_difference) {
    const bool is_composed = c.name.find("two_branch") != std::string::npos;
    const double tol = is_composed ? kComposedTolerance : kOpTolerance;
    ok = ok && c.max_rel_error < tol;
    if (is_composed) composed = c.max_rel_error;
    else worst_op = std::max(worst_op, c.max_rel_error);
  }
  ok = ok && composed >= 0.0 && elapsed < kGradcheckSeconds;
  report(1, ok,
         std::to_string(r.finite_difference.size()) + " cases, worst op " + fmt("%.2e", worst_op) +
             ", composed " + fmt("%.2e", composed) + ", " + fmt("%.1f s", elapsed));
}

void criterion_adjoint() {
  std::mt19937_64 rng(0xA11);
  std::uniform_int_distribution<int> side(1, 24);
  double worst = 0.0;
  for (int k = 0; k < kAdjointShapePairs; ++k) {
    const Shape in{1 + k % 2, 1 + k % 3, side(rng), side(rng)};
    const Shape out{in.n, in.c, side(rng), side(rng)};
    const LinearOp op = [out](const Tensor<double>& x, Tape<double>* t) {
      return ops::bilinear_resize(x, out.h, out.w, t);
    };
    worst = std::max(worst, adjoint_defect(op, in, out, 3, 100 + k));
  }
  report(2, worst < kAdjointTolerance,
         std::to_string(kAdjointShapePairs) + " shape pairs, worst defect " + fmt("%.2e", worst));
}

void criterion_metrics() {
  std::mt19937_64 rng(0xE7A1);
  int mismatches = 0;
  for (int t = 0; t < kMetricTrials; ++t) {
    auto [pred, gt] = test::random_mask_pair(rng, 8, 8, 4);
    ConfusionCounts c(4);
    accumulate_confusion(pred, gt, c);
    const MetricsReport r = make_report(c);
    const test::OracleMetrics o = test::brute_force_metrics(pred, gt, 4);
    if (!test::same_value(r.miou, o.miou) || !test::same_value(r.m_fn, o.m_fn) ||
        !test::same_value(r.m_fp, o.m_fp)) {
      ++mismatches;
    }
  }
  report(3, mismatches == 0,
         std::to_string(kMetricTrials) + " random 8x8 pairs, " + std::to_string(mismatches) +
             " mismatches");
}

void criterion_ser_null(const std::vector<SceneSample>& samples) {
  std::mt19937_64 rng(0x5E4);
  bool zero = true;
  for (auto [h, w, sh, sw] : {std::array{16, 16, 5, 5}, {16, 16, 8, 8}, {24, 20, 6, 5}}) {
    const Tensor<float> large = cast<float>(random_tensor(Shape{2, 5, h, w}, rng));
    const Tensor<float> small = ops::bilinear_resize(large, sh, sw);
    zero = zero && ser_loss<float>(large, small, nullptr).item() == 0.0f;
  }

  const int n = 4, crop = 64;
  Tensor<float> images(Shape{n, 3, crop, crop});
  Tensor<float> labels(Shape{n, 5, 1, 1});
  const std::size_t plane = static_cast<std::size_t>(3) * crop * crop;
  for (int i = 0; i < n; ++i) {
    const Tensor<float> r = ops::bilinear_resize(samples[i].image, crop, crop);
    std::copy(r.data(), r.data() + plane, images.data() + i * plane);
    for (int k = 0; k < 5; ++k) labels(i, k, 0, 0) = samples[i].label[k];
  }
  TrainConfig c;
  c.eta = 0.0;
  const auto params = init_params<float>(BackboneConfig{}, 0);
  const StepOutput<float> out = two_branch_step<float>(params, images, labels, c, nullptr);
  const double mean_cls = 0.5 * (static_cast<double>(out.cls_large.item()) + out.cls_small.item());
  const double diff = std::abs(out.total.item() - mean_cls);
  const bool reduces = diff <= 2.0 * kFloatUlp * mean_cls;
  report(4, zero && reduces,
         std::string("warped pairs give ser ") + (zero ? "0" : "non-zero") +
             "; eta=0 total vs mean cls differ by " + fmt("%.2e", diff) +
             (out.ser.item() > 0.0f ? " (ser " + fmt("%.3g", out.ser.item()) + " ignored)" : ""));
}

struct Variant {
  std::string name;
  double eta;
  std::map<std::uint64_t, EvalResult> results;
};

const CurveRow& row(const EvalResult& r, const std::string& label) {
  for (const CurveRow& c : r.rows) {
    if (c.scale_label == label) return c;
  }
  throw std::runtime_error("missing row " + label);
}

double mean_gap(const EvalResult& r) {
  double s = 0.0;
  for (const GapRow& g : r.gaps) s += g.mean_gap;
  return s / static_cast<double>(r.gaps.size());
}

EvalRequest eval_request(int threads) {
  EvalRequest req;
  req.scales = kTestScales;
  req.flip = true;
  req.gap_scales = kGapScales;
  req.threads = threads;
  return req;
}

EvalResult train_and_eval(const ExperimentConfig& cfg, std::uint64_t seed, const DataSplits& data,
                          const fs::path& dir, const std::string& name) {
  run_train(cfg, seed, data.train, dir, name);
  const Checkpoint ck = load_checkpoint(dir / "checkpoint");
  return run_eval(ck, data, eval_request(cfg.threads), dir / "eval");
}

void comparative_criteria(const DataSplits& data, const fs::path& work, int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  Variant baseline{"baseline", 0.0, {}};
  Variant ssenet{"ssenet(0.3)", 1.0, {}};
  for (Variant* v : {&baseline, &ssenet}) {
    for (std::uint64_t seed : kSeeds) {
      ExperimentConfig cfg;
      cfg.train.eta = v->eta;
      cfg.threads = threads;
      cfg.train.threads = threads;
      const fs::path dir = work / "runs" / (v->name + "_seed" + std::to_string(seed));
      v->results[seed] = train_and_eval(cfg, seed, data, dir, v->name);
      const EvalResult& r = v->results[seed];
      std::printf("  %-12s seed %llu: MS mIoU %.4f  m_fp@0.5 %.4f  gap %.4f\n", v->name.c_str(),
                  static_cast<unsigned long long>(seed), row(r, "MS").metrics.miou,
                  row(r, "0.5").metrics.m_fp, mean_gap(r));
      std::fflush(stdout);
    }
  }
  const double elapsed = seconds_since(t0);

  auto collect = [](const Variant& v, const std::function<double(const EvalResult&)>& f) {
    std::vector<double> out;
    for (const auto& [seed, r] : v.results) out.push_back(f(r));
    return out;
  };
  auto ms_miou = [](const EvalResult& r) { return row(r, "MS").metrics.miou; };
  auto fp_half = [](const EvalResult& r) { return row(r, "0.5").metrics.m_fp; };

  const double base_miou = median(collect(baseline, ms_miou));
  const double sse_miou = median(collect(ssenet, ms_miou));
  report(5, sse_miou >= base_miou + kMiouMargin,
         "median MS mIoU ssenet " + fmt("%.4f", sse_miou) + " vs baseline " +
             fmt("%.4f", base_miou) + " (need +" + fmt("%.2f", kMiouMargin) + "), " +
             fmt("%.0f s", elapsed) + " for 6 runs");

  double base_gap = 0.0, sse_gap = 0.0;
  for (std::uint64_t s : kSeeds) {
    base_gap += mean_gap(baseline.results[s]);
    sse_gap += mean_gap(ssenet.results[s]);
  }
  base_gap /= kSeeds.size();
  sse_gap /= kSeeds.size();
  report(6, sse_gap <= kGapRatio * base_gap,
         "mean gap at {0.5,1.5} ssenet " + fmt("%.4f", sse_gap) + " vs baseline " +
             fmt("%.4f", base_gap) + " (ratio " + fmt("%.3f", sse_gap / base_gap) + ")");

  const double base_fp = median(collect(baseline, fp_half));
  const double sse_fp = median(collect(ssenet, fp_half));
  report(7, sse_fp < base_fp,
         "median m_fp at scale 0.5 ssenet " + fmt("%.4f", sse_fp) + " vs baseline " +
             fmt("%.4f", base_fp));

  double best_single = -1.0;
  for (double s : kTestScales) {
    const std::string label = scale_label(s);
    best_single = std::max(best_single, median(collect(ssenet, [&](const EvalResult& r) {
                                           return row(r, label).metrics.miou;
                                         })));
  }
  bool emitted = true;
  for (std::uint64_t s : kSeeds) {
    const fs::path ev = work / "runs" / ("ssenet(0.3)_seed" + std::to_string(s)) / "eval";
    emitted = emitted && fs::file_size(ev / "curves.csv") > 0 && fs::file_size(ev / "curves.svg") > 0;
    const auto rows = parse_csv(test::slurp(ev / "curves.csv"));
    emitted = emitted && rows.size() == 1 + kTestScales.size() + 1;
  }
  report(8, sse_miou >= best_single - kMsSlack && emitted,
         "ssenet median MS mIoU " + fmt("%.4f", sse_miou) + " vs best single scale " +
             fmt("%.4f", best_single) + "; curve CSV/SVG " + (emitted ? "emitted" : "missing"));

  // Observations that are not criteria.
  const EvalResult& b0 = baseline.results[kSeeds.front()];
  std::printf("  note: baseline seed %llu per-scale m_fp %.3f %.3f %.3f, m_fn %.3f %.3f %.3f\n",
              static_cast<unsigned long long>(kSeeds.front()), row(b0, "0.5").metrics.m_fp,
              row(b0, "1").metrics.m_fp, row(b0, "1.5").metrics.m_fp, row(b0, "0.5").metrics.m_fn,
              row(b0, "1").metrics.m_fn, row(b0, "1.5").metrics.m_fn);
  std::printf("  note: trained baseline gap %.4f (%s zero)\n", base_gap,
              base_gap > 0.0 ? "above" : "not above");
}

void criterion_determinism(const DataSplits& data, const fs::path& work, int threads) {
  ExperimentConfig cfg;
  cfg.threads = threads;
  cfg.train.threads = threads;
  const fs::path a = work / "runs" / "ssenet(0.3)_seed0";
  const fs::path b = work / "determinism";
  fs::remove_all(b);
  train_and_eval(cfg, 0, data, b, "ssenet(0.3)");
  bool same = true;
  std::string which;
  for (const char* f : {"loss.csv", "eval/metrics.csv", "eval/curves.csv", "eval/curves.svg",
                        "eval/gap.csv", "checkpoint/params.bin"}) {
    const bool eq = test::slurp(a / f) == test::slurp(b / f);
    if (!eq) which += std::string(" ") + f;
    same = same && eq;
  }

  const Checkpoint ck = load_checkpoint(b / "checkpoint");
  save_checkpoint(ck.params, ck.meta, work / "resaved");
  const Checkpoint again = load_checkpoint(work / "resaved");
  bool stable = test::slurp(b / "checkpoint" / "params.bin") ==
                test::slurp(work / "resaved" / "params.bin");
  for (int i = 0; i < 3; ++i) {
    const Tensor<float> x = forward_cam(ck.params, data.eval[i].image);
    const Tensor<float> y = forward_cam(again.params, data.eval[i].image);
    for (std::size_t k = 0; k < x.numel(); ++k) stable = stable && x[k] == y[k];
  }
  report(9, same && stable,
         std::string("rerun artifacts ") + (same ? "byte-identical" : "differ:" + which) +
             "; checkpoint round trip " + (stable ? "bitwise-stable" : "unstable"));
}

void criterion_dataset(const fs::path& work, const DataSplits& data) {
  const SceneConfig scene;
  generate_splits(scene, work / "data_again", true);
  const bool identical = test::tree_digest(work / "data") == test::tree_digest(work / "data_again");
  int inconsistent = 0;
  for (const auto* split : {&data.train, &data.eval}) {
    for (const SceneSample& s : *split) {
      if (s.label != labels_from_mask(s.mask, num_fg_classes())) ++inconsistent;
    }
  }
  const std::vector<double> freq = class_frequencies(data.train);
  const double lowest = *std::min_element(freq.begin(), freq.end());
  report(10, identical && inconsistent == 0 && lowest >= kMinClassFrequency,
         std::string("regeneration ") + (identical ? "byte-identical" : "differs") + ", " +
             std::to_string(inconsistent) + " label/mask mismatches, rarest class in " +
             fmt("%.1f%%", 100.0 * lowest) + " of train images");
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "ssecam_acceptance";
  int threads = std::clamp(static_cast<int>(std::thread::hardware_concurrency()), 1, 4);
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--work") work = argv[i + 1];
    else if (flag == "--threads") threads = std::max(1, std::atoi(argv[i + 1]));
  }
  std::printf("acceptance: work dir %s, %d thread(s)\n", work.c_str(), threads);
  fs::remove_all(work);
  fs::create_directories(work);

  guarded(1, criterion_gradients);
  guarded(2, criterion_adjoint);
  guarded(3, criterion_metrics);

  DataSplits data;
  try {
    generate_splits(SceneConfig{}, work / "data", false);
    data = load_splits(work / "data");
  } catch (const std::exception& e) {
    std::printf("dataset generation failed: %s\n", e.what());
  }
  if (data.train.empty()) {
    for (int id = 4; id <= 10; ++id) report(id, false, "no dataset");
  } else {
    guarded(4, [&] { criterion_ser_null(data.train); });
    const std::size_t before = outcomes.size();
    try {
      comparative_criteria(data, work, threads);
    } catch (const std::exception& e) {
      for (int id = 5; id <= 8; ++id) {
        bool seen = false;
        for (std::size_t k = before; k < outcomes.size(); ++k) seen |= outcomes[k].id == id;
        if (!seen) report(id, false, std::string("exception: ") + e.what());
      }
    }
    guarded(9, [&] { criterion_determinism(data, work, threads); });
    guarded(10, [&] { criterion_dataset(work, data); });
  }

  int failed = 0;
  for (const Outcome& o : outcomes) failed += !o.pass;
  std::printf("acceptance: %d of %zu criteria passed\n", static_cast<int>(outcomes.size()) - failed,
              outcomes.size());
  return failed == 0 ? 0 : 1;
}
