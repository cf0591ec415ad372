#include "ssecam/experiment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "ssecam/errors.hpp"
#include "ssecam/image_io.hpp"
#include "ssecam/ops.hpp"
#include "ssecam/parallel.hpp"
#include "ssecam/report.hpp"

namespace ssecam {

using nlohmann::json;
namespace fs = std::filesystem;

void generate_splits(const SceneConfig& config, const fs::path& root, bool force) {
  generate_dataset(config, Split::kTrain, root / "train", force);
  generate_dataset(config, Split::kEval, root / "eval", force);
}

DataSplits load_splits(const fs::path& root) {
  DataSplits data;
  data.train = load_samples(load_index(root / "train"));
  if (fs::exists(root / "eval" / "index.json")) data.eval = load_samples(load_index(root / "eval"));
  return data;
}

TrainResult run_train(const ExperimentConfig& config, std::uint64_t seed,
                      const std::vector<SceneSample>& train_set, const fs::path& out_dir,
                      const std::string& name) {
  ExperimentConfig cfg = config;
  cfg.seeds = {seed};
  cfg.train.seed = seed;
  cfg.train.threads = cfg.threads;
  write_resolved_config(cfg, out_dir);

  std::vector<TrainRecord> trace;
  TrainResult result;
  try {
    result = train(train_set, cfg.backbone, cfg.train, cfg.augment,
                   [&](const TrainRecord& r) { trace.push_back(r); });
  } catch (const NumericAbort& e) {
    write_text_file(out_dir / "loss.csv", loss_csv(trace));
    const TrainRecord& r = e.record();
    const json diag = {{"message", e.what()},          {"iteration", r.iteration},
                       {"lr", r.lr},                   {"cls_large", format_number(r.cls_large)},
                       {"cls_small", format_number(r.cls_small)}, {"ser", format_number(r.ser)},
                       {"total", format_number(r.total)}};
    write_text_file(out_dir / "numeric_abort.json", diag.dump(2) + "\n");
    throw;
  }
  write_text_file(out_dir / "loss.csv", loss_csv(result.trace));
  save_checkpoint(result.params, CheckpointMeta{cfg.backbone, cfg.train, cfg.augment, name},
                  out_dir / "checkpoint");
  return result;
}

EvalResult run_eval(const Checkpoint& checkpoint, const DataSplits& data, const EvalRequest& request,
                    const fs::path& out_dir) {
  const BackboneConfig& bb = checkpoint.meta.backbone;
  if (bb.num_fg_classes != num_fg_classes() || bb.in_channels != 3) {
    throw ArtifactMismatch("checkpoint backbone (" + std::to_string(bb.num_fg_classes) +
                           " classes, " + std::to_string(bb.in_channels) +
                           " channels) does not fit the RGB scene catalog");
  }
  for (const SceneSample& s : data.train) {
    if (static_cast<int>(s.label.size()) != bb.num_fg_classes) {
      throw ArtifactMismatch("dataset labels do not match the checkpoint's class count");
    }
  }

  CurveOptions options;
  options.scales = request.scales;
  options.flip = request.flip;
  options.background = request.background;
  options.filter_labels = request.filter_labels;
  options.threads = request.threads;

  EvalResult result;
  std::vector<LabelMap> labels;
  result.rows = per_scale_curves(checkpoint.params, data.train, options, &labels);
  if (!data.eval.empty()) {
    result.gaps = mean_equivariance_gaps(checkpoint.params, data.eval, request.gap_scales,
                                         request.threads);
  }

  if (request.write_labels) {
    std::error_code ec;
    fs::create_directories(out_dir / "labels", ec);
    if (ec) throw IoError("cannot create " + (out_dir / "labels").string() + ": " + ec.message());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const LabelMap& m = labels[i];
      write_pgm(out_dir / "labels" / (data.train[i].id + ".pgm"),
                Raster8{m.width, m.height, 1, m.labels});
    }
  }

  std::vector<CurveRow> emitted = result.rows;
  if (request.scales.size() == 1) emitted.pop_back();
  std::vector<MetricsCsvRow> csv_rows;
  for (const CurveRow& r : emitted) {
    csv_rows.push_back(MetricsCsvRow{checkpoint.meta.name, checkpoint.meta.train.seed, r});
  }
  write_text_file(out_dir / "metrics.csv", metrics_csv(csv_rows));
  write_text_file(out_dir / "curves.csv", curves_csv(emitted));
  emit_svg_plot(curve_series(result.rows, checkpoint.meta.name),
                PlotAxes{"Pseudo-label quality per test scale", "test scale", "value", {}},
                out_dir / "curves.svg");
  write_text_file(out_dir / "gap.csv", gap_csv(result.gaps));
  return result;
}

SweepSpec SweepSpec::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("sweep spec must be a JSON object");
  for (const auto& item : doc.items()) {
    if (item.key() != "axis" && item.key() != "values" && item.key() != "seeds") {
      throw ConfigError("unknown key '" + item.key() + "' in sweep spec");
    }
  }
  SweepSpec spec;
  try {
    spec.axis = doc.at("axis").get<std::string>();
    for (const json& v : doc.at("values")) spec.values.push_back(v);
    if (doc.contains("seeds")) spec.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sweep spec: ") + e.what());
  }
  static const std::set<std::string> axes{"branch_rate", "rescale_range", "alpha", "eta"};
  if (!axes.count(spec.axis)) throw ConfigError("sweep axis '" + spec.axis + "' is not supported");
  if (spec.values.empty()) throw ConfigError("sweep spec needs at least one value");
  for (const json& v : spec.values) {
    const bool ok = spec.axis == "rescale_range" ? (v.is_array() && v.size() == 2) : v.is_number();
    if (!ok) throw ConfigError("sweep value " + v.dump() + " does not fit axis " + spec.axis);
  }
  return spec;
}

namespace {

double sweep_x(const SweepSpec& spec, std::size_t index) {
  const json& v = spec.values[index];
  return v.is_number() ? v.get<double>() : static_cast<double>(index);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string sweep_csv(const SweepSpec& spec, const std::vector<SweepCell>& cells) {
  std::string out = "axis,value,seed,scale,metric,score,status\n";
  for (const SweepCell& cell : cells) {
    const std::string prefix =
        spec.axis + "," + csv_escape(cell.value_label) + "," + std::to_string(cell.seed) + ",";
    if (!cell.ok) {
      out += prefix + ",,," + csv_escape("failed: " + cell.error) + "\n";
      continue;
    }
    for (const CurveRow& r : cell.rows) {
      const std::array<std::pair<const char*, double>, 3> metrics{
          {{"miou", r.metrics.miou}, {"m_fn", r.metrics.m_fn}, {"m_fp", r.metrics.m_fp}}};
      for (const auto& [name, value] : metrics) {
        out += prefix + r.scale_label + "," + name + "," + format_number(value) + ",ok\n";
      }
    }
  }
  return out;
}

std::vector<SweepCell> run_sweep(const SweepSpec& spec, const json& base_config,
                                 const DataSplits& data, const fs::path& out_dir) {
  const ExperimentConfig base = parse_experiment_config(base_config);
  const std::vector<std::uint64_t> seeds = spec.seeds.empty() ? base.seeds : spec.seeds;

  std::vector<SweepCell> cells;
  for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
    const std::string label = spec.values[vi].dump();
    for (std::uint64_t seed : seeds) {
      SweepCell cell{vi, label, seed, false, {}, {}};
      const fs::path dir = out_dir / "cells" / ("v" + std::to_string(vi) + "_seed" + std::to_string(seed));
      try {
        json doc = base_config;
        apply_override(doc, spec.axis + "=" + label);
        const ExperimentConfig cfg = parse_experiment_config(doc);
        const std::string name = spec.axis + "=" + label;
        TrainResult trained = run_train(cfg, seed, data.train, dir / "train", name);
        ExperimentConfig echoed = cfg;
        echoed.train.seed = seed;
        const Checkpoint ck{CheckpointMeta{cfg.backbone, echoed.train, cfg.augment, name},
                            trained.params};
        EvalRequest req;
        req.scales = cfg.test_scales;
        req.flip = cfg.flip;
        req.background = cfg.background;
        req.filter_labels = cfg.filter_labels;
        req.threads = cfg.threads;
        req.write_labels = false;
        cell.rows = run_eval(ck, data, req, dir / "eval").rows;
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      cells.push_back(std::move(cell));
    }
  }

  write_text_file(out_dir / "sweep.csv", sweep_csv(spec, cells));

  std::vector<Series> series;
  for (std::uint64_t seed : seeds) {
    Series s{"seed " + std::to_string(seed), {}};
    for (const SweepCell& c : cells) {
      if (c.seed == seed && c.ok) s.points.emplace_back(sweep_x(spec, c.value_index), c.rows.back().metrics.miou);
    }
    series.push_back(std::move(s));
  }
  Series med{"median", {}};
  for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
    std::vector<double> vals;
    for (const SweepCell& c : cells) {
      if (c.value_index == vi && c.ok) vals.push_back(c.rows.back().metrics.miou);
    }
    if (!vals.empty()) med.points.emplace_back(sweep_x(spec, vi), median(vals));
  }
  series.push_back(std::move(med));

  PlotAxes axes{"Multi-scale pseudo-label mIoU vs " + spec.axis, spec.axis, "mIoU", {}};
  if (spec.axis == "rescale_range") {
    for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
      axes.x_ticks.emplace_back(static_cast<double>(vi), spec.values[vi].dump());
    }
  }
  bool any_point = false;
  for (const Series& s : series) any_point = any_point || !s.points.empty();
  if (any_point) emit_svg_plot(series, axes, out_dir / "sweep.svg");
  return cells;
}

// ---------------------------------------------------------------------------
// Gradient check suite

bool GradcheckReport::passed() const {
  for (const GradCheckResult& r : finite_difference) {
    if (!r.passed) return false;
  }
  for (const GradCheckResult& r : adjoint) {
    if (!r.passed) return false;
  }
  return true;
}

namespace {

constexpr double kOpTolerance = 1e-5;
constexpr double kComposedTolerance = 1e-4;
constexpr double kAdjointTolerance = 1e-10;
constexpr double kReluMargin = 1e-3;

Tensor<double> as_leaf(Tensor<double> t) {
  t.set_requires_grad(true);
  return t;
}

// Smallest |pre-activation| feeding any ReLU of the backbone.
double relu_margin(const ModelParams<double>& params, const Tensor<double>& image) {
  double margin = std::numeric_limits<double>::infinity();
  const BackboneConfig& c = params.config;
  Tensor<double> x = ops::affine(image, 1.0 / c.input_std, -c.input_mean / c.input_std);
  for (const ConvLayer<double>& l : params.layers) {
    x = ops::conv2d(x, l.weight, l.bias, l.conv);
    if (!l.relu) continue;
    for (double v : std::as_const(x).values()) margin = std::min(margin, std::abs(v));
    x = ops::relu(x);
  }
  return margin;
}

BackboneConfig check_backbone() {
  BackboneConfig c;
  c.widths = {4, 4, 4, 4};
  c.stride2_layers = {1, 2};
  c.dilated_layers = {3};
  return c;
}

// Deliberately wrong: the backward rule halves the incoming gradient.
Tensor<double> broken_relu(const Tensor<double>& input, Tape<double>* tape) {
  Tensor<double> out(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) out[i] = std::max(input[i], 0.0);
  if (should_record(tape, {&input})) {
    tape->record("broken_relu", {input}, out, [input = Tensor<double>(input), out]() mutable {
      std::span<const double> gout = std::as_const(out).grad();
      std::span<double> gin = input.grad();
      for (std::size_t i = 0; i < gin.size(); ++i) {
        if (input[i] > 0.0) gin[i] += 0.5 * gout[i];
      }
    });
  }
  return out;
}

void add_conv_case(std::vector<GradCheckResult>& out, std::mt19937_64& rng, const std::string& name,
                   Shape in, int cout, int k, ops::Conv2dParams p) {
  Tensor<double> x = as_leaf(random_tensor(in, rng));
  Tensor<double> w = as_leaf(random_tensor(Shape{cout, in.c, k, k}, rng));
  Tensor<double> b = as_leaf(random_tensor(Shape{1, cout, 1, 1}, rng));
  const Shape os{in.n, cout, ops::conv_output_size(in.h, k, p), ops::conv_output_size(in.w, k, p)};
  const Tensor<double> r = random_tensor(os, rng);
  out.push_back(finite_difference_check(
      name, {x, w, b},
      [=](Tape<double>* t) { return ops::inner(ops::conv2d(x, w, b, p, t), r, t); }, kOpTolerance));
}

}  // namespace

GradcheckReport run_gradcheck_suite(bool inject_broken) {
  GradcheckReport report;
  auto& fd = report.finite_difference;
  std::mt19937_64 rng(20190811);

  add_conv_case(fd, rng, "conv2d 3x3 pad 1", Shape{2, 3, 6, 5}, 4, 3, {1, 1, 1});
  add_conv_case(fd, rng, "conv2d 3x3 stride 2", Shape{1, 2, 7, 8}, 3, 3, {2, 1, 1});
  add_conv_case(fd, rng, "conv2d 3x3 dilation 2", Shape{1, 2, 7, 7}, 3, 3, {1, 2, 2});
  add_conv_case(fd, rng, "conv2d 1x1", Shape{2, 4, 5, 5}, 3, 1, {1, 0, 1});

  {
    Tensor<double> x = as_leaf(random_tensor(Shape{2, 3, 4, 5}, rng));
    const Tensor<double> r = random_tensor(x.shape(), rng);
    fd.push_back(finite_difference_check(
        "affine", {x}, [=](Tape<double>* t) { return ops::inner(ops::affine(x, 4.0, -2.0, t), r, t); },
        kOpTolerance));
  }
  {
    Tensor<double> x = as_leaf(random_tensor_away_from_zero(Shape{2, 3, 5, 4}, rng, kReluMargin, 1.0));
    const Tensor<double> r = random_tensor(x.shape(), rng);
    fd.push_back(finite_difference_check(
        "relu", {x}, [=](Tape<double>* t) { return ops::inner(ops::relu(x, t), r, t); }, kOpTolerance));
    if (inject_broken) {
      fd.push_back(finite_difference_check(
          "broken_relu (injected fault)", {x},
          [=](Tape<double>* t) { return ops::inner(broken_relu(x, t), r, t); }, kOpTolerance));
    }
  }
  const std::array<std::array<int, 4>, 3> resizes{{{5, 7, 9, 12}, {9, 12, 4, 5}, {6, 6, 6, 6}}};
  for (const auto& [ih, iw, oh, ow] : resizes) {
    Tensor<double> x = as_leaf(random_tensor(Shape{2, 2, ih, iw}, rng));
    const Tensor<double> r = random_tensor(Shape{2, 2, oh, ow}, rng);
    const int h = oh, w = ow;
    fd.push_back(finite_difference_check(
        "bilinear_resize " + std::to_string(ih) + "x" + std::to_string(iw) + "->" +
            std::to_string(oh) + "x" + std::to_string(ow),
        {x}, [=](Tape<double>* t) { return ops::inner(ops::bilinear_resize(x, h, w, t), r, t); },
        kOpTolerance));
  }
  {
    Tensor<double> x = as_leaf(random_tensor(Shape{2, 3, 4, 5}, rng));
    const Tensor<double> r = random_tensor(x.shape(), rng);
    fd.push_back(finite_difference_check(
        "horizontal_flip", {x},
        [=](Tape<double>* t) { return ops::inner(ops::horizontal_flip(x, t), r, t); }, kOpTolerance));
  }
  {
    Tensor<double> x = as_leaf(random_tensor(Shape{2, 3, 4, 5}, rng));
    const Tensor<double> r = random_tensor(Shape{2, 3, 1, 1}, rng);
    fd.push_back(finite_difference_check(
        "global_avg_pool", {x},
        [=](Tape<double>* t) { return ops::inner(ops::global_avg_pool(x, t), r, t); }, kOpTolerance));
  }
  {
    Tensor<double> z = as_leaf(random_tensor(Shape{3, 5, 1, 1}, rng, -3.0, 3.0));
    Tensor<double> labels(z.shape());
    std::bernoulli_distribution coin(0.5);
    for (double& v : labels.values()) v = coin(rng) ? 1.0 : 0.0;
    fd.push_back(finite_difference_check(
        "multilabel_cls_loss", {z},
        [=](Tape<double>* t) { return ops::multilabel_cls_loss(z, labels, t); }, kOpTolerance));
  }
  {
    Tensor<double> a = as_leaf(random_tensor(Shape{2, 3, 4, 4}, rng));
    Tensor<double> b = as_leaf(random_tensor(Shape{2, 3, 4, 4}, rng));
    fd.push_back(finite_difference_check(
        "mean_squared_error", {a, b},
        [=](Tape<double>* t) { return ops::mean_squared_error(a, b, t); }, kOpTolerance));
    fd.push_back(finite_difference_check(
        "sum", {a}, [=](Tape<double>* t) { return ops::sum(a, t); },
        kOpTolerance));
    fd.push_back(finite_difference_check(
        "inner", {a, b}, [=](Tape<double>* t) { return ops::inner(a, b, t); }, kOpTolerance));
  }
  {
    std::vector<Tensor<double>> terms;
    for (int k = 0; k < 3; ++k) terms.push_back(as_leaf(random_tensor(Shape{1, 1, 1, 1}, rng)));
    const std::array<double, 3> weights{0.5, 0.5, 1.0};
    fd.push_back(finite_difference_check(
        "weighted_sum", terms,
        [=](Tape<double>* t) {
          return ops::weighted_sum<double>(terms, weights, t);
        },
        kOpTolerance));
  }

  // Backbone and composed loss at a draw whose ReLU inputs all clear the margin.
  const BackboneConfig bb = check_backbone();
  ModelParams<double> params;
  Tensor<double> images;
  for (std::uint64_t seed = 0;; ++seed) {
    if (seed == 1000) throw std::runtime_error("gradcheck: no draw clears the ReLU margin");
    std::mt19937_64 draw(derive_seed({0x6C, seed}));
    params = init_params<double>(bb, draw());
    for (ConvLayer<double>& l : params.layers) {
      for (double& v : l.bias.values()) v = std::uniform_real_distribution<double>(-0.2, 0.2)(draw);
    }
    images = random_tensor(Shape{2, 3, 16, 16}, draw, 0.0, 1.0);
    const Tensor<double> small = ops::bilinear_resize(images, 8, 8);
    if (std::min(relu_margin(params, images), relu_margin(params, small)) >= kReluMargin) break;
  }
  params.set_requires_grad(true);
  images.set_requires_grad(true);
  std::vector<Tensor<double>> leaves = params.tensors();
  leaves.push_back(images);
  {
    const Tensor<double> r = random_tensor(Shape{2, bb.num_fg_classes, 4, 4}, rng);
    fd.push_back(finite_difference_check(
        "forward_cam", leaves,
        [=](Tape<double>* t) { return ops::inner(forward_cam(params, images, t), r, t); },
        kOpTolerance));
  }
  {
    Tensor<double> labels(Shape{2, bb.num_fg_classes, 1, 1});
    const std::array<double, 10> pattern{1, 0, 1, 0, 0, 0, 1, 1, 0, 1};
    for (std::size_t i = 0; i < pattern.size(); ++i) labels[i] = pattern[i];
    TrainConfig tc;
    tc.eta = 1.0;
    tc.branch_rate = 0.5;
    fd.push_back(finite_difference_check(
        "two_branch_step (composed loss)", leaves,
        [=](Tape<double>* t) { return two_branch_step(params, images, labels, tc, t).total; },
        kComposedTolerance));
  }

  // Dot-product tests over random shape pairs.
  std::uniform_int_distribution<int> side(1, 17);
  double worst_resize = 0.0;
  for (int pair = 0; pair < 24; ++pair) {
    const Shape in{1, 2, side(rng), side(rng)};
    const int oh = side(rng), ow = side(rng);
    const Shape out{1, 2, oh, ow};
    worst_resize = std::max(
        worst_resize,
        adjoint_defect([=](const Tensor<double>& x, Tape<double>* t) {
          return ops::bilinear_resize(x, oh, ow, t);
        }, in, out, 3, rng()));
  }
  report.adjoint.push_back(GradCheckResult{"bilinear_resize adjoint (24 shape pairs)", worst_resize,
                                           kAdjointTolerance, worst_resize < kAdjointTolerance});
  const Shape fs_shape{2, 3, 5, 7};
  const double flip_defect = adjoint_defect(
      [](const Tensor<double>& x, Tape<double>* t) { return ops::horizontal_flip(x, t); }, fs_shape,
      fs_shape, 5, rng());
  report.adjoint.push_back(GradCheckResult{"horizontal_flip adjoint", flip_defect, kAdjointTolerance,
                                           flip_defect < kAdjointTolerance});
  return report;
}

std::string format_gradcheck_report(const GradcheckReport& report) {
  std::string out;
  auto line = [&](const GradCheckResult& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-44s worst %.3e  tol %.0e  %s\n", r.name.c_str(),
                  r.max_rel_error, r.tolerance, r.passed ? "PASS" : "FAIL");
    out += buf;
  };
  out += "finite-difference (relative error):\n";
  for (const GradCheckResult& r : report.finite_difference) line(r);
  out += "adjoint (dot-product defect):\n";
  for (const GradCheckResult& r : report.adjoint) line(r);
  out += report.passed() ? "all checks passed\n" : "gradient check FAILED\n";
  return out;
}

}  // namespace ssecam
