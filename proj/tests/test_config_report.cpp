#include <gtest/gtest.h>

#include <cmath>

#include "json.hpp"
#include "ssecam/config.hpp"
#include "ssecam/errors.hpp"
#include "ssecam/experiment.hpp"
#include "ssecam/report.hpp"
#include "test_util.hpp"

namespace ssecam {
namespace {

using nlohmann::json;

TEST(Config, DefaultsCarryProtocolValues) {
  const ExperimentConfig c = parse_experiment_config(json::object());
  EXPECT_EQ(c.train.eta, 1.0);
  EXPECT_EQ(c.train.branch_rate, 0.3);
  EXPECT_EQ(c.train.batch_size, 8);
  EXPECT_EQ(c.train.epochs, 15);
  EXPECT_EQ(c.train.optimizer.lr_init, 0.01);
  EXPECT_EQ(c.train.optimizer.gamma, 0.9);
  EXPECT_EQ(c.background.alpha, 0.2);
  EXPECT_EQ(c.background.epsilon, 1e-5);
  EXPECT_EQ(c.scene.train_count, 200);
  EXPECT_EQ(c.scene.eval_count, 50);
  EXPECT_EQ(c.augment.rescale_min, 64);
  EXPECT_EQ(c.augment.rescale_max, 96);
  EXPECT_EQ(c.augment.crop, 64);
  EXPECT_EQ(c.test_scales, (std::vector<double>{0.5, 1.0, 1.5}));
}

TEST(Config, UnknownKeysAndWrongTypesRejected) {
  EXPECT_THROW(parse_experiment_config(json{{"tarin", json::object()}}), ConfigError);
  EXPECT_THROW(parse_experiment_config(json{{"train", {{"etaa", 1.0}}}}), ConfigError);
  EXPECT_THROW(parse_experiment_config(json{{"train", {{"eta", "high"}}}}), ConfigError);
  EXPECT_THROW(parse_experiment_config(json{{"train", {{"eta", -1.0}}}}), ConfigError);
  EXPECT_THROW(parse_experiment_config(json{{"seeds", json::array()}}), ConfigError);
}

TEST(Config, Overrides) {
  json doc = json::object();
  apply_override(doc, "train.eta=0");
  apply_override(doc, "branch_rate=0.5");
  apply_override(doc, "rescale_range=[64,128]");
  apply_override(doc, "alpha=0.3");
  const ExperimentConfig c = parse_experiment_config(doc);
  EXPECT_EQ(c.train.eta, 0.0);
  EXPECT_EQ(c.train.branch_rate, 0.5);
  EXPECT_EQ(c.augment.rescale_min, 64);
  EXPECT_EQ(c.augment.rescale_max, 128);
  EXPECT_EQ(c.background.alpha, 0.3);
  EXPECT_THROW(apply_override(doc, "no_such_key=1"), ConfigError);
  EXPECT_THROW(apply_override(doc, "missing-equals"), ConfigError);
  // Crops larger than the smallest rescale are rejected at parse time.
  apply_override(doc, "rescale_range=[32,96]");
  EXPECT_THROW(parse_experiment_config(doc), ConfigError);
}

TEST(Config, ResolvedConfigReproducesRun) {
  const auto dir = test::fresh_dir("config");
  const ExperimentConfig c = resolve_config({}, {"eta=0.25", "epochs=3", "seeds=[7]"});
  write_resolved_config(c, dir);
  const ExperimentConfig back = load_experiment_config(dir / "config.json");
  EXPECT_EQ(json(back), json(c));
  EXPECT_EQ(back.train.seed, 7u);
  EXPECT_EQ(back.train.epochs, 3);
  EXPECT_THROW(load_experiment_config(dir / "absent.json"), IoError);
  test::spit(dir / "broken.json", "{");
  EXPECT_THROW(load_experiment_config(dir / "broken.json"), ConfigError);
}

TEST(Csv, EscapeAndParse) {
  EXPECT_EQ(csv_escape("plain"), "plain");
  EXPECT_EQ(csv_escape("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_escape("say \"hi\""), "\"say \"\"hi\"\"\"");
  auto rows = parse_csv("x,\"a,b\",\"q\"\"q\"\n1,2,3\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"x", "a,b", "q\"q"}));
  EXPECT_EQ(format_number(std::nan("")), "nan");
  EXPECT_EQ(format_number(0.5), "0.5");
}

TEST(Csv, MetricsHeaderAndRow) {
  CurveRow row;
  row.scale_label = "MS";
  row.metrics.miou = 0.5;
  row.metrics.m_fn = 0.25;
  row.metrics.m_fp = std::nan("");
  row.metrics.skipped_classes = {2, 4};
  const std::string csv = metrics_csv({MetricsCsvRow{"ssenet(0.3)", 1, row}});
  EXPECT_EQ(csv, "model,seed,scale,miou,m_fn,m_fp,skipped\nssenet(0.3),1,MS,0.5,0.25,nan,2;4\n");
}

std::vector<Series> two_point() {
  return {Series{"baseline", {{0.5, 0.4}, {1.0, 0.6}}}};
}

TEST(Svg, TwoPointPolyline) {
  const std::string svg = render_svg_plot(two_point(), PlotAxes{"t", "x", "y", {}});
  const auto at = svg.find("<polyline");
  ASSERT_NE(at, std::string::npos);
  EXPECT_EQ(svg.find("<polyline", at + 1), std::string::npos);
  const auto pts_begin = svg.find("points=\"", at) + 8;
  const std::string pts = svg.substr(pts_begin, svg.find('"', pts_begin) - pts_begin);
  EXPECT_EQ(std::count(pts.begin(), pts.end(), ','), 2);
  EXPECT_NE(svg.find("viewBox=\"0 0 640 400\""), std::string::npos);
  EXPECT_NE(svg.find(">baseline</text>"), std::string::npos);
}

TEST(Svg, ByteStableAndLegendOrder) {
  std::vector<Series> s = two_point();
  s.push_back(Series{"ssenet <0.3>", {{0.5, 0.5}, {1.0, 0.7}}});
  const PlotAxes axes{"t", "x", "y", {}};
  EXPECT_EQ(render_svg_plot(s, axes), render_svg_plot(s, axes));
  const std::string svg = render_svg_plot(s, axes);
  EXPECT_LT(svg.find(">baseline<"), svg.find(">ssenet &lt;0.3&gt;<"));
}

TEST(Svg, EmptyTableRejected) {
  EXPECT_THROW(render_svg_plot({}, PlotAxes{}), std::invalid_argument);
  EXPECT_THROW(render_svg_plot({Series{"a", {}}}, PlotAxes{}), std::invalid_argument);
}

TEST(Svg, CurveSeriesSkipsMsRow) {
  std::vector<CurveRow> rows(3);
  rows[0].scale_label = "0.5";
  rows[0].scale = 0.5;
  rows[1].scale_label = "1";
  rows[1].scale = 1.0;
  rows[2].scale_label = "MS";
  auto series = curve_series(rows, "baseline");
  ASSERT_EQ(series.size(), 3u);
  EXPECT_EQ(series[0].name, "baseline mIoU");
  EXPECT_EQ(series[0].points.size(), 2u);
}

TEST(SweepSpec, StrictParse) {
  SweepSpec s = SweepSpec::from_json(json{{"axis", "branch_rate"}, {"values", {0.2, 0.3}}});
  EXPECT_EQ(s.values.size(), 2u);
  EXPECT_TRUE(s.seeds.empty());
  EXPECT_THROW(SweepSpec::from_json(json{{"axis", "width"}, {"values", {1}}}), ConfigError);
  EXPECT_THROW(SweepSpec::from_json(json{{"axis", "eta"}, {"values", json::array()}}), ConfigError);
  EXPECT_THROW(SweepSpec::from_json(json{{"axis", "eta"}, {"values", {1}}, {"extra", 1}}),
               ConfigError);
}

TEST(SweepCsv, LongFormatRows) {
  SweepSpec spec = SweepSpec::from_json(json{{"axis", "eta"}, {"values", {0, 1}}, {"seeds", {0}}});
  SweepCell ok;
  ok.value_index = 0;
  ok.value_label = "0";
  ok.ok = true;
  ok.rows.resize(1);
  ok.rows[0].scale_label = "MS";
  ok.rows[0].metrics.miou = 0.5;
  SweepCell bad;
  bad.value_index = 1;
  bad.value_label = "1";
  bad.error = "numeric";
  const std::string csv = sweep_csv(spec, {ok, bad});
  auto rows = parse_csv(csv);
  ASSERT_GE(rows.size(), 3u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"axis", "value", "seed", "scale", "metric", "score",
                                               "status"}));
  EXPECT_EQ(rows[1][0], "eta");
  EXPECT_EQ(rows.back()[6].substr(0, 6), "failed");
}

TEST(Gradcheck, InjectedBrokenRuleFails) {
  EXPECT_TRUE(run_gradcheck_suite(false).passed());
  GradcheckReport broken = run_gradcheck_suite(true);
  EXPECT_FALSE(broken.passed());
  EXPECT_NE(format_gradcheck_report(broken).find("FAIL"), std::string::npos);
}

}  // namespace
}  // namespace ssecam
