#include <gtest/gtest.h>

#include <random>

#include "ssecam/cam.hpp"
#include "ssecam/errors.hpp"
#include "ssecam/gradcheck.hpp"
#include "ssecam/ops.hpp"

namespace ssecam {
namespace {

Tensor<float> image(int side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return cast<float>(random_tensor(Shape{1, 3, side, side}, rng, 0.0, 1.0));
}

ModelParams<float> constant_model(float value) {
  auto p = init_params<float>(BackboneConfig{}, 0);
  for (float& v : p.layers.back().weight.values()) v = 0.0f;
  for (float& v : p.layers.back().bias.values()) v = value;
  return p;
}

CamStack stack(int k, int h, int w, std::vector<float> values) {
  return CamStack{Tensor<float>(Shape{1, k, h, w}, std::move(values)), "x", 1.0, false};
}

TEST(InferCam, ScaleOneIsForwardCam) {
  auto p = init_params<float>(BackboneConfig{}, 1);
  Tensor<float> img = image(64, 2);
  CamStack c = infer_cam(p, img, 1.0, false, "id");
  Tensor<float> ref = forward_cam(p, img);
  EXPECT_EQ(c.image_id, "id");
  for (std::size_t i = 0; i < ref.numel(); ++i) EXPECT_EQ(c.maps[i], ref[i]);
}

TEST(InferCam, FlipIsMirroredBack) {
  auto p = init_params<float>(BackboneConfig{}, 1);
  Tensor<float> img = image(32, 3);
  CamStack c = infer_cam(p, img, 1.0, true);
  Tensor<float> ref = ops::horizontal_flip(forward_cam(p, ops::horizontal_flip(img)));
  for (std::size_t i = 0; i < ref.numel(); ++i) EXPECT_EQ(c.maps[i], ref[i]);
}

TEST(InferCam, FlipOfSymmetricOutputUnchanged) {
  auto p = constant_model(0.4f);
  Tensor<float> img = image(32, 3);
  CamStack a = infer_cam(p, img, 1.0, false), b = infer_cam(p, img, 1.0, true);
  for (std::size_t i = 0; i < a.maps.numel(); ++i) EXPECT_EQ(a.maps[i], b.maps[i]);
}

TEST(InferCam, ScaledSizes) {
  auto p = init_params<float>(BackboneConfig{}, 1);
  EXPECT_EQ(infer_cam(p, image(64, 1), 0.5, false).maps.shape(), (Shape{1, 5, 8, 8}));
  EXPECT_EQ(infer_cam(p, image(64, 1), 1.5, false).maps.shape(), (Shape{1, 5, 24, 24}));
  EXPECT_EQ(scaled_input_size(96, 0.3), 32);  // round(28.8) = 29 -> 32
  EXPECT_THROW(infer_cam(p, image(16, 1), 0.25, false), std::invalid_argument);
}

TEST(ScoreMap, AllZeroCamIsBackground) {
  ScoreMap s = score_map(stack(2, 2, 3, std::vector<float>(12, 0.0f)), BackgroundConfig{});
  ASSERT_EQ(s.scores.shape(), (Shape{1, 3, 2, 3}));
  for (int i = 0; i < 6; ++i) EXPECT_EQ(s.scores[i], 0.2f);
  for (int i = 6; i < 18; ++i) EXPECT_EQ(s.scores[i], 0.0f);
  LabelMap l = pseudo_label(s, 8, 12);
  for (auto v : l.labels) EXPECT_EQ(v, 0);
}

TEST(ScoreMap, NormalisedValue) {
  ScoreMap s = score_map(stack(1, 1, 2, {1.0f, 0.5f}), BackgroundConfig{});
  const double expect = (0.5 - 1e-5) / (1.0 + 1e-5);
  EXPECT_EQ(s.scores(0, 1, 0, 1), static_cast<float>(expect));
  EXPECT_NEAR(s.scores(0, 1, 0, 1), 0.49999, 1e-5);
  EXPECT_EQ(s.scores(0, 1, 0, 0), static_cast<float>((1.0 - 1e-5) / (1.0 + 1e-5)));
}

TEST(ScoreMap, NegativeChannelScoresZero) {
  ScoreMap s = score_map(stack(1, 2, 2, {-1.0f, -3.0f, -0.1f, -2.0f}), BackgroundConfig{});
  for (int i = 4; i < 8; ++i) EXPECT_EQ(s.scores[i], 0.0f);
}

TEST(ScoreMap, ForegroundInUnitIntervalAndBackgroundConstant) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> mag(-30.0, 30.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<float> v(3 * 4 * 4);
    for (float& x : v) x = static_cast<float>(std::pow(10.0, mag(rng) / 3.0) * (mag(rng) > 0 ? 1 : -1));
    BackgroundConfig cfg;
    cfg.alpha = 0.05 + 0.9 * (t / 50.0);
    ScoreMap s = score_map(stack(3, 4, 4, v), cfg);
    for (int i = 0; i < 16; ++i) EXPECT_EQ(s.scores[i], static_cast<float>(cfg.alpha));
    for (std::size_t i = 16; i < s.scores.numel(); ++i) {
      EXPECT_GE(s.scores[i], 0.0f);
      EXPECT_LT(s.scores[i], 1.0f);
    }
  }
}

TEST(ScoreMap, AbsentClassesForcedToZero) {
  ScoreMap s = score_map(stack(2, 1, 2, {1.0f, 2.0f, 3.0f, 4.0f}), BackgroundConfig{},
                         std::vector<std::uint8_t>{0, 1});
  EXPECT_EQ(s.scores(0, 1, 0, 0), 0.0f);
  EXPECT_EQ(s.scores(0, 1, 0, 1), 0.0f);
  EXPECT_GT(s.scores(0, 2, 0, 1), 0.9f);
  EXPECT_THROW(score_map(stack(2, 1, 2, {1, 2, 3, 4}), BackgroundConfig{},
                         std::vector<std::uint8_t>{1}),
               ShapeError);
}

TEST(BackgroundConfig, Validation) {
  BackgroundConfig c;
  c.alpha = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.alpha = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = BackgroundConfig{};
  c.epsilon = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(PseudoLabel, DominantClassEverywhere) {
  ScoreMap s{Tensor<float>(Shape{1, 3, 2, 2}, 0.0f)};
  for (int i = 0; i < 4; ++i) s.scores[i] = 0.2f;
  for (int i = 8; i < 12; ++i) s.scores[i] = 1.0f;
  LabelMap l = pseudo_label(s, 5, 7);
  for (auto v : l.labels) EXPECT_EQ(v, 2);
}

TEST(PseudoLabel, HandBuiltArgmaxMatchesBruteForce) {
  // Channel planes for a 2x2 map: background, class 1, class 2.
  const float planes[3][4] = {{0.2f, 0.2f, 0.2f, 0.2f},
                              {0.9f, 0.1f, 0.2f, 0.5f},
                              {0.3f, 0.6f, 0.2f, 0.5f}};
  ScoreMap s{Tensor<float>(Shape{1, 3, 2, 2})};
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i) s.scores[c * 4 + i] = planes[c][i];
  LabelMap l = pseudo_label(s, 2, 2);
  for (int i = 0; i < 4; ++i) {
    int best = 0;
    for (int c = 1; c < 3; ++c)
      if (planes[c][i] > planes[best][i]) best = c;
    EXPECT_EQ(l.labels[i], best) << i;
  }
  EXPECT_EQ(l.labels[0], 1);
  EXPECT_EQ(l.labels[1], 2);
  EXPECT_EQ(l.labels[2], 0);  // three-way tie goes to background
  EXPECT_EQ(l.labels[3], 1);  // tie between classes goes to the lower index
}

TEST(PseudoLabel, FilteringNeverEmitsAbsentClass) {
  auto p = init_params<float>(BackboneConfig{}, 3);
  for (float& v : p.layers.back().bias.values()) v = 0.5f;
  for (int t = 0; t < 5; ++t) {
    Tensor<float> img = image(64, 10 + t);
    std::vector<std::uint8_t> present{1, 0, 0, 1, 0};
    ScoreMap s = multiscale_flip_aggregate(p, img, {0.5, 1.0}, true, BackgroundConfig{}, present);
    LabelMap l = pseudo_label(s, 64, 64);
    for (auto v : l.labels) EXPECT_TRUE(v == 0 || v == 1 || v == 4) << int(v);
  }
}

TEST(Multiscale, SingletonEqualsSinglePath) {
  auto p = init_params<float>(BackboneConfig{}, 4);
  Tensor<float> img = image(64, 7);
  ScoreMap a = multiscale_flip_aggregate(p, img, {1.0}, false, BackgroundConfig{});
  ScoreMap b = score_map(infer_cam(p, img, 1.0, false), BackgroundConfig{});
  ScoreMap c = multiscale_flip_aggregate(p, img, {1.0, 1.0}, false, BackgroundConfig{});
  for (std::size_t i = 0; i < a.scores.numel(); ++i) {
    EXPECT_EQ(a.scores[i], b.scores[i]);
    EXPECT_EQ(a.scores[i], c.scores[i]);
  }
  EXPECT_THROW(multiscale_flip_aggregate(p, img, {}, false, BackgroundConfig{}),
               std::invalid_argument);
}

TEST(Multiscale, MatchesMeanOfResizedStacks) {
  auto p = init_params<float>(BackboneConfig{}, 4);
  Tensor<float> img = image(64, 8);
  const std::vector<double> scales{0.5, 1.0, 1.5};
  ScoreMap got = multiscale_flip_aggregate(p, img, scales, true, BackgroundConfig{});

  // Oracle: resize every variant with the 64-bit op and average in order.
  std::vector<double> mean(5 * 16 * 16, 0.0);
  int variants = 0;
  for (double s : scales) {
    for (bool f : {false, true}) {
      Tensor<double> cam = cast<double>(infer_cam(p, img, s, f).maps);
      Tensor<double> r = ops::bilinear_resize(cam, 16, 16);
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += r[i];
      ++variants;
    }
  }
  for (double& v : mean) v /= variants;
  std::vector<float> meanf(mean.begin(), mean.end());
  ScoreMap ref = score_map(stack(5, 16, 16, meanf), BackgroundConfig{});
  for (std::size_t i = 0; i < ref.scores.numel(); ++i) EXPECT_NEAR(got.scores[i], ref.scores[i], 1e-5);
}

TEST(EquivarianceGap, ZeroAtScaleOne) {
  auto p = init_params<float>(BackboneConfig{}, 6);
  GapResult g = equivariance_gap(p, image(64, 9), 1.0);
  EXPECT_EQ(g.gap, 0.0);
  EXPECT_FALSE(g.degenerate);
}

TEST(EquivarianceGap, ConstantModelIsEquivariant) {
  auto p = constant_model(0.7f);
  for (double s : {0.5, 1.5}) EXPECT_EQ(equivariance_gap(p, image(64, 9), s).gap, 0.0);
  GapResult z = equivariance_gap(constant_model(0.0f), image(64, 9), 0.5);
  EXPECT_TRUE(z.degenerate);
  EXPECT_EQ(z.gap, 0.0);
}

TEST(EquivarianceGap, RandomModelHasPositiveGap) {
  auto p = init_params<float>(BackboneConfig{}, 6);
  EXPECT_GT(equivariance_gap(p, image(64, 9), 0.5).gap, 0.0);
}

}  // namespace
}  // namespace ssecam
