#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"
#include "ssecam/errors.hpp"
#include "ssecam/experiment.hpp"
#include "ssecam/gradcheck.hpp"
#include "ssecam/ops.hpp"
#include "ssecam/training.hpp"
#include "test_util.hpp"

namespace ssecam {
namespace {

namespace fs = std::filesystem;

std::vector<SceneSample> scenes(int count, std::uint64_t seed = 0) {
  SceneConfig c;
  c.seed = seed;
  std::vector<SceneSample> out;
  for (int i = 0; i < count; ++i) out.push_back(generate_scene(c, i));
  return out;
}

Tensor<float> batch_of(const std::vector<SceneSample>& s, int crop) {
  Tensor<float> out(Shape{static_cast<int>(s.size()), 3, crop, crop});
  const std::size_t plane = static_cast<std::size_t>(3) * crop * crop;
  for (std::size_t i = 0; i < s.size(); ++i) {
    Tensor<float> r = ops::bilinear_resize(s[i].image, crop, crop);
    std::copy(r.data(), r.data() + plane, out.data() + i * plane);
  }
  return out;
}

Tensor<float> labels_of(const std::vector<SceneSample>& s) {
  Tensor<float> out(Shape{static_cast<int>(s.size()), 5, 1, 1});
  for (std::size_t i = 0; i < s.size(); ++i)
    for (int k = 0; k < 5; ++k) out(static_cast<int>(i), k, 0, 0) = s[i].label[k];
  return out;
}

TEST(SmallBranch, RoundingRule) {
  EXPECT_EQ(small_branch_size(64, 0.3), 20);
  EXPECT_EQ(small_branch_size(64, 0.5), 32);
  EXPECT_EQ(small_branch_size(64, 0.2), 16);  // round(12.8) = 13 -> 16
  EXPECT_EQ(small_branch_size(64, 0.6), 40);  // round(38.4) = 38 -> 40
  EXPECT_THROW(small_branch_size(8, 0.3), ConfigError);
}

TEST(TwoBranchStep, CamSizesForDefaultCrop) {
  auto s = scenes(2);
  auto p = init_params<float>(BackboneConfig{}, 0);
  StepOutput<float> out = two_branch_step<float>(p, batch_of(s, 64), labels_of(s), TrainConfig{}, nullptr);
  EXPECT_EQ(out.cam_large.shape(), (Shape{2, 5, 16, 16}));
  EXPECT_EQ(out.cam_small.shape(), (Shape{2, 5, 5, 5}));
}

TEST(TwoBranchStep, EtaZeroIsMeanOfClassificationLosses) {
  auto s = scenes(3);
  auto p = init_params<float>(BackboneConfig{}, 1);
  TrainConfig c;
  c.eta = 0.0;
  StepOutput<float> out = two_branch_step<float>(p, batch_of(s, 64), labels_of(s), c, nullptr);
  EXPECT_GT(out.ser.item(), 0.0f);
  EXPECT_EQ(out.total.item(), 0.5f * out.cls_large.item() + 0.5f * out.cls_small.item());
}

TEST(TwoBranchStep, TotalDecomposes) {
  auto s = scenes(3);
  auto p = init_params<float>(BackboneConfig{}, 2);
  for (double eta : {0.3, 1.0, 2.5}) {
    TrainConfig c;
    c.eta = eta;
    StepOutput<float> out = two_branch_step<float>(p, batch_of(s, 64), labels_of(s), c, nullptr);
    const double expect =
        0.5 * out.cls_large.item() + 0.5 * out.cls_small.item() + eta * out.ser.item();
    EXPECT_NEAR(out.total.item(), expect, 4 * 1.2e-7 * std::abs(expect));
  }
}

TEST(TwoBranchStep, ZeroClassifierGivesZeroSer) {
  auto s = scenes(2);
  auto p = init_params<float>(BackboneConfig{}, 0);
  for (float& v : p.layers.back().weight.values()) v = 0.0f;
  StepOutput<float> out = two_branch_step<float>(p, batch_of(s, 64), labels_of(s), TrainConfig{}, nullptr);
  EXPECT_EQ(out.ser.item(), 0.0f);
}

TEST(SerLoss, ZeroExactlyWhenSmallIsWarpedLarge) {
  std::mt19937_64 rng(3);
  Tensor<double> large = random_tensor(Shape{2, 5, 16, 16}, rng);
  Tensor<double> small = ops::bilinear_resize(large, 5, 5);
  EXPECT_EQ(ser_loss<double>(large, small, nullptr).item(), 0.0);
  small[7] += 0.5;
  EXPECT_GT(ser_loss<double>(large, small, nullptr).item(), 0.0);
}

TEST(TwoBranchStep, SharedWeightsAccumulateBothBranches) {
  auto s = scenes(2);
  auto p = init_params<double>(BackboneConfig{}, 4);
  Tensor<double> images = cast<double>(batch_of(s, 32));
  Tensor<double> labels = cast<double>(labels_of(s));
  TrainConfig c;
  c.eta = 0.0;
  c.branch_rate = 0.5;

  p.set_requires_grad(true);
  Tape<double> tape;
  tape.backward(two_branch_step(p, images, labels, c, &tape).total);
  std::vector<double> joint(p.layers[2].weight.grad().begin(), p.layers[2].weight.grad().end());
  p.zero_grad();

  auto branch_grad = [&](const Tensor<double>& x) {
    Tape<double> t;
    Tensor<double> loss = ops::multilabel_cls_loss(forward_logits(p, x, &t), labels, &t);
    t.backward(loss);
    std::vector<double> g(p.layers[2].weight.grad().begin(), p.layers[2].weight.grad().end());
    p.zero_grad();
    return g;
  };
  auto g_large = branch_grad(images);
  auto g_small = branch_grad(ops::bilinear_resize(images, 16, 16));
  for (std::size_t i = 0; i < joint.size(); ++i) {
    EXPECT_NEAR(joint[i], 0.5 * g_large[i] + 0.5 * g_small[i], 1e-12);
  }
}

TEST(TwoBranchStep, ComposedGradientMatchesFiniteDifferences) {
  GradcheckReport r = run_gradcheck_suite();
  bool found = false;
  for (const GradCheckResult& c : r.finite_difference) {
    if (c.name.find("two_branch") == std::string::npos) continue;
    found = true;
    EXPECT_LT(c.max_rel_error, 1e-4) << c.name;
  }
  EXPECT_TRUE(found);
}

TEST(Augment, OutputSizeAndDeterminism) {
  auto s = scenes(1);
  AugmentConfig c;
  for (int t = 0; t < 20; ++t) {
    std::mt19937_64 a(t), b(t);
    Tensor<float> x = augment_sample(s[0], c, a), y = augment_sample(s[0], c, b);
    ASSERT_EQ(x.shape(), (Shape{1, 3, 64, 64}));
    for (std::size_t i = 0; i < x.numel(); ++i) ASSERT_EQ(x[i], y[i]);
  }
}

TEST(Augment, DegenerateRangeIsPlainResize) {
  auto s = scenes(1);
  AugmentConfig c;
  c.rescale_min = c.rescale_max = c.crop = 64;
  c.hflip_prob = 0.0;
  std::mt19937_64 rng(9);
  Tensor<float> x = augment_sample(s[0], c, rng);
  Tensor<float> ref = ops::bilinear_resize(s[0].image, 64, 64);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(x[i], ref[i]);
}

TEST(Augment, CropBelowRescaleRejected) {
  AugmentConfig c;
  c.crop = 100;
  EXPECT_THROW(c.validate(), ConfigError);
  c = AugmentConfig{};
  c.crop = 62;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, StepCountIsEpochsTimesBatches) {
  TrainConfig c;
  c.epochs = 1;
  TrainResult r = train(scenes(2), BackboneConfig{}, c, AugmentConfig{});
  EXPECT_EQ(r.trace.size(), 1u);
  c.epochs = 2;
  c.batch_size = 3;
  r = train(scenes(7), BackboneConfig{}, c, AugmentConfig{});
  EXPECT_EQ(r.trace.size(), 6u);
  EXPECT_EQ(r.trace.front().lr, 0.01);
  EXPECT_THROW(train({}, BackboneConfig{}, c, AugmentConfig{}), std::invalid_argument);
}

TEST(Train, SameSeedSameTrace) {
  TrainConfig c;
  c.epochs = 2;
  auto data = scenes(12);
  TrainResult a = train(data, BackboneConfig{}, c, AugmentConfig{});
  TrainResult b = train(data, BackboneConfig{}, c, AugmentConfig{});
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(loss_csv_row(a.trace[i]), loss_csv_row(b.trace[i]));
  }
  c.threads = 3;
  TrainResult t3 = train(data, BackboneConfig{}, c, AugmentConfig{});
  EXPECT_EQ(loss_csv_row(t3.trace.back()), loss_csv_row(a.trace.back()));
}

TEST(Train, RecordedTotalDecomposes) {
  TrainConfig c;
  c.epochs = 1;
  TrainResult r = train(scenes(16), BackboneConfig{}, c, AugmentConfig{});
  for (const TrainRecord& t : r.trace) {
    const double expect = 0.5 * t.cls_large + 0.5 * t.cls_small + c.eta * t.ser;
    EXPECT_NEAR(t.total, expect, 4 * 1.2e-7 * expect);
    EXPECT_GE(t.ser, 0.0f);
  }
}

TEST(Train, ClassificationLossDropsOnSmallSet) {
  TrainConfig c;
  c.eta = 0.0;
  TrainResult r = train(scenes(50, 5), BackboneConfig{}, c, AugmentConfig{});
  const int per_epoch = 7;
  ASSERT_EQ(r.trace.size(), 15u * per_epoch);
  auto epoch_mean = [&](int e) {
    double sum = 0.0;
    for (int i = 0; i < per_epoch; ++i) {
      const TrainRecord& t = r.trace[e * per_epoch + i];
      sum += 0.5 * (t.cls_large + t.cls_small);
    }
    return sum / per_epoch;
  };
  EXPECT_LT(epoch_mean(14), epoch_mean(0));
}

TEST(Train, DivergenceAbortsWithRecord) {
  TrainConfig c;
  c.epochs = 3;
  c.optimizer.lr_init = 1e30;
  try {
    train(scenes(8), BackboneConfig{}, c, AugmentConfig{});
    FAIL() << "expected NumericAbort";
  } catch (const NumericAbort& e) {
    EXPECT_GE(e.record().iteration, 0);
  }
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override { dir_ = test::fresh_dir("checkpoint"); }
  fs::path dir_;
};

TEST_F(CheckpointTest, RoundTripIsBitwise) {
  auto p = init_params<float>(BackboneConfig{}, 11);
  CheckpointMeta meta;
  meta.name = "m";
  meta.train.seed = 11;
  save_checkpoint(p, meta, dir_);
  Checkpoint ck = load_checkpoint(dir_);
  EXPECT_EQ(ck.meta.name, "m");
  EXPECT_EQ(ck.meta.train.seed, 11u);
  EXPECT_EQ(ck.meta.backbone, p.config);
  std::mt19937_64 rng(1);
  Tensor<float> img = cast<float>(random_tensor(Shape{1, 3, 32, 32}, rng, 0.0, 1.0));
  Tensor<float> a = forward_cam(p, img), b = forward_cam(ck.params, img);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST_F(CheckpointTest, TruncatedBlobRejected) {
  save_checkpoint(init_params<float>(BackboneConfig{}, 0), CheckpointMeta{}, dir_);
  const auto size = fs::file_size(dir_ / "params.bin");
  fs::resize_file(dir_ / "params.bin", size - 4);
  try {
    load_checkpoint(dir_);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
}

TEST_F(CheckpointTest, UnknownVersionRejected) {
  save_checkpoint(init_params<float>(BackboneConfig{}, 0), CheckpointMeta{}, dir_);
  nlohmann::json m = nlohmann::json::parse(test::slurp(dir_ / "manifest.json"));
  m["version"] = 99;
  test::spit(dir_ / "manifest.json", m.dump());
  EXPECT_THROW(load_checkpoint(dir_), ArtifactMismatch);
}

TEST_F(CheckpointTest, ShapeMismatchRejected) {
  save_checkpoint(init_params<float>(BackboneConfig{}, 0), CheckpointMeta{}, dir_);
  nlohmann::json m = nlohmann::json::parse(test::slurp(dir_ / "manifest.json"));
  m["tensors"][0]["shape"][0] = 17;
  test::spit(dir_ / "manifest.json", m.dump());
  EXPECT_THROW(load_checkpoint(dir_), ArtifactMismatch);
}

TEST_F(CheckpointTest, MissingManifestIsIoError) {
  EXPECT_THROW(load_checkpoint(dir_ / "nope"), IoError);
}

}  // namespace
}  // namespace ssecam
