#include "ssecam/training.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ssecam/errors.hpp"
#include "ssecam/ops.hpp"
#include "ssecam/parallel.hpp"

namespace ssecam {

void TrainConfig::validate(const AugmentConfig& augment) const {
  if (!(eta >= 0.0)) throw ConfigError("train.eta must be non-negative");
  if (!(branch_rate > 0.0 && branch_rate < 1.0)) {
    throw ConfigError("train.branch_rate must lie in (0, 1)");
  }
  if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (epochs < 1) throw ConfigError("train.epochs must be positive");
  if (threads < 1) throw ConfigError("threads must be positive");
  OptimizerConfig opt = optimizer;
  opt.max_itr = 1;
  try {
    opt.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  small_branch_size(augment.crop, branch_rate);
}

int small_branch_size(int crop, double rate) {
  const long rounded = std::lround(crop * rate);
  const int size = static_cast<int>((rounded + 3) / 4 * 4);
  if (size < 8) {
    throw ConfigError("small branch of " + std::to_string(size) + " px is below the minimum of 8 (crop " +
                      std::to_string(crop) + ", rate " + std::to_string(rate) + ")");
  }
  return size;
}

template <typename T>
Tensor<T> ser_loss(const Tensor<T>& cam_large, const Tensor<T>& cam_small, Tape<T>* tape) {
  const Shape& s = cam_small.shape();
  const Tensor<T> warped = ops::bilinear_resize(cam_large, s.h, s.w, tape);
  return ops::mean_squared_error(warped, cam_small, tape);
}

template <typename T>
StepOutput<T> two_branch_step(const ModelParams<T>& params, const Tensor<T>& images,
                              const Tensor<T>& labels, const TrainConfig& config, Tape<T>* tape) {
  const Shape& s = images.shape();
  const int small_h = small_branch_size(s.h, config.branch_rate);
  const int small_w = small_branch_size(s.w, config.branch_rate);
  const Tensor<T> small = ops::bilinear_resize(images, small_h, small_w, tape);

  StepOutput<T> out;
  out.cam_large = forward_cam(params, images, tape);
  out.cam_small = forward_cam(params, small, tape);
  out.cls_large = ops::multilabel_cls_loss(ops::global_avg_pool(out.cam_large, tape), labels, tape);
  out.cls_small = ops::multilabel_cls_loss(ops::global_avg_pool(out.cam_small, tape), labels, tape);
  out.ser = ser_loss(out.cam_large, out.cam_small, tape);
  const std::array<Tensor<T>, 3> terms{out.cls_large, out.cls_small, out.ser};
  const std::array<T, 3> weights{T(0.5), T(0.5), static_cast<T>(config.eta)};
  out.total = ops::weighted_sum<T>(terms, weights, tape);
  return out;
}

TrainResult train(const std::vector<SceneSample>& dataset, const BackboneConfig& model_config,
                  const TrainConfig& train_config, const AugmentConfig& augment_config,
                  const StepCallback& on_step) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  model_config.validate();
  augment_config.validate();
  train_config.validate(augment_config);
  const int k = model_config.num_fg_classes;
  for (const SceneSample& s : dataset) {
    if (static_cast<int>(s.label.size()) != k) {
      throw ArtifactMismatch("train: sample label length does not match num_fg_classes");
    }
  }

  const int n = static_cast<int>(dataset.size());
  const int batch = train_config.batch_size;
  const int steps_per_epoch = (n + batch - 1) / batch;
  OptimizerConfig opt = train_config.optimizer;
  opt.max_itr = train_config.epochs * steps_per_epoch;

  TrainResult result;
  result.params = init_params<float>(model_config, train_config.seed);
  result.params.set_requires_grad(true);
  std::vector<Tensor<float>> tensors = result.params.tensors();
  SgdState<float> state;
  const int crop = augment_config.crop;

  int itr = 0;
  for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(train_config.seed + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    for (int step = 0; step < steps_per_epoch; ++step, ++itr) {
      const int begin = step * batch;
      const int count = std::min(batch, n - begin);
      Tensor<float> images(Shape{count, 3, crop, crop});
      Tensor<float> labels(Shape{count, k, 1, 1});
      const std::size_t plane = static_cast<std::size_t>(3) * crop * crop;
      parallel_for(count, train_config.threads, [&](int b) {
        const int idx = order[begin + b];
        std::mt19937_64 rng(derive_seed({train_config.seed, static_cast<std::uint64_t>(epoch),
                                         static_cast<std::uint64_t>(idx)}));
        const Tensor<float> crop_img = augment_sample(dataset[idx], augment_config, rng);
        std::copy(crop_img.data(), crop_img.data() + plane, images.data() + b * plane);
        for (int c = 0; c < k; ++c) labels(b, c, 0, 0) = dataset[idx].label[c];
      });

      TrainRecord rec;
      rec.iteration = itr;
      rec.lr = opt.lr(itr);
      try {
        Tape<float> tape;
        const StepOutput<float> out =
            two_branch_step(result.params, images, labels, train_config, &tape);
        rec.cls_large = out.cls_large.item();
        rec.cls_small = out.cls_small.item();
        rec.ser = out.ser.item();
        rec.total = out.total.item();
        tape.backward(out.total);
        sgd_update<float>(tensors, state, opt, itr);
        result.params.zero_grad();
        for (const Tensor<float>& t : tensors) t.ensure_finite("parameter update");
      } catch (const NumericError& e) {
        throw NumericAbort("numeric failure at iteration " + std::to_string(itr) + ": " + e.what(),
                           rec);
      }
      result.trace.push_back(rec);
      if (on_step) on_step(rec);
    }
  }
  return result;
}

std::string loss_csv_header() { return "iteration,lr,cls_large,cls_small,ser,total"; }

std::string loss_csv_row(const TrainRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g", r.iteration, r.lr,
                static_cast<double>(r.cls_large), static_cast<double>(r.cls_small),
                static_cast<double>(r.ser), static_cast<double>(r.total));
  return buf;
}

template Tensor<float> ser_loss(const Tensor<float>&, const Tensor<float>&, Tape<float>*);
template Tensor<double> ser_loss(const Tensor<double>&, const Tensor<double>&, Tape<double>*);
template StepOutput<float> two_branch_step(const ModelParams<float>&, const Tensor<float>&,
                                           const Tensor<float>&, const TrainConfig&, Tape<float>*);
template StepOutput<double> two_branch_step(const ModelParams<double>&, const Tensor<double>&,
                                            const Tensor<double>&, const TrainConfig&,
                                            Tape<double>*);

}  // namespace ssecam
