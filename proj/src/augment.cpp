#include <algorithm>
#include <cmath>

#include "ssecam/errors.hpp"
#include "ssecam/ops.hpp"
#include "ssecam/training.hpp"

namespace ssecam {
namespace {

// Mirror index without repeating the edge sample (… 2 1 | 0 1 2 … n-1 | n-2 …).
int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

void AugmentConfig::validate() const {
  if (rescale_min < 1 || rescale_max < rescale_min) {
    throw ConfigError("augment: need 1 <= rescale_min <= rescale_max");
  }
  if (crop < 8 || crop % 4 != 0) throw ConfigError("augment.crop must be a multiple of 4, >= 8");
  if (crop > rescale_min) throw ConfigError("augment.crop must not exceed rescale_min");
  if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0)) {
    throw ConfigError("augment.hflip_prob must lie in [0, 1]");
  }
}

Tensor<float> augment_sample(const SceneSample& sample, const AugmentConfig& config,
                             std::mt19937_64& rng) {
  const Tensor<float>& image = sample.image;
  const Shape& s = image.shape();
  const int longest = std::max(s.h, s.w);

  std::uniform_int_distribution<int> target_dist(config.rescale_min, config.rescale_max);
  const int target = target_dist(rng);
  const int rh = std::max(1, static_cast<int>(std::lround(static_cast<double>(s.h) * target / longest)));
  const int rw = std::max(1, static_cast<int>(std::lround(static_cast<double>(s.w) * target / longest)));
  const Tensor<float> resized = ops::bilinear_resize<float>(image, rh, rw);

  const int ph = std::max(rh, config.crop);
  const int pw = std::max(rw, config.crop);
  std::uniform_int_distribution<int> oy_dist(0, ph - config.crop);
  std::uniform_int_distribution<int> ox_dist(0, pw - config.crop);
  const int oy = oy_dist(rng);
  const int ox = ox_dist(rng);
  std::bernoulli_distribution flip_dist(config.hflip_prob);
  const bool flip = flip_dist(rng);

  // Reflect padding is centred so small rescales keep content in the middle.
  const int pad_y = (ph - rh) / 2;
  const int pad_x = (pw - rw) / 2;
  Tensor<float> out(Shape{1, s.c, config.crop, config.crop});
  for (int c = 0; c < s.c; ++c) {
    for (int y = 0; y < config.crop; ++y) {
      const int sy = reflect(oy + y - pad_y, rh);
      for (int x = 0; x < config.crop; ++x) {
        const int dx = flip ? config.crop - 1 - x : x;
        const int sx = reflect(ox + x - pad_x, rw);
        out(0, c, y, dx) = resized(0, c, sy, sx);
      }
    }
  }
  return out;
}

}  // namespace ssecam
