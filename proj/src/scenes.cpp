#include "ssecam/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"

#include "ssecam/config.hpp"
#include "ssecam/errors.hpp"
#include "ssecam/image_io.hpp"
#include "ssecam/parallel.hpp"

namespace ssecam {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class ShapeKind { kDisk = 1, kSquare, kTriangle, kRing, kCross };

struct Rgb {
  double r, g, b;
};

// Base colours per foreground class, indexed by class - 1.
constexpr Rgb kClassColors[] = {
    {0.85, 0.22, 0.20},  // disk
    {0.22, 0.72, 0.28},  // square
    {0.22, 0.32, 0.85},  // triangle
    {0.86, 0.78, 0.20},  // ring
    {0.74, 0.26, 0.80},  // cross
};

constexpr int kMaxPlacementRetries = 100;
constexpr double kMinVisibleFraction = 0.3;

std::uint64_t scene_seed(std::uint64_t seed, Split split, int index, int attempt) {
  const std::uint64_t tag = split == Split::kTrain ? 0x7261696eull : 0x6576616cull;
  return derive_seed({seed, tag, static_cast<std::uint64_t>(index),
                      static_cast<std::uint64_t>(attempt)});
}

bool covers(ShapeKind kind, double dx, double dy, double extent) {
  const double half = extent / 2.0;
  switch (kind) {
    case ShapeKind::kDisk:
      return dx * dx + dy * dy <= half * half;
    case ShapeKind::kSquare:
      return std::abs(dx) <= half && std::abs(dy) <= half;
    case ShapeKind::kTriangle: {
      // Apex up; width grows linearly to the full extent at the base.
      const double depth = dy + half;
      return depth >= 0.0 && depth <= extent && std::abs(dx) <= depth / 2.0;
    }
    case ShapeKind::kRing: {
      const double r2 = dx * dx + dy * dy;
      const double inner = 0.55 * half;
      return r2 <= half * half && r2 >= inner * inner;
    }
    case ShapeKind::kCross: {
      const double arm = extent / 6.0;
      return (std::abs(dx) <= arm && std::abs(dy) <= half) ||
             (std::abs(dy) <= arm && std::abs(dx) <= half);
    }
  }
  return false;
}

struct Placed {
  int cls;
  double extent;
  std::vector<std::size_t> pixels;
};

// Draws objects back to front; returns false when some object could not be
// placed with enough of every earlier object left visible.
bool layout_objects(const SceneConfig& cfg, std::mt19937_64& rng, std::vector<Placed>& placed,
                    LabelMap& mask) {
  const int canvas = cfg.canvas;
  std::uniform_int_distribution<int> count_dist(cfg.objects_min, cfg.objects_max);
  const int count = count_dist(rng);
  std::vector<int> classes(num_fg_classes());
  for (int c = 0; c < num_fg_classes(); ++c) classes[c] = c + 1;
  std::shuffle(classes.begin(), classes.end(), rng);
  classes.resize(count);

  std::uniform_real_distribution<double> log_size(std::log(cfg.size_min), std::log(cfg.size_max));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int cls : classes) {
    bool ok = false;
    for (int attempt = 0; attempt < kMaxPlacementRetries && !ok; ++attempt) {
      const double extent = std::exp(log_size(rng)) * canvas;
      const double cx = extent / 2.0 + unit(rng) * (canvas - extent);
      const double cy = extent / 2.0 + unit(rng) * (canvas - extent);
      Placed obj{cls, extent / canvas, {}};
      for (int y = 0; y < canvas; ++y) {
        for (int x = 0; x < canvas; ++x) {
          if (covers(static_cast<ShapeKind>(cls), x + 0.5 - cx, y + 0.5 - cy, extent)) {
            obj.pixels.push_back(static_cast<std::size_t>(y) * canvas + x);
          }
        }
      }
      if (obj.pixels.empty()) continue;
      LabelMap trial = mask;
      for (std::size_t p : obj.pixels) trial.labels[p] = static_cast<std::uint8_t>(cls);
      ok = true;
      for (const Placed& prev : placed) {
        std::size_t visible = 0;
        for (std::size_t p : prev.pixels) visible += trial.labels[p] == prev.cls;
        if (visible < kMinVisibleFraction * prev.pixels.size()) {
          ok = false;
          break;
        }
      }
      if (ok) {
        mask = std::move(trial);
        placed.push_back(std::move(obj));
      }
    }
    if (!ok) return false;
  }
  return true;
}

fs::path image_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%05d.ppm", i);
  return buf;
}

fs::path mask_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "mask_%05d.pgm", i);
  return buf;
}

Raster8 quantize_image(const Tensor<float>& image) {
  const Shape& s = image.shape();
  Raster8 r{s.w, s.h, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(s.w) * s.h * 3)};
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image(0, c, y, x), 0.0f, 1.0f);
        r.pixels[(static_cast<std::size_t>(y) * s.w + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  return r;
}

}  // namespace

const std::vector<std::string>& class_catalog() {
  static const std::vector<std::string> names{"background", "disk", "square",
                                              "triangle",   "ring", "cross"};
  return names;
}

const char* split_name(Split split) { return split == Split::kTrain ? "train" : "eval"; }

void SceneConfig::validate() const {
  if (canvas < 16 || canvas % 4 != 0) {
    throw ConfigError("scene.canvas must be a multiple of 4 and at least 16");
  }
  if (objects_min < 1 || objects_max < objects_min || objects_max > num_fg_classes()) {
    throw ConfigError("scene.objects_min/objects_max must satisfy 1 <= min <= max <= 5");
  }
  if (!(size_min > 0.0 && size_min <= size_max && size_max < 1.0)) {
    throw ConfigError("scene size range must satisfy 0 < size_min <= size_max < 1");
  }
  if (color_jitter < 0.0 || noise_sigma < 0.0) {
    throw ConfigError("scene.color_jitter and scene.noise_sigma must be non-negative");
  }
  if (train_count < 1 || eval_count < 1) throw ConfigError("scene counts must be positive");
}

std::vector<std::uint8_t> labels_from_mask(const LabelMap& mask, int num_fg) {
  std::vector<std::uint8_t> label(num_fg, 0);
  for (std::uint8_t v : mask.labels) {
    if (v > 0 && v <= num_fg) label[v - 1] = 1;
  }
  return label;
}

SceneSample generate_scene(const SceneConfig& config, int index, Split split) {
  if (index < 0) throw std::out_of_range("generate_scene: negative index");
  config.validate();
  const int canvas = config.canvas;

  std::mt19937_64 rng;
  std::vector<Placed> placed;
  LabelMap mask;
  // Deterministic fallback chain: a failed layout moves on to the next sub-seed.
  for (int attempt = 0;; ++attempt) {
    rng.seed(scene_seed(config.seed, split, index, attempt));
    placed.clear();
    mask = LabelMap(canvas, canvas, 0);
    if (layout_objects(config, rng, placed, mask)) break;
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto sym = [&](double a) { return (2.0 * unit(rng) - 1.0) * a; };

  // Low-frequency background: tinted grey, linear gradient, one slow wave.
  const double base = 0.35 + 0.25 * unit(rng);
  const Rgb tint{sym(0.05), sym(0.05), sym(0.05)};
  const double gx = sym(0.2), gy = sym(0.2);
  const double wave_amp = 0.05;
  const double fx = sym(1.5), fy = sym(1.5), phase = unit(rng) * 2.0 * std::numbers::pi;

  std::vector<Rgb> object_colors;
  for (const Placed& obj : placed) {
    const Rgb& c = kClassColors[obj.cls - 1];
    object_colors.push_back({c.r + sym(config.color_jitter), c.g + sym(config.color_jitter),
                             c.b + sym(config.color_jitter)});
  }
  std::vector<int> owner(static_cast<std::size_t>(canvas) * canvas, -1);
  for (std::size_t k = 0; k < placed.size(); ++k) {
    for (std::size_t p : placed[k].pixels) owner[p] = static_cast<int>(k);
  }

  std::normal_distribution<double> noise(0.0, config.noise_sigma);
  SceneSample sample;
  sample.id = std::string(split_name(split)) + "_" + std::to_string(index);
  sample.image = Tensor<float>(Shape{1, 3, canvas, canvas});
  for (int y = 0; y < canvas; ++y) {
    for (int x = 0; x < canvas; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * canvas + x;
      Rgb px;
      if (owner[p] >= 0) {
        px = object_colors[owner[p]];
      } else {
        const double u = (x + 0.5) / canvas - 0.5, v = (y + 0.5) / canvas - 0.5;
        const double bg = base + gx * u + gy * v +
                          wave_amp * std::sin(2.0 * std::numbers::pi * (fx * u + fy * v) + phase);
        px = {bg + tint.r, bg + tint.g, bg + tint.b};
      }
      const double rgb[3] = {px.r, px.g, px.b};
      for (int c = 0; c < 3; ++c) {
        sample.image(0, c, y, x) = static_cast<float>(std::clamp(rgb[c] + noise(rng), 0.0, 1.0));
      }
    }
  }
  sample.mask = std::move(mask);
  sample.label = labels_from_mask(sample.mask, num_fg_classes());
  for (const Placed& obj : placed) sample.object_sizes.push_back(obj.extent);
  return sample;
}

DatasetIndex generate_dataset(const SceneConfig& config, Split split, const fs::path& out_dir,
                              bool force) {
  config.validate();
  std::error_code ec;
  if (fs::exists(out_dir, ec) && !fs::is_empty(out_dir, ec)) {
    if (!force) {
      throw IoError("output directory " + out_dir.string() + " is not empty (use --force)");
    }
    fs::remove_all(out_dir, ec);
    if (ec) throw IoError("cannot clear " + out_dir.string() + ": " + ec.message());
  }
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  DatasetIndex index;
  index.dir = out_dir;
  index.classes = class_catalog();
  index.canvas = config.canvas;
  index.seed = config.seed;
  index.split = split;
  index.generator = config;
  const int count = split == Split::kTrain ? config.train_count : config.eval_count;

  json samples = json::array();
  for (int i = 0; i < count; ++i) {
    SceneSample s = generate_scene(config, i, split);
    if (s.label != labels_from_mask(s.mask, num_fg_classes())) {
      throw std::logic_error("label/mask inconsistency in generated sample " + s.id);
    }
    write_ppm(out_dir / image_name(i), quantize_image(s.image));
    write_pgm(out_dir / mask_name(i), Raster8{s.mask.width, s.mask.height, 1, s.mask.labels});
    index.samples.push_back({image_name(i).string(), mask_name(i).string(), s.label});
    samples.push_back({{"image", image_name(i).string()},
                       {"mask", mask_name(i).string()},
                       {"label", s.label}});
  }

  json doc = {{"version", DatasetIndex::kVersion},
              {"classes", index.classes},
              {"canvas", config.canvas},
              {"seed", config.seed},
              {"split", split_name(split)},
              {"generator", config},
              {"samples", samples}};
  std::ofstream out(out_dir / "index.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (out_dir / "index.json").string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + (out_dir / "index.json").string());
  return index;
}

DatasetIndex load_index(const fs::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw IoError("cannot open " + (dir / "index.json").string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed index.json in " + dir.string() + ": " + e.what());
  }
  try {
    if (doc.at("version").get<int>() != DatasetIndex::kVersion) {
      throw ArtifactMismatch("unsupported dataset index version in " + dir.string());
    }
    DatasetIndex index;
    index.dir = dir;
    index.classes = doc.at("classes").get<std::vector<std::string>>();
    if (index.classes != class_catalog()) {
      throw ArtifactMismatch("dataset class catalog does not match this build");
    }
    index.canvas = doc.at("canvas").get<int>();
    index.seed = doc.at("seed").get<std::uint64_t>();
    index.split = doc.at("split").get<std::string>() == "eval" ? Split::kEval : Split::kTrain;
    index.generator = doc.at("generator").get<SceneConfig>();
    for (const json& s : doc.at("samples")) {
      index.samples.push_back({s.at("image").get<std::string>(), s.at("mask").get<std::string>(),
                               s.at("label").get<std::vector<std::uint8_t>>()});
    }
    return index;
  } catch (const json::exception& e) {
    throw IoError("malformed index.json in " + dir.string() + ": " + e.what());
  }
}

SceneSample load_sample(const DatasetIndex& index, int i) {
  if (i < 0 || i >= index.size()) {
    throw std::out_of_range("load_sample: index " + std::to_string(i) + " outside dataset of " +
                            std::to_string(index.size()));
  }
  const DatasetEntry& e = index.samples[i];
  const Raster8 img = read_ppm(index.dir / e.image);
  const Raster8 msk = read_pgm(index.dir / e.mask);
  if (img.width != index.canvas || img.height != index.canvas || msk.width != index.canvas ||
      msk.height != index.canvas) {
    throw IoError("sample " + std::to_string(i) + " size does not match the index canvas");
  }
  SceneSample s;
  s.id = std::string(split_name(index.split)) + "_" + std::to_string(i);
  s.image = Tensor<float>(Shape{1, 3, img.height, img.width});
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        s.image(0, c, y, x) =
            img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] / 255.0f;
      }
    }
  }
  s.mask.height = msk.height;
  s.mask.width = msk.width;
  s.mask.labels = msk.pixels;
  for (std::uint8_t v : s.mask.labels) {
    if (v >= num_classes()) throw IoError("mask value out of range in " + e.mask);
  }
  s.label = e.label;
  return s;
}

std::vector<SceneSample> load_samples(const DatasetIndex& index) {
  std::vector<SceneSample> out;
  out.reserve(index.samples.size());
  for (int i = 0; i < index.size(); ++i) out.push_back(load_sample(index, i));
  return out;
}

std::vector<double> class_frequencies(const std::vector<SceneSample>& samples) {
  std::vector<double> freq(num_fg_classes(), 0.0);
  if (samples.empty()) return freq;
  for (const SceneSample& s : samples) {
    for (int c = 0; c < num_fg_classes(); ++c) freq[c] += s.label[c];
  }
  for (double& f : freq) f /= static_cast<double>(samples.size());
  return freq;
}

}  // namespace ssecam
