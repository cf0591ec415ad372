#include "ssecam/config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <type_traits>

#include "ssecam/errors.hpp"

namespace ssecam {

using nlohmann::json;

namespace {

template <typename T>
struct is_vector : std::false_type {};
template <typename T>
struct is_vector<std::vector<T>> : std::true_type {};

[[noreturn]] void bad_type(const std::string& where, const char* expected) {
  throw ConfigError(where + ": expected " + expected);
}

template <typename T>
T convert(const json& v, const std::string& where) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) bad_type(where, "a boolean");
    return v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::uint64_t>) {
    if (!v.is_number_unsigned()) bad_type(where, "a non-negative integer");
    return v.get<std::uint64_t>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) bad_type(where, "an integer");
    const std::int64_t x = v.get<std::int64_t>();
    if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(
                                                               std::numeric_limits<T>::max())) {
      bad_type(where, "an integer in range");
    }
    if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max()) {
      bad_type(where, "an integer in range");
    }
    return static_cast<T>(x);
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) bad_type(where, "a number");
    return v.get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) bad_type(where, "a string");
    return v.get<std::string>();
  } else if constexpr (is_vector<T>::value) {
    if (!v.is_array()) bad_type(where, "an array");
    T out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back(convert<typename T::value_type>(v[i], where + "[" + std::to_string(i) + "]"));
    }
    return out;
  } else {
    return v.get<T>();
  }
}

// Reads the keys it is asked for and rejects everything else.
class StrictObject {
 public:
  StrictObject(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError(section_ + " must be a JSON object");
  }

  template <typename T>
  StrictObject& get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it != j_.end()) out = convert<T>(*it, section_ + "." + key);
    return *this;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown key '" + section_ + "." + item.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> seen_;
};

// Collects the JSON-pointer paths of every non-object value whose key is `leaf`.
void find_leaf(const json& node, const std::string& prefix, const std::string& leaf,
               std::vector<std::string>& hits) {
  for (const auto& item : node.items()) {
    const std::string path = prefix + "/" + item.key();
    if (item.value().is_object()) {
      find_leaf(item.value(), path, leaf, hits);
    } else if (item.key() == leaf) {
      hits.push_back(path);
    }
  }
}

}  // namespace

void to_json(json& j, const SceneConfig& c) {
  j = json{{"canvas", c.canvas},           {"objects_min", c.objects_min},
           {"objects_max", c.objects_max}, {"size_min", c.size_min},
           {"size_max", c.size_max},       {"color_jitter", c.color_jitter},
           {"noise_sigma", c.noise_sigma}, {"train_count", c.train_count},
           {"eval_count", c.eval_count},   {"seed", c.seed}};
}

void from_json(const json& j, SceneConfig& c) {
  StrictObject o(j, "scene");
  o.get("canvas", c.canvas)
      .get("objects_min", c.objects_min)
      .get("objects_max", c.objects_max)
      .get("size_min", c.size_min)
      .get("size_max", c.size_max)
      .get("color_jitter", c.color_jitter)
      .get("noise_sigma", c.noise_sigma)
      .get("train_count", c.train_count)
      .get("eval_count", c.eval_count)
      .get("seed", c.seed);
  o.finish();
}

void to_json(json& j, const BackboneConfig& c) {
  j = json{{"in_channels", c.in_channels},       {"widths", c.widths},
           {"num_fg_classes", c.num_fg_classes}, {"stride2_layers", c.stride2_layers},
           {"dilated_layers", c.dilated_layers}, {"input_mean", c.input_mean},
           {"input_std", c.input_std}};
}

void from_json(const json& j, BackboneConfig& c) {
  StrictObject o(j, "backbone");
  o.get("in_channels", c.in_channels)
      .get("widths", c.widths)
      .get("num_fg_classes", c.num_fg_classes)
      .get("stride2_layers", c.stride2_layers)
      .get("dilated_layers", c.dilated_layers)
      .get("input_mean", c.input_mean)
      .get("input_std", c.input_std);
  o.finish();
}

void to_json(json& j, const OptimizerConfig& c) {
  j = json{{"lr_init", c.lr_init},
           {"gamma", c.gamma},
           {"momentum", c.momentum},
           {"weight_decay", c.weight_decay}};
}

void from_json(const json& j, OptimizerConfig& c) {
  StrictObject o(j, "optimizer");
  o.get("lr_init", c.lr_init)
      .get("gamma", c.gamma)
      .get("momentum", c.momentum)
      .get("weight_decay", c.weight_decay);
  o.finish();
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"eta", c.eta},
           {"branch_rate", c.branch_rate},
           {"batch_size", c.batch_size},
           {"epochs", c.epochs},
           {"optimizer", c.optimizer}};
}

void from_json(const json& j, TrainConfig& c) {
  StrictObject o(j, "train");
  o.get("eta", c.eta)
      .get("branch_rate", c.branch_rate)
      .get("batch_size", c.batch_size)
      .get("epochs", c.epochs)
      .get("optimizer", c.optimizer);
  o.finish();
}

void to_json(json& j, const AugmentConfig& c) {
  j = json{{"rescale_min", c.rescale_min},
           {"rescale_max", c.rescale_max},
           {"crop", c.crop},
           {"hflip_prob", c.hflip_prob}};
}

void from_json(const json& j, AugmentConfig& c) {
  StrictObject o(j, "augment");
  o.get("rescale_min", c.rescale_min)
      .get("rescale_max", c.rescale_max)
      .get("crop", c.crop)
      .get("hflip_prob", c.hflip_prob);
  o.finish();
}

void to_json(json& j, const BackgroundConfig& c) {
  j = json{{"alpha", c.alpha}, {"epsilon", c.epsilon}};
}

void from_json(const json& j, BackgroundConfig& c) {
  StrictObject o(j, "background");
  o.get("alpha", c.alpha).get("epsilon", c.epsilon);
  o.finish();
}

void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"scene", c.scene},
           {"backbone", c.backbone},
           {"train", c.train},
           {"augment", c.augment},
           {"background", c.background},
           {"test_scales", c.test_scales},
           {"flip", c.flip},
           {"filter_labels", c.filter_labels},
           {"seeds", c.seeds},
           {"out_dir", c.out_dir},
           {"threads", c.threads}};
}

void from_json(const json& j, ExperimentConfig& c) {
  StrictObject o(j, "config");
  o.get("scene", c.scene)
      .get("backbone", c.backbone)
      .get("train", c.train)
      .get("augment", c.augment)
      .get("background", c.background)
      .get("test_scales", c.test_scales)
      .get("flip", c.flip)
      .get("filter_labels", c.filter_labels)
      .get("seeds", c.seeds)
      .get("out_dir", c.out_dir)
      .get("threads", c.threads);
  o.finish();
}

void ExperimentConfig::validate() const {
  try {
    scene.validate();
    backbone.validate();
    augment.validate();
    train.validate(augment);
    background.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (backbone.num_fg_classes != num_fg_classes()) {
    throw ConfigError("backbone.num_fg_classes must equal the " + std::to_string(num_fg_classes()) +
                      " foreground classes of the scene catalog");
  }
  if (backbone.in_channels != 3) throw ConfigError("backbone.in_channels must be 3 for RGB scenes");
  if (augment.crop > scene.canvas) throw ConfigError("augment.crop must not exceed scene.canvas");
  if (test_scales.empty()) throw ConfigError("test_scales must be non-empty");
  for (double s : test_scales) {
    try {
      scaled_input_size(scene.canvas, s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("test_scales: ") + e.what());
    }
  }
  if (seeds.empty()) throw ConfigError("seeds must be non-empty");
  if (threads < 1) throw ConfigError("threads must be positive");
}

ExperimentConfig parse_experiment_config(const json& doc) {
  ExperimentConfig c;
  try {
    from_json(doc, c);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.train.threads = c.threads;
  c.train.seed = c.seeds.empty() ? 0 : c.seeds.front();
  c.validate();
  return c;
}

namespace {

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

}  // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  if (path.empty()) return parse_experiment_config(json::object());
  return parse_experiment_config(read_json_file(path));
}

void apply_override(json& doc, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");

  if (key == "rescale_range" || key == "augment.rescale_range") {
    if (!value.is_array() || value.size() != 2) {
      throw ConfigError("rescale_range expects [min, max]");
    }
    doc["augment"]["rescale_min"] = value[0];
    doc["augment"]["rescale_max"] = value[1];
    return;
  }

  std::string pointer;
  if (key.find('.') != std::string::npos) {
    pointer = "/" + key;
    for (char& ch : pointer) {
      if (ch == '.') ch = '/';
    }
  } else {
    json defaults;
    to_json(defaults, ExperimentConfig{});
    std::vector<std::string> hits;
    find_leaf(defaults, "", key, hits);
    if (hits.empty()) throw ConfigError("unknown config key '" + key + "'");
    if (hits.size() > 1) throw ConfigError("config key '" + key + "' is ambiguous; use a dotted path");
    pointer = hits.front();
  }
  try {
    doc[json::json_pointer(pointer)] = value;
  } catch (const json::exception& e) {
    throw ConfigError("cannot apply override '" + assignment + "': " + e.what());
  }
}

ExperimentConfig resolve_config(const std::filesystem::path& path,
                                const std::vector<std::string>& overrides) {
  json doc = path.empty() ? json::object() : read_json_file(path);
  for (const std::string& o : overrides) apply_override(doc, o);
  return parse_experiment_config(doc);
}

void write_resolved_config(const ExperimentConfig& config, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  json doc;
  to_json(doc, config);
  std::ofstream out(dir / "config.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "config.json").string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + (dir / "config.json").string());
}

}  // namespace ssecam
