#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "ssecam/config.hpp"
#include "ssecam/errors.hpp"
#include "ssecam/training.hpp"

namespace ssecam {

using nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kBlob = "params.bin";

void put_le32(std::string& out, float v) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

float get_le32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return std::bit_cast<float>(bits);
}

json shape_json(const Shape& s) { return json::array({s.n, s.c, s.h, s.w}); }

}  // namespace

void save_checkpoint(const ModelParams<float>& params, const CheckpointMeta& meta,
                     const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const std::vector<Tensor<float>> tensors = params.tensors();
  const std::vector<std::string> names = params.tensor_names();
  std::string blob;
  blob.reserve(params.parameter_count() * 4);
  json entries = json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const Tensor<float>& t = tensors[i];
    t.ensure_finite("save_checkpoint");
    for (std::size_t k = 0; k < t.numel(); ++k) put_le32(blob, t[k]);
    entries.push_back(
        {{"name", names[i]}, {"shape", shape_json(t.shape())}, {"offset", offset}, {"count", t.numel()}});
    offset += t.numel();
  }

  const json manifest = {{"version", kCheckpointVersion},
                         {"name", meta.name},
                         {"seed", meta.train.seed},
                         {"backbone", meta.backbone},
                         {"train", meta.train},
                         {"augment", meta.augment},
                         {"tensors", entries},
                         {"blob", kBlob},
                         {"blob_bytes", blob.size()}};

  std::ofstream bin(dir / kBlob, std::ios::binary | std::ios::trunc);
  if (!bin) throw IoError("cannot write " + (dir / kBlob).string());
  bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!bin) throw IoError("write failed for " + (dir / kBlob).string());

  std::ofstream out(dir / kManifest, std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / kManifest).string());
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + (dir / kManifest).string());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifest);
  if (!in) throw IoError("cannot open " + (dir / kManifest).string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint manifest: " + std::string(e.what()));
  }

  Checkpoint ck;
  std::vector<Shape> shapes;
  std::vector<std::size_t> offsets;
  std::size_t blob_bytes = 0;
  try {
    if (manifest.at("version").get<int>() != kCheckpointVersion) {
      throw ArtifactMismatch("checkpoint format version " + manifest.at("version").dump() +
                             " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    ck.meta.name = manifest.at("name").get<std::string>();
    ck.meta.backbone = manifest.at("backbone").get<BackboneConfig>();
    ck.meta.train = manifest.at("train").get<TrainConfig>();
    ck.meta.train.seed = manifest.at("seed").get<std::uint64_t>();
    ck.meta.augment = manifest.at("augment").get<AugmentConfig>();
    blob_bytes = manifest.at("blob_bytes").get<std::size_t>();

    ck.meta.backbone.validate();
    const ModelParams<float> expected = init_params<float>(ck.meta.backbone, 0);
    const std::vector<Tensor<float>> ref = expected.tensors();
    const std::vector<std::string> ref_names = expected.tensor_names();
    const json& entries = manifest.at("tensors");
    if (entries.size() != ref.size()) {
      throw ArtifactMismatch("checkpoint lists " + std::to_string(entries.size()) +
                             " tensors, backbone expects " + std::to_string(ref.size()));
    }
    std::size_t offset = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const json& e = entries[i];
      const auto dims = e.at("shape").get<std::vector<int>>();
      if (dims.size() != 4) throw ArtifactMismatch("checkpoint tensor shape must have 4 dims");
      const Shape s{dims[0], dims[1], dims[2], dims[3]};
      if (e.at("name").get<std::string>() != ref_names[i] || !(s == ref[i].shape())) {
        throw ArtifactMismatch("checkpoint tensor " + std::to_string(i) + " (" +
                               e.at("name").get<std::string>() + " " + s.str() +
                               ") does not match backbone (" + ref_names[i] + " " +
                               ref[i].shape().str() + ")");
      }
      if (e.at("offset").get<std::size_t>() != offset || e.at("count").get<std::size_t>() != s.numel()) {
        throw ArtifactMismatch("checkpoint tensor " + ref_names[i] + " has an inconsistent offset");
      }
      shapes.push_back(s);
      offsets.push_back(offset);
      offset += s.numel();
    }
    if (blob_bytes != offset * 4) {
      throw ArtifactMismatch("checkpoint blob_bytes disagrees with the tensor table");
    }
    ck.params = expected;
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint manifest: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw ArtifactMismatch("checkpoint config rejected: " + std::string(e.what()));
  } catch (const std::invalid_argument& e) {
    throw ArtifactMismatch("checkpoint config rejected: " + std::string(e.what()));
  }

  std::ifstream bin(dir / kBlob, std::ios::binary);
  if (!bin) throw IoError("cannot open " + (dir / kBlob).string());
  std::string blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (blob.size() != blob_bytes) {
    throw IoError("checkpoint blob " + (dir / kBlob).string() + " is truncated or oversized (" +
                  std::to_string(blob.size()) + " bytes, expected " + std::to_string(blob_bytes) + ")");
  }

  // Fresh storage for every tensor; nothing is shared with `expected`'s init values.
  std::vector<Tensor<float>> handles = ck.params.tensors();
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  for (std::size_t i = 0; i < handles.size(); ++i) {
    Tensor<float>& t = handles[i];
    for (std::size_t k = 0; k < t.numel(); ++k) t[k] = get_le32(bytes + 4 * (offsets[i] + k));
    t.ensure_finite("load_checkpoint");
  }
  return ck;
}

}  // namespace ssecam
