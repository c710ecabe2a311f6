#include "vihd/trace.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "vihd/error.hpp"

namespace vihd {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

bool is_safe_filename(const std::string& name) {
  if (name.empty() || name.front() == '.') return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '-' || c == '.';
  });
}

std::uint32_t byteswap32(std::uint32_t x) {
  return (x >> 24) | ((x >> 8) & 0x0000FF00u) | ((x << 8) & 0x00FF0000u) | (x << 24);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw IoError("short write to " + path.string());
}

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + ": field '" + key + "' has the wrong type");
  }
}

// Range check shared by write (invariant) and read (rejection rule).
void check_values(const GenerationRun& run) {
  const auto& a = run.attention;
  for (std::size_t t = 0; t < a.steps(); ++t) {
    for (std::size_t l = 0; l < a.layers(); ++l) {
      for (std::size_t h = 0; h < a.heads(); ++h) {
        double mass = 0.0;
        for (float x : a.row(t, l, h)) {
          if (!std::isfinite(x) || x < -kAttentionValueTolerance ||
              x > 1.0 + kAttentionValueTolerance) {
            throw ValidationError("run '" + run.run_id + "': attention value " +
                                  std::to_string(x) + " outside [0,1] at step " +
                                  std::to_string(t) + ", layer " + std::to_string(l) +
                                  ", head " + std::to_string(h));
          }
          mass += x;
        }
        if (mass > 1.0 + kVisualMassTolerance) {
          throw ValidationError("run '" + run.run_id + "': visual attention mass " +
                                std::to_string(mass) + " exceeds 1 at step " + std::to_string(t) +
                                ", layer " + std::to_string(l) + ", head " + std::to_string(h));
        }
      }
    }
  }
}

}  // namespace

const char* to_string(Condition c) {
  return c == Condition::Normal ? "normal" : "intervened";
}

Condition condition_from_string(const std::string& s) {
  if (s == "normal") return Condition::Normal;
  if (s == "intervened") return Condition::Intervened;
  throw ValidationError("unknown run condition '" + s + "'");
}

std::optional<std::size_t> TraceMeta::visual_column(int input_index) const {
  auto it = std::lower_bound(visual_indices.begin(), visual_indices.end(), input_index);
  if (it == visual_indices.end() || *it != input_index) return std::nullopt;
  return static_cast<std::size_t>(it - visual_indices.begin());
}

AttentionTensor::AttentionTensor(TensorShape shape)
    : shape_(shape), values_(shape.elements(), 0.0f) {}

AttentionTensor::AttentionTensor(TensorShape shape, std::vector<float> values)
    : shape_(shape), values_(std::move(values)) {
  if (values_.size() != shape_.elements()) {
    throw ShapeError("attention tensor: " + std::to_string(values_.size()) +
                     " values for shape of " + std::to_string(shape_.elements()));
  }
}

bool AttentionTensor::operator==(const AttentionTensor& other) const {
  return shape_ == other.shape_ &&
         (values_.empty() ||
          std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(float)) == 0);
}

void validate(const TraceMeta& meta) {
  if (meta.num_layers < 1) throw ValidationError("num_layers must be >= 1");
  if (meta.num_heads < 1) throw ValidationError("num_heads must be >= 1");
  if (meta.head_dim < 1) throw ValidationError("head_dim must be >= 1");
  if (meta.input_length < 1) throw ValidationError("input_length must be >= 1");
  if (meta.visual_indices.empty()) throw ValidationError("visual_indices must be non-empty");
  for (std::size_t i = 0; i < meta.visual_indices.size(); ++i) {
    const int v = meta.visual_indices[i];
    if (v < 0 || v >= meta.input_length) {
      throw ValidationError("visual_indices: " + std::to_string(v) + " outside [0, input_length)");
    }
    if (i > 0 && v <= meta.visual_indices[i - 1]) {
      throw ValidationError("visual_indices must be strictly increasing");
    }
  }
}

void validate(const GenerationRun& run, const TraceMeta& meta) {
  if (!is_safe_filename(run.run_id)) {
    throw ValidationError("run_id '" + run.run_id + "' is not a plain file name");
  }
  const TensorShape& s = run.attention.shape();
  if (s.steps != run.response_tokens.size()) {
    throw ShapeError("run '" + run.run_id + "': attention has " + std::to_string(s.steps) +
                     " steps but response_tokens has " +
                     std::to_string(run.response_tokens.size()));
  }
  if (s.layers != static_cast<std::size_t>(meta.num_layers) ||
      s.heads != static_cast<std::size_t>(meta.num_heads) || s.visual != meta.num_visual()) {
    throw ShapeError("run '" + run.run_id + "': attention shape disagrees with meta (L, H, |V|)");
  }
  if (run.condition == Condition::Intervened && !run.mask_plan_ref) {
    throw ValidationError("run '" + run.run_id + "': mask_plan_ref required for intervened runs");
  }
  if (run.condition == Condition::Normal && run.mask_plan_ref) {
    throw ValidationError("run '" + run.run_id + "': mask_plan_ref only allowed on intervened runs");
  }
  check_values(run);
}

void validate(const SampleBundle& bundle) {
  if (!is_safe_filename(bundle.sample_id)) {
    throw ValidationError("sample_id '" + bundle.sample_id + "' is not a plain file name");
  }
  validate(bundle.meta);
  std::vector<std::string> ids;
  for (const auto& run : bundle.normal_runs) {
    if (run.condition != Condition::Normal) {
      throw ValidationError("normal_runs: run '" + run.run_id + "' is not a normal run");
    }
    validate(run, bundle.meta);
    ids.push_back(run.run_id);
  }
  for (const auto& run : bundle.intervened_runs) {
    if (run.condition != Condition::Intervened) {
      throw ValidationError("intervened_runs: run '" + run.run_id + "' is not an intervened run");
    }
    validate(run, bundle.meta);
    ids.push_back(run.run_id);
  }
  std::sort(ids.begin(), ids.end());
  if (auto dup = std::adjacent_find(ids.begin(), ids.end()); dup != ids.end()) {
    throw ValidationError("duplicate run_id '" + *dup + "'");
  }
}

std::vector<std::byte> encode_tensor(const AttentionTensor& tensor) {
  const auto values = tensor.values();
  std::vector<std::byte> out(values.size() * sizeof(float));
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(values[i]);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
    std::memcpy(out.data() + i * sizeof(float), &bits, sizeof(bits));
  }
  return out;
}

AttentionTensor decode_tensor(std::span<const std::byte> bytes, TensorShape shape,
                              const std::string& run_id) {
  if (bytes.size() != shape.bytes()) {
    throw ShapeError("run '" + run_id + "': tensor payload is " + std::to_string(bytes.size()) +
                     " bytes, manifest shape requires " + std::to_string(shape.bytes()));
  }
  std::vector<float> values(shape.elements());
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes.data() + i * sizeof(float), sizeof(bits));
    if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
    values[i] = std::bit_cast<float>(bits);
  }
  return AttentionTensor(shape, std::move(values));
}

void write_bundle(const SampleBundle& bundle, const fs::path& dir) {
  validate(bundle);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const TraceMeta& m = bundle.meta;
  json manifest = {
      {"format_version", kBundleFormatVersion},
      {"sample_id", bundle.sample_id},
      {"model_id", m.model_id},
      {"num_layers", m.num_layers},
      {"num_heads", m.num_heads},
      {"head_dim", m.head_dim},
      {"input_length", m.input_length},
      {"visual_indices", m.visual_indices},
      {"query_text", m.query_text},
      {"image_ref", m.image_ref},
  };
  json runs = json::array();
  auto emit = [&](const GenerationRun& run) {
    const std::string tensor_file = run.run_id + ".f32";
    const auto& s = run.attention.shape();
    json entry = {
        {"run_id", run.run_id},
        {"condition", to_string(run.condition)},
        {"response_text", run.response_text},
        {"response_tokens", run.response_tokens},
        {"tensor_file", tensor_file},
        {"shape", {s.steps, s.layers, s.heads, s.visual}},
    };
    if (run.mask_plan_ref) entry["mask_plan_ref"] = *run.mask_plan_ref;
    runs.push_back(std::move(entry));
    const auto payload = encode_tensor(run.attention);
    write_file(dir / tensor_file, payload.data(), payload.size());
  };
  for (const auto& run : bundle.normal_runs) emit(run);
  for (const auto& run : bundle.intervened_runs) emit(run);
  manifest["runs"] = std::move(runs);

  const std::string text = manifest.dump(2) + "\n";
  write_file(dir / kManifestName, text.data(), text.size());
}

SampleBundle read_bundle(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestName;
  if (!fs::exists(manifest_path)) throw IoError("missing " + manifest_path.string());

  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw ValidationError(manifest_path.string() + ": " + e.what());
  }
  if (!manifest.is_object()) throw ValidationError("manifest must be a JSON object");
  const std::string where = "manifest";
  const int version = field<int>(manifest, "format_version", where);
  if (version != kBundleFormatVersion) {
    throw ValidationError("unsupported format_version " + std::to_string(version));
  }

  SampleBundle bundle;
  bundle.sample_id = field<std::string>(manifest, "sample_id", where);
  TraceMeta& m = bundle.meta;
  m.model_id = field<std::string>(manifest, "model_id", where);
  m.num_layers = field<int>(manifest, "num_layers", where);
  m.num_heads = field<int>(manifest, "num_heads", where);
  m.head_dim = field<int>(manifest, "head_dim", where);
  m.input_length = field<int>(manifest, "input_length", where);
  m.visual_indices = field<std::vector<int>>(manifest, "visual_indices", where);
  m.query_text = field<std::string>(manifest, "query_text", where);
  m.image_ref = field<std::string>(manifest, "image_ref", where);
  validate(m);

  const json runs = field<json>(manifest, "runs", where);
  if (!runs.is_array()) throw ValidationError("manifest: 'runs' must be an array");
  for (const auto& entry : runs) {
    GenerationRun run;
    run.run_id = field<std::string>(entry, "run_id", "run entry");
    const std::string rwhere = "run '" + run.run_id + "'";
    run.condition = condition_from_string(field<std::string>(entry, "condition", rwhere));
    run.response_text = field<std::string>(entry, "response_text", rwhere);
    run.response_tokens = field<std::vector<std::int32_t>>(entry, "response_tokens", rwhere);
    if (entry.contains("mask_plan_ref") && !entry.at("mask_plan_ref").is_null()) {
      run.mask_plan_ref = field<std::string>(entry, "mask_plan_ref", rwhere);
    }
    const auto tensor_file = field<std::string>(entry, "tensor_file", rwhere);
    if (!is_safe_filename(tensor_file)) {
      throw ValidationError(rwhere + ": tensor_file must be a plain file name");
    }
    const auto dims = field<std::vector<std::int64_t>>(entry, "shape", rwhere);
    if (dims.size() != 4 || std::any_of(dims.begin(), dims.end(), [](auto d) { return d < 0; })) {
      throw ShapeError(rwhere + ": shape must be four non-negative integers [T,L,H,V]");
    }
    const TensorShape shape{static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1]),
                            static_cast<std::size_t>(dims[2]), static_cast<std::size_t>(dims[3])};
    const fs::path tensor_path = dir / tensor_file;
    if (!fs::exists(tensor_path)) throw IoError(rwhere + ": missing " + tensor_path.string());
    const std::string payload = read_file(tensor_path);
    run.attention = decode_tensor(
        std::span(reinterpret_cast<const std::byte*>(payload.data()), payload.size()), shape,
        run.run_id);

    if (run.condition == Condition::Normal) {
      bundle.normal_runs.push_back(std::move(run));
    } else {
      bundle.intervened_runs.push_back(std::move(run));
    }
  }
  validate(bundle);
  return bundle;
}

}  // namespace vihd
