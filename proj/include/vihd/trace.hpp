#pragma once

// Trace-bundle domain types and the on-disk bundle format.
//
// A bundle is a directory holding `manifest.json` plus one headerless
// little-endian float32 tensor per run, laid out row-major in
// (step, layer, head, visual-column) order.  Only the attention columns of
// visual tokens are stored.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vihd {

inline constexpr int kBundleFormatVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";

/// Tolerance on individual attention values read from disk.
inline constexpr double kAttentionValueTolerance = 1e-6;
/// Tolerance on the visual mass of one (step, layer, head) row.
inline constexpr double kVisualMassTolerance = 1e-5;

enum class Condition { Normal, Intervened };

const char* to_string(Condition c);
Condition condition_from_string(const std::string& s);

struct TraceMeta {
  std::string model_id;
  int num_layers = 0;
  int num_heads = 0;
  int head_dim = 0;  // informational only
  int input_length = 0;
  std::vector<int> visual_indices;
  std::string query_text;
  std::string image_ref;

  std::size_t num_visual() const { return visual_indices.size(); }
  /// Column position of an input-sequence index inside visual_indices.
  std::optional<std::size_t> visual_column(int input_index) const;

  bool operator==(const TraceMeta&) const = default;
};

struct TensorShape {
  std::size_t steps = 0;
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::size_t visual = 0;

  std::size_t elements() const { return steps * layers * heads * visual; }
  std::size_t bytes() const { return elements() * sizeof(float); }
  bool operator==(const TensorShape&) const = default;
};

/// Dense [T, L, H, |V|] float tensor of attention onto visual tokens.
class AttentionTensor {
 public:
  AttentionTensor() = default;
  explicit AttentionTensor(TensorShape shape);
  AttentionTensor(TensorShape shape, std::vector<float> values);

  const TensorShape& shape() const { return shape_; }
  std::size_t steps() const { return shape_.steps; }
  std::size_t layers() const { return shape_.layers; }
  std::size_t heads() const { return shape_.heads; }
  std::size_t visual() const { return shape_.visual; }

  std::size_t offset(std::size_t t, std::size_t l, std::size_t h, std::size_t v) const {
    return ((t * shape_.layers + l) * shape_.heads + h) * shape_.visual + v;
  }
  float at(std::size_t t, std::size_t l, std::size_t h, std::size_t v) const {
    return values_[offset(t, l, h, v)];
  }
  float& at(std::size_t t, std::size_t l, std::size_t h, std::size_t v) {
    return values_[offset(t, l, h, v)];
  }
  /// The |V| visual columns of one (step, layer, head) attention row.
  std::span<const float> row(std::size_t t, std::size_t l, std::size_t h) const {
    return {values_.data() + offset(t, l, h, 0), shape_.visual};
  }
  std::span<float> row(std::size_t t, std::size_t l, std::size_t h) {
    return {values_.data() + offset(t, l, h, 0), shape_.visual};
  }

  std::span<const float> values() const { return values_; }

  /// Bitwise comparison: shapes equal and every float has identical bits.
  bool operator==(const AttentionTensor& other) const;

 private:
  TensorShape shape_;
  std::vector<float> values_;
};

struct GenerationRun {
  std::string run_id;
  Condition condition = Condition::Normal;
  std::string response_text;
  std::vector<std::int32_t> response_tokens;
  AttentionTensor attention;
  /// Bundle-relative path of the mask plan; required for intervened runs.
  std::optional<std::string> mask_plan_ref;

  std::size_t steps() const { return response_tokens.size(); }
  bool operator==(const GenerationRun&) const = default;
};

struct SampleBundle {
  std::string sample_id;
  TraceMeta meta;
  std::vector<GenerationRun> normal_runs;
  std::vector<GenerationRun> intervened_runs;

  bool operator==(const SampleBundle&) const = default;
};

// Validation throws ValidationError (or ShapeError) naming the field.
void validate(const TraceMeta& meta);
void validate(const GenerationRun& run, const TraceMeta& meta);
void validate(const SampleBundle& bundle);

/// Writes `dir/manifest.json` and one `<run_id>.f32` per run.
void write_bundle(const SampleBundle& bundle, const std::filesystem::path& dir);
SampleBundle read_bundle(const std::filesystem::path& dir);

/// Raw tensor payload helpers (little-endian float32, no header).
std::vector<std::byte> encode_tensor(const AttentionTensor& tensor);
AttentionTensor decode_tensor(std::span<const std::byte> bytes, TensorShape shape,
                              const std::string& run_id);

}  // namespace vihd
