#pragma once

// Deterministic stand-in for a vision-language decoder with controllable
// visual grounding. It emits single-answer-token runs with real attention
// traces and honors live mask policies, so the detection pipeline can be
// exercised end to end without a model.
//
// Generative contract:
//  * Layers in `window_layers` put all their attention on visual tokens:
//    fraction g spread uniformly over the evidence set E, 1 - g uniformly
//    over the other visual tokens. Masked tokens are dropped and the rest
//    renormalized. If every visual token of such a layer is masked, its
//    attention moves uniformly to the text positions.
//  * Every other layer attends uniformly to all unmasked input positions.
//  * With m the masked share of E (scaled by the share of window layers the
//    policy covers), g' = g (1 - m) and P(answer) = 0.5 + 0.5 g',
//    P(distractor) = 0.5 - 0.5 g'. The answer is drawn by the sampler on
//    logits log P / temperature.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vihd/sampling.hpp"
#include "vihd/trace.hpp"
#include "vihd/vid.hpp"

namespace vihd::toy {

inline constexpr std::int32_t kAnswerToken = 0;
inline constexpr std::int32_t kDistractorToken = 1;

struct ToySpec {
  std::string sample_id;
  int num_layers = 1;
  int num_heads = 1;
  int head_dim = 64;
  int input_length = 1;
  std::vector<int> visual_indices;
  std::vector<int> evidence;  // subset of visual_indices
  double grounding = 0.0;
  std::string answer;
  std::string distractor;
  std::vector<int> window_layers;
  std::uint64_t rng_seed = 0;
  std::string query_text;
  std::string image_ref;
  /// GREEN label carried through for evaluation; not used by generation.
  std::optional<double> green;
};

void validate(const ToySpec& spec);
TraceMeta make_meta(const ToySpec& spec);

struct ToyRun {
  GenerationRun run;
  std::optional<vid::MaskPlan> plan;  // recorded live, intervened runs only
  double answer_probability = 0.0;    // P(answer) at the answer step
};

/// Generates one run. `stream` selects an independent random stream under
/// spec.rng_seed; the same (spec, sampler, policy, stream) gives the same run.
ToyRun generate(const ToySpec& spec, const sampling::SamplerConfig& sampler,
                const std::optional<vid::MaskPolicy>& policy, const std::string& run_id,
                std::uint64_t stream);

/// g' for a given set of masked visual columns applied in `masked_layers`.
double effective_grounding(const ToySpec& spec, const std::vector<std::size_t>& masked_columns,
                           const std::vector<int>& masked_layers);

nlohmann::json to_json(const ToySpec& spec);
ToySpec spec_from_json(const nlohmann::json& j);

/// Scenario file: a JSON array of ToySpec records.
std::vector<ToySpec> read_scenario(const std::filesystem::path& path);
void write_scenario(const std::vector<ToySpec>& specs, const std::filesystem::path& path);

}  // namespace vihd::toy
