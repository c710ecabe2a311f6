#pragma once

// Attention-guided visual-token masking: mask counts, per-step mask plans,
// the mask-plan interchange file, and compliance checking of intervened runs.
//
// Masking contract shared with decoders: a masked visual key gets logit -inf
// in every selected layer at that step, so the softmax renormalizes over the
// remaining keys and the masked column carries zero attention.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vihd/trace.hpp"
#include "vihd/vdp.hpp"

namespace vihd::vid {

enum class MaskStrategy { HighAttention, LowAttention, Random };

const char* to_string(MaskStrategy s);
MaskStrategy mask_strategy_from_string(const std::string& s);

struct MaskPolicy {
  MaskStrategy strategy = MaskStrategy::HighAttention;
  double ratio = 0.10;
  vdp::LayerSelection layers;
  std::uint64_t seed = 0;  // Random only

  void validate(int num_layers) const;
};

struct MaskStep {
  int t = 0;
  std::vector<int> masked;  // input-sequence indices, sorted, subset of visual_indices

  bool operator==(const MaskStep&) const = default;
};

struct MaskPlan {
  std::string sample_id;
  std::vector<int> layers;
  double ratio = 0.0;
  MaskStrategy strategy = MaskStrategy::HighAttention;
  std::uint64_t seed = 0;
  std::vector<MaskStep> steps;

  bool operator==(const MaskPlan&) const = default;
};

/// k = max(1, ceil(ratio * V)), capped at V.
std::size_t mask_count(double ratio, std::size_t num_visual);

/// Head-mean attention per visual column at step t, averaged over the
/// selected layers.
std::vector<double> step_attention(const GenerationRun& run, std::size_t t,
                                   const vdp::LayerSelection& layers);

/// Column positions (0..V-1, sorted) to mask for one step.
///   HighAttention: k largest, ties to the smaller column.
///   LowAttention:  k smallest, ties to the smaller column.
///   Random:        uniform k-subset drawn from (seed, t).
std::vector<std::size_t> select_columns(std::span<const double> attention, std::size_t k,
                                        MaskStrategy strategy, std::uint64_t seed, std::size_t t);

/// Replays the policy over every step of a recorded run.
MaskPlan build_mask_plan(const GenerationRun& run, const TraceMeta& meta,
                         const MaskPolicy& policy, const std::string& sample_id = {});

struct Violation {
  int t = 0;
  int layer = 0;
  int visual_index = 0;  // input-sequence index
  float attention = 0.0f;  // largest over heads
};

struct ComplianceReport {
  std::string run_id;
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
};

/// Lists every (step, plan layer, masked index) whose recorded attention
/// exceeds tol on any head.
ComplianceReport verify_mask_plan_compliance(const GenerationRun& intervened,
                                             const TraceMeta& meta, const MaskPlan& plan,
                                             double tol);

nlohmann::json to_json(const MaskPlan& plan);
MaskPlan mask_plan_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ComplianceReport& report);

void write_mask_plan(const MaskPlan& plan, const std::filesystem::path& path);
MaskPlan read_mask_plan(const std::filesystem::path& path);

}  // namespace vihd::vid
