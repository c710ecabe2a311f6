#pragma once

// Layer-wise visual dependency and visually dominant layer selection.

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vihd/trace.hpp"

namespace vihd::vdp {

/// s[l]: mean visual attention mass of layer l over heads and steps.
struct LayerDependencyProfile {
  std::vector<double> scores;

  std::size_t num_layers() const { return scores.size(); }
};

struct AllLayers {
  bool operator==(const AllLayers&) const = default;
};
/// The k individually strongest layers, not necessarily adjacent.
struct IsolatedTopK {
  int k = 1;
  bool operator==(const IsolatedTopK&) const = default;
};
/// The w adjacent layers with the largest mean score.
struct ConsecutiveWindow {
  int width = 1;
  bool operator==(const ConsecutiveWindow&) const = default;
};

using SelectionStrategy = std::variant<AllLayers, IsolatedTopK, ConsecutiveWindow>;

std::string to_string(const SelectionStrategy& strategy);

struct LayerSelection {
  SelectionStrategy strategy = AllLayers{};
  std::vector<int> layers;   // sorted ascending
  std::optional<int> start;  // l*, ConsecutiveWindow only

  bool contains(int layer) const;
  bool operator==(const LayerSelection&) const = default;
};

/// OpenMP kernel; parallel over layers. Throws DegenerateInputError when T = 0.
LayerDependencyProfile dependency_profile(const GenerationRun& run, const TraceMeta& meta);

/// Mean of dependency_profile over runs (the M normal runs of one sample).
LayerDependencyProfile profile_over_runs(std::span<const GenerationRun> runs,
                                         const TraceMeta& meta);

/// Ties go to the smallest window start / layer index.
LayerSelection select_layers(const LayerDependencyProfile& profile,
                             const SelectionStrategy& strategy);

/// Selection covering every layer of an L-layer model.
LayerSelection all_layers(int num_layers);

namespace serial {
// Single-threaded reference, one pass in memory order. Kept for tests and
// the benchmark; results agree with the parallel kernel up to rounding.
LayerDependencyProfile dependency_profile(const GenerationRun& run, const TraceMeta& meta);
}  // namespace serial

}  // namespace vihd::vdp
