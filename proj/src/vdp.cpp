#include "vihd/vdp.hpp"

#include <algorithm>
#include <numeric>

#include "vihd/error.hpp"

namespace vihd::vdp {

namespace {

void check_shape(const GenerationRun& run, const TraceMeta& meta) {
  const auto& s = run.attention.shape();
  if (s.layers != static_cast<std::size_t>(meta.num_layers) ||
      s.heads != static_cast<std::size_t>(meta.num_heads) || s.visual != meta.num_visual()) {
    throw ShapeError("run '" + run.run_id + "': attention shape disagrees with meta");
  }
  if (s.steps == 0) {
    throw DegenerateInputError("run '" + run.run_id + "': empty generation (T = 0)");
  }
}

}  // namespace

std::string to_string(const SelectionStrategy& strategy) {
  struct Visitor {
    std::string operator()(const AllLayers&) const { return "all"; }
    std::string operator()(const IsolatedTopK& s) const {
      return "isolated(" + std::to_string(s.k) + ")";
    }
    std::string operator()(const ConsecutiveWindow& s) const {
      return "consecutive(" + std::to_string(s.width) + ")";
    }
  };
  return std::visit(Visitor{}, strategy);
}

bool LayerSelection::contains(int layer) const {
  return std::binary_search(layers.begin(), layers.end(), layer);
}

LayerDependencyProfile dependency_profile(const GenerationRun& run, const TraceMeta& meta) {
  check_shape(run, meta);
  const AttentionTensor& a = run.attention;
  const auto steps = static_cast<long>(a.steps());
  const auto layers = static_cast<long>(a.layers());
  const auto heads = static_cast<long>(a.heads());
  const double norm = 1.0 / static_cast<double>(heads * steps);

  LayerDependencyProfile profile;
  profile.scores.assign(static_cast<std::size_t>(layers), 0.0);
  double* scores = profile.scores.data();

#pragma omp parallel for schedule(static) if (a.values().size() > 1 << 15)
  for (long l = 0; l < layers; ++l) {
    double sum = 0.0;
    for (long t = 0; t < steps; ++t) {
      for (long h = 0; h < heads; ++h) {
        for (float x : a.row(t, l, h)) sum += x;
      }
    }
    scores[l] = sum * norm;
  }
  return profile;
}

namespace serial {

LayerDependencyProfile dependency_profile(const GenerationRun& run, const TraceMeta& meta) {
  check_shape(run, meta);
  const AttentionTensor& a = run.attention;
  std::vector<double> sums(a.layers(), 0.0);
  const auto values = a.values();
  const std::size_t per_layer = a.heads() * a.visual();
  for (std::size_t i = 0; i < values.size(); ++i) {
    sums[(i / per_layer) % a.layers()] += values[i];
  }
  const double norm = 1.0 / static_cast<double>(a.heads() * a.steps());
  for (double& s : sums) s *= norm;
  return {std::move(sums)};
}

}  // namespace serial

LayerDependencyProfile profile_over_runs(std::span<const GenerationRun> runs,
                                         const TraceMeta& meta) {
  if (runs.empty()) throw DegenerateInputError("profile_over_runs: no runs");
  LayerDependencyProfile mean;
  mean.scores.assign(static_cast<std::size_t>(meta.num_layers), 0.0);
  for (const auto& run : runs) {
    const auto p = dependency_profile(run, meta);
    for (std::size_t l = 0; l < p.scores.size(); ++l) mean.scores[l] += p.scores[l];
  }
  for (double& s : mean.scores) s /= static_cast<double>(runs.size());
  return mean;
}

LayerSelection all_layers(int num_layers) {
  LayerSelection sel;
  sel.strategy = AllLayers{};
  sel.layers.resize(static_cast<std::size_t>(num_layers));
  std::iota(sel.layers.begin(), sel.layers.end(), 0);
  return sel;
}

LayerSelection select_layers(const LayerDependencyProfile& profile,
                             const SelectionStrategy& strategy) {
  const int L = static_cast<int>(profile.num_layers());
  if (L < 1) throw ParameterError("select_layers: empty profile");

  if (std::holds_alternative<AllLayers>(strategy)) return all_layers(L);

  if (const auto* iso = std::get_if<IsolatedTopK>(&strategy)) {
    if (iso->k < 1 || iso->k > L) {
      throw ParameterError("IsolatedTopK: k = " + std::to_string(iso->k) + " outside [1, " +
                           std::to_string(L) + "]");
    }
    std::vector<int> order(static_cast<std::size_t>(L));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return profile.scores[static_cast<std::size_t>(a)] > profile.scores[static_cast<std::size_t>(b)];
    });
    LayerSelection sel;
    sel.strategy = strategy;
    sel.layers.assign(order.begin(), order.begin() + iso->k);
    std::sort(sel.layers.begin(), sel.layers.end());
    return sel;
  }

  const int w = std::get<ConsecutiveWindow>(strategy).width;
  if (w < 1 || w > L) {
    throw ParameterError("ConsecutiveWindow: w = " + std::to_string(w) + " outside [1, " +
                         std::to_string(L) + "]");
  }
  int best = 0;
  double best_mean = 0.0;
  for (int start = 0; start + w <= L; ++start) {
    double sum = 0.0;
    for (int i = 0; i < w; ++i) sum += profile.scores[static_cast<std::size_t>(start + i)];
    const double mean = sum / w;
    if (start == 0 || mean > best_mean) {
      best = start;
      best_mean = mean;
    }
  }
  LayerSelection sel;
  sel.strategy = strategy;
  sel.start = best;
  for (int i = 0; i < w; ++i) sel.layers.push_back(best + i);
  return sel;
}

}  // namespace vihd::vdp
