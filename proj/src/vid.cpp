#include "vihd/vid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "vihd/error.hpp"
#include "vihd/sampling.hpp"

namespace vihd::vid {

using json = nlohmann::json;

const char* to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::HighAttention: return "high_attention";
    case MaskStrategy::LowAttention: return "low_attention";
    case MaskStrategy::Random: return "random";
  }
  return "?";
}

MaskStrategy mask_strategy_from_string(const std::string& s) {
  if (s == "high_attention" || s == "high") return MaskStrategy::HighAttention;
  if (s == "low_attention" || s == "low") return MaskStrategy::LowAttention;
  if (s == "random") return MaskStrategy::Random;
  throw ValidationError("unknown mask strategy '" + s + "'");
}

void MaskPolicy::validate(int num_layers) const {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ParameterError("mask ratio must be in (0, 1]");
  if (layers.layers.empty()) throw ParameterError("mask policy selects no layers");
  for (int l : layers.layers) {
    if (l < 0 || l >= num_layers) {
      throw ParameterError("mask policy layer " + std::to_string(l) + " outside [0, " +
                           std::to_string(num_layers) + ")");
    }
  }
}

std::size_t mask_count(double ratio, std::size_t num_visual) {
  if (num_visual < 1) throw ParameterError("mask_count: no visual tokens");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ParameterError("mask_count: ratio must be in (0, 1]");
  // The slack absorbs products like 0.3 * 10 = 3.0000000000000004.
  const double scaled = std::ceil(ratio * static_cast<double>(num_visual) - 1e-9);
  const auto k = static_cast<std::size_t>(std::max(1.0, scaled));
  return std::min(k, num_visual);
}

std::vector<double> step_attention(const GenerationRun& run, std::size_t t,
                                   const vdp::LayerSelection& layers) {
  const AttentionTensor& a = run.attention;
  if (t >= a.steps()) {
    throw ParameterError("step_attention: step " + std::to_string(t) + " out of range for run '" +
                         run.run_id + "'");
  }
  if (layers.layers.empty()) throw ParameterError("step_attention: no layers selected");
  std::vector<double> out(a.visual(), 0.0);
  for (int l : layers.layers) {
    if (l < 0 || static_cast<std::size_t>(l) >= a.layers()) {
      throw ShapeError("step_attention: layer " + std::to_string(l) + " out of range");
    }
    std::vector<double> head_mean(a.visual(), 0.0);
    for (std::size_t h = 0; h < a.heads(); ++h) {
      const auto row = a.row(t, static_cast<std::size_t>(l), h);
      for (std::size_t v = 0; v < row.size(); ++v) head_mean[v] += row[v];
    }
    for (std::size_t v = 0; v < out.size(); ++v) {
      out[v] += head_mean[v] / static_cast<double>(a.heads());
    }
  }
  for (double& x : out) x /= static_cast<double>(layers.layers.size());
  return out;
}

std::vector<std::size_t> select_columns(std::span<const double> attention, std::size_t k,
                                        MaskStrategy strategy, std::uint64_t seed,
                                        std::size_t t) {
  const std::size_t n = attention.size();
  if (n == 0) throw DegenerateInputError("select_columns: no visual tokens");
  k = std::min(k, n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});

  switch (strategy) {
    case MaskStrategy::HighAttention:
      std::stable_sort(idx.begin(), idx.end(),
                       [&](std::size_t a, std::size_t b) { return attention[a] > attention[b]; });
      break;
    case MaskStrategy::LowAttention:
      std::stable_sort(idx.begin(), idx.end(),
                       [&](std::size_t a, std::size_t b) { return attention[a] < attention[b]; });
      break;
    case MaskStrategy::Random: {
      Rng rng(seed, t);
      for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(idx[i], idx[j]);
      }
      break;
    }
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

MaskPlan build_mask_plan(const GenerationRun& run, const TraceMeta& meta,
                         const MaskPolicy& policy, const std::string& sample_id) {
  if (meta.visual_indices.empty()) throw DegenerateInputError("build_mask_plan: empty visual set");
  policy.validate(meta.num_layers);
  const std::size_t k = mask_count(policy.ratio, meta.num_visual());

  MaskPlan plan;
  plan.sample_id = sample_id;
  plan.layers = policy.layers.layers;
  plan.ratio = policy.ratio;
  plan.strategy = policy.strategy;
  plan.seed = policy.seed;
  for (std::size_t t = 0; t < run.attention.steps(); ++t) {
    const auto attention = step_attention(run, t, policy.layers);
    MaskStep step;
    step.t = static_cast<int>(t);
    for (std::size_t c : select_columns(attention, k, policy.strategy, policy.seed, t)) {
      step.masked.push_back(meta.visual_indices[c]);
    }
    plan.steps.push_back(std::move(step));
  }
  return plan;
}

ComplianceReport verify_mask_plan_compliance(const GenerationRun& intervened,
                                             const TraceMeta& meta, const MaskPlan& plan,
                                             double tol) {
  const AttentionTensor& a = intervened.attention;
  if (plan.steps.size() < a.steps()) {
    throw ShapeError("run '" + intervened.run_id + "': mask plan covers " +
                     std::to_string(plan.steps.size()) + " steps, run has " +
                     std::to_string(a.steps()));
  }
  for (int l : plan.layers) {
    if (l < 0 || static_cast<std::size_t>(l) >= a.layers()) {
      throw ShapeError("mask plan layer " + std::to_string(l) + " outside the run's layers");
    }
  }
  ComplianceReport report;
  report.run_id = intervened.run_id;
  for (std::size_t t = 0; t < a.steps(); ++t) {
    const MaskStep& step = plan.steps[t];
    for (int l : plan.layers) {
      for (int index : step.masked) {
        const auto column = meta.visual_column(index);
        if (!column) {
          throw ShapeError("mask plan step " + std::to_string(t) + ": index " +
                           std::to_string(index) + " is not a visual token");
        }
        float worst = 0.0f;
        for (std::size_t h = 0; h < a.heads(); ++h) {
          worst = std::max(worst, a.at(t, static_cast<std::size_t>(l), h, *column));
        }
        if (worst > tol) report.violations.push_back({static_cast<int>(t), l, index, worst});
      }
    }
  }
  return report;
}

json to_json(const MaskPlan& plan) {
  json steps = json::array();
  for (const auto& s : plan.steps) steps.push_back({{"t", s.t}, {"masked", s.masked}});
  json j = {
      {"sample_id", plan.sample_id}, {"layers", plan.layers}, {"ratio", plan.ratio},
      {"strategy", to_string(plan.strategy)}, {"steps", std::move(steps)},
  };
  if (plan.strategy == MaskStrategy::Random) j["seed"] = plan.seed;
  return j;
}

MaskPlan mask_plan_from_json(const json& j) {
  try {
    MaskPlan plan;
    plan.sample_id = j.at("sample_id").get<std::string>();
    plan.layers = j.at("layers").get<std::vector<int>>();
    plan.ratio = j.at("ratio").get<double>();
    plan.strategy = mask_strategy_from_string(j.at("strategy").get<std::string>());
    if (j.contains("seed")) plan.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("steps")) {
      MaskStep step;
      step.t = s.at("t").get<int>();
      step.masked = s.at("masked").get<std::vector<int>>();
      if (!std::is_sorted(step.masked.begin(), step.masked.end())) {
        throw ValidationError("mask plan: step " + std::to_string(step.t) + " masked set unsorted");
      }
      plan.steps.push_back(std::move(step));
    }
    for (std::size_t i = 0; i < plan.steps.size(); ++i) {
      if (plan.steps[i].t != static_cast<int>(i)) {
        throw ValidationError("mask plan: steps must be listed in order t = 0, 1, ...");
      }
    }
    return plan;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("mask plan: ") + e.what());
  }
}

json to_json(const ComplianceReport& report) {
  json violations = json::array();
  for (const auto& v : report.violations) {
    violations.push_back(
        {{"t", v.t}, {"layer", v.layer}, {"v", v.visual_index}, {"attention", v.attention}});
  }
  return {{"run_id", report.run_id}, {"ok", report.ok()}, {"violations", std::move(violations)}};
}

void write_mask_plan(const MaskPlan& plan, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(plan).dump(2) << "\n";
}

MaskPlan read_mask_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return mask_plan_from_json(j);
}

}  // namespace vihd::vid
