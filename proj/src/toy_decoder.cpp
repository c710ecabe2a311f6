#include "vihd/toy_decoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "vihd/error.hpp"

namespace vihd::toy {

using json = nlohmann::json;

void validate(const ToySpec& spec) {
  validate(make_meta(spec));
  if (spec.evidence.empty()) throw ValidationError("toy spec '" + spec.sample_id + "': empty evidence set");
  for (int e : spec.evidence) {
    if (!std::binary_search(spec.visual_indices.begin(), spec.visual_indices.end(), e)) {
      throw ValidationError("toy spec '" + spec.sample_id + "': evidence index " +
                            std::to_string(e) + " is not a visual token");
    }
  }
  if (std::set<int>(spec.evidence.begin(), spec.evidence.end()).size() != spec.evidence.size()) {
    throw ValidationError("toy spec '" + spec.sample_id + "': duplicate evidence index");
  }
  if (!(spec.grounding >= 0.0 && spec.grounding <= 1.0)) {
    throw ValidationError("toy spec '" + spec.sample_id + "': grounding must be in [0, 1]");
  }
  if (spec.window_layers.empty()) {
    throw ValidationError("toy spec '" + spec.sample_id + "': window_layers must be non-empty");
  }
  for (int l : spec.window_layers) {
    if (l < 0 || l >= spec.num_layers) {
      throw ValidationError("toy spec '" + spec.sample_id + "': window layer " +
                            std::to_string(l) + " outside [0, L)");
    }
  }
  if (spec.answer == spec.distractor) {
    throw ValidationError("toy spec '" + spec.sample_id + "': answer and distractor must differ");
  }
}

TraceMeta make_meta(const ToySpec& spec) {
  TraceMeta meta;
  meta.model_id = "toy-decoder";
  meta.num_layers = spec.num_layers;
  meta.num_heads = spec.num_heads;
  meta.head_dim = spec.head_dim;
  meta.input_length = spec.input_length;
  meta.visual_indices = spec.visual_indices;
  meta.query_text = spec.query_text;
  meta.image_ref = spec.image_ref;
  return meta;
}

namespace {

bool in_window(const ToySpec& spec, int layer) {
  return std::find(spec.window_layers.begin(), spec.window_layers.end(), layer) !=
         spec.window_layers.end();
}

std::vector<bool> evidence_columns(const ToySpec& spec) {
  std::vector<bool> is_evidence(spec.visual_indices.size(), false);
  for (int e : spec.evidence) {
    const auto it = std::lower_bound(spec.visual_indices.begin(), spec.visual_indices.end(), e);
    is_evidence[static_cast<std::size_t>(it - spec.visual_indices.begin())] = true;
  }
  return is_evidence;
}

// Visual-column attention of one layer given its masked columns.
std::vector<double> layer_row(const ToySpec& spec, int layer, const std::vector<bool>& masked,
                              const std::vector<bool>& is_evidence) {
  const std::size_t V = spec.visual_indices.size();
  const auto n_masked = static_cast<std::size_t>(std::count(masked.begin(), masked.end(), true));
  std::vector<double> row(V, 0.0);

  if (!in_window(spec, layer)) {
    const double share = 1.0 / static_cast<double>(spec.input_length - static_cast<int>(n_masked));
    for (std::size_t v = 0; v < V; ++v) row[v] = masked[v] ? 0.0 : share;
    return row;
  }

  if (n_masked == V) return row;  // attention has moved to text positions

  const auto n_evidence =
      static_cast<std::size_t>(std::count(is_evidence.begin(), is_evidence.end(), true));
  const std::size_t n_other = V - n_evidence;
  const double g = spec.grounding;
  double total = 0.0;
  for (std::size_t v = 0; v < V; ++v) {
    if (masked[v]) continue;
    double w = is_evidence[v] ? g / static_cast<double>(n_evidence)
                              : (n_other > 0 ? (1.0 - g) / static_cast<double>(n_other) : 0.0);
    // With no other tokens, E carries the whole visual mass whatever g is.
    if (n_other == 0) w = 1.0 / static_cast<double>(n_evidence);
    row[v] = w;
    total += w;
  }
  if (total <= 0.0) {
    // Only zero-weight tokens survive the mask; spread uniformly over them.
    const double share = 1.0 / static_cast<double>(V - n_masked);
    for (std::size_t v = 0; v < V; ++v) row[v] = masked[v] ? 0.0 : share;
    return row;
  }
  for (double& w : row) w /= total;
  return row;
}

}  // namespace

double effective_grounding(const ToySpec& spec, const std::vector<std::size_t>& masked_columns,
                           const std::vector<int>& masked_layers) {
  const auto is_evidence = evidence_columns(spec);
  std::size_t hit = 0;
  for (std::size_t c : masked_columns) hit += is_evidence.at(c) ? 1 : 0;
  std::size_t covered = 0;
  for (int l : spec.window_layers) {
    covered += std::find(masked_layers.begin(), masked_layers.end(), l) != masked_layers.end();
  }
  const double evidence_share = static_cast<double>(hit) / static_cast<double>(spec.evidence.size());
  const double layer_share =
      static_cast<double>(covered) / static_cast<double>(spec.window_layers.size());
  return spec.grounding * (1.0 - evidence_share * layer_share);
}

ToyRun generate(const ToySpec& spec, const sampling::SamplerConfig& sampler,
                const std::optional<vid::MaskPolicy>& policy, const std::string& run_id,
                std::uint64_t stream) {
  validate(spec);
  sampler.validate();
  const auto meta = make_meta(spec);
  const std::size_t L = static_cast<std::size_t>(spec.num_layers);
  const std::size_t H = static_cast<std::size_t>(spec.num_heads);
  const std::size_t V = spec.visual_indices.size();
  const auto is_evidence = evidence_columns(spec);
  const std::size_t steps = 1;

  ToyRun out;
  GenerationRun& run = out.run;
  run.run_id = run_id;
  run.condition = policy ? Condition::Intervened : Condition::Normal;
  run.attention = AttentionTensor(TensorShape{steps, L, H, V});

  std::size_t k = 0;
  if (policy) {
    policy->validate(spec.num_layers);
    k = vid::mask_count(policy->ratio, V);
    out.plan = vid::MaskPlan{spec.sample_id, policy->layers.layers, policy->ratio,
                             policy->strategy, policy->seed, {}};
  }

  Rng rng(spec.rng_seed, stream);
  const std::vector<bool> unmasked(V, false);

  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<std::size_t> masked_columns;
    if (policy) {
      // Decide the mask from this step's own unmasked attention in the
      // selected layers, then decode with the mask applied.
      std::vector<double> natural(V, 0.0);
      for (int l : policy->layers.layers) {
        const auto row = layer_row(spec, l, unmasked, is_evidence);
        for (std::size_t v = 0; v < V; ++v) natural[v] += row[v];
      }
      for (double& x : natural) x /= static_cast<double>(policy->layers.layers.size());
      masked_columns = vid::select_columns(natural, k, policy->strategy, policy->seed, t);
      if (masked_columns.size() == V && spec.input_length == static_cast<int>(V)) {
        throw DegenerateInputError("toy spec '" + spec.sample_id +
                                   "': every input position is masked");
      }
      vid::MaskStep step;
      step.t = static_cast<int>(t);
      for (std::size_t c : masked_columns) step.masked.push_back(spec.visual_indices[c]);
      out.plan->steps.push_back(std::move(step));
    }

    std::vector<bool> masked(V, false);
    for (std::size_t c : masked_columns) masked[c] = true;
    for (std::size_t l = 0; l < L; ++l) {
      const bool apply = policy && policy->layers.contains(static_cast<int>(l));
      const auto row = layer_row(spec, static_cast<int>(l), apply ? masked : unmasked, is_evidence);
      for (std::size_t h = 0; h < H; ++h) {
        auto dst = run.attention.row(t, l, h);
        for (std::size_t v = 0; v < V; ++v) dst[v] = static_cast<float>(row[v]);
      }
    }

    const double g_eff = policy ? effective_grounding(spec, masked_columns, policy->layers.layers)
                                : spec.grounding;
    const double p_answer = 0.5 + 0.5 * g_eff;
    const double logits[2] = {std::log(p_answer), std::log(1.0 - p_answer)};
    const std::size_t token = sampling::sample_categorical(logits, sampler, rng);
    out.answer_probability = p_answer;
    run.response_tokens.push_back(token == 0 ? kAnswerToken : kDistractorToken);
    run.response_text = token == 0 ? spec.answer : spec.distractor;
  }
  if (policy) run.mask_plan_ref = run_id + ".mask.json";
  return out;
}

json to_json(const ToySpec& spec) {
  json j = {
      {"sample_id", spec.sample_id},
      {"num_layers", spec.num_layers},
      {"num_heads", spec.num_heads},
      {"head_dim", spec.head_dim},
      {"input_length", spec.input_length},
      {"visual_indices", spec.visual_indices},
      {"evidence", spec.evidence},
      {"grounding", spec.grounding},
      {"answer", spec.answer},
      {"distractor", spec.distractor},
      {"window_layers", spec.window_layers},
      {"rng_seed", spec.rng_seed},
      {"query_text", spec.query_text},
      {"image_ref", spec.image_ref},
  };
  if (spec.green) j["green"] = *spec.green;
  return j;
}

ToySpec spec_from_json(const json& j) {
  try {
    ToySpec s;
    s.sample_id = j.at("sample_id").get<std::string>();
    s.num_layers = j.at("num_layers").get<int>();
    s.num_heads = j.at("num_heads").get<int>();
    s.head_dim = j.value("head_dim", 64);
    s.input_length = j.at("input_length").get<int>();
    s.visual_indices = j.at("visual_indices").get<std::vector<int>>();
    s.evidence = j.at("evidence").get<std::vector<int>>();
    s.grounding = j.at("grounding").get<double>();
    s.answer = j.at("answer").get<std::string>();
    s.distractor = j.at("distractor").get<std::string>();
    s.window_layers = j.at("window_layers").get<std::vector<int>>();
    s.rng_seed = j.value("rng_seed", std::uint64_t{0});
    s.query_text = j.value("query_text", std::string{});
    s.image_ref = j.value("image_ref", std::string{});
    if (j.contains("green") && !j.at("green").is_null()) s.green = j.at("green").get<double>();
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("toy spec: ") + e.what());
  }
}

std::vector<ToySpec> read_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw ValidationError("scenario must be a JSON array of specs");
  std::vector<ToySpec> specs;
  for (const auto& item : j) {
    specs.push_back(spec_from_json(item));
    validate(specs.back());
  }
  return specs;
}

void write_scenario(const std::vector<ToySpec>& specs, const std::filesystem::path& path) {
  json j = json::array();
  for (const auto& s : specs) j.push_back(to_json(s));
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace vihd::toy
