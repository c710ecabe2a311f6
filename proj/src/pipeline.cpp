#include "vihd/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "vihd/error.hpp"
#include "vihd/nli_client.hpp"

namespace vihd::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::uint64_t kIntervenedStreamBase = 1ull << 32;

// Runs body(i) for i in [0, n) across OpenMP threads and rethrows the
// exception of the lowest failing index.
template <typename Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
  const long count = static_cast<long>(n);
#ifdef _OPENMP
  const int team = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(team)
#endif
  for (long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

ProbeResult probe(const SampleBundle& bundle, const RunConfig& cfg) {
  ProbeResult r;
  r.profile = vdp::profile_over_runs(bundle.normal_runs, bundle.meta);
  r.selection = vdp::select_layers(r.profile, cfg.selection(bundle.meta.num_layers));
  return r;
}

std::unique_ptr<semantic::EntailmentOracle> make_oracle(const RunConfig& cfg) {
  if (cfg.oracle == OracleKind::Nli) {
    return std::make_unique<semantic::NliClient>(cfg.nli_url, cfg.nli_threshold);
  }
  return std::make_unique<semantic::ExactMatch>();
}

SimulationResult simulate_sample(const toy::ToySpec& input, const RunConfig& cfg) {
  cfg.validate();
  toy::ToySpec spec = input;
  spec.rng_seed = mix_seed(cfg.seed, input.rng_seed);

  SimulationResult out;
  SampleBundle& b = out.bundle;
  b.sample_id = spec.sample_id;
  b.meta = toy::make_meta(spec);

  char id[32];
  for (int i = 0; i < cfg.M; ++i) {
    std::snprintf(id, sizeof id, "normal_%02d", i);
    b.normal_runs.push_back(
        toy::generate(spec, cfg.sampler, std::nullopt, id, static_cast<std::uint64_t>(i)).run);
  }

  out.probe = probe(b, cfg);
  vid::MaskPolicy policy;
  policy.strategy = cfg.mask_strategy;
  policy.ratio = cfg.ratio;
  policy.layers = out.probe.selection;
  policy.seed = spec.rng_seed;

  for (int i = 0; i < cfg.M; ++i) {
    std::snprintf(id, sizeof id, "intervened_%02d", i);
    auto run = toy::generate(spec, cfg.sampler, policy, id,
                             kIntervenedStreamBase + static_cast<std::uint64_t>(i));
    b.intervened_runs.push_back(std::move(run.run));
    out.plans.push_back(std::move(*run.plan));
  }
  return out;
}

std::vector<SimulationResult> simulate_dataset(std::span<const toy::ToySpec> specs,
                                               const RunConfig& cfg) {
  std::vector<SimulationResult> out(specs.size());
  parallel_for(specs.size(), cfg.threads,
               [&](std::size_t i) { out[i] = simulate_sample(specs[i], cfg); });
  return out;
}

void write_simulation(const SimulationResult& result, const fs::path& dir) {
  write_bundle(result.bundle, dir);
  for (std::size_t i = 0; i < result.plans.size(); ++i) {
    vid::write_mask_plan(result.plans[i], dir / *result.bundle.intervened_runs[i].mask_plan_ref);
  }
}

std::vector<metrics::LabeledSample> labels_from_specs(std::span<const toy::ToySpec> specs) {
  std::vector<metrics::LabeledSample> labels;
  for (const auto& s : specs) {
    if (s.green) labels.push_back(metrics::from_green(s.sample_id, *s.green));
  }
  return labels;
}

void write_dataset(std::span<const SimulationResult> results, std::span<const toy::ToySpec> specs,
                   const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  json ids = json::array();
  for (const auto& r : results) {
    write_simulation(r, out / r.bundle.sample_id);
    ids.push_back(r.bundle.sample_id);
  }
  std::ofstream index(out / kDatasetIndex, std::ios::trunc);
  if (!index) throw IoError("cannot write dataset index");
  index << json{{"samples", ids}}.dump(2) << "\n";

  const auto labels = labels_from_specs(specs);
  if (!labels.empty()) metrics::write_labels_jsonl(labels, out / kLabelsFile);
}

std::vector<SampleBundle> load_bundles(const fs::path& path) {
  if (fs::exists(path / kManifestName)) return {read_bundle(path)};
  if (!fs::is_directory(path)) throw IoError("no bundle or dataset at " + path.string());

  std::vector<std::string> ids;
  if (fs::exists(path / kDatasetIndex)) {
    std::ifstream in(path / kDatasetIndex);
    try {
      ids = json::parse(in).at("samples").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw ValidationError(std::string("dataset index: ") + e.what());
    }
  } else {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_directory() && fs::exists(entry.path() / kManifestName)) {
        ids.push_back(entry.path().filename().string());
      }
    }
    std::sort(ids.begin(), ids.end());
  }
  if (ids.empty()) throw IoError("missing " + (path / kManifestName).string());
  std::vector<SampleBundle> bundles;
  for (const auto& id : ids) bundles.push_back(read_bundle(path / id));
  return bundles;
}

cse::DetectionRecord detect_sample(const SampleBundle& bundle,
                                   const semantic::EntailmentOracle& oracle, const RunConfig& cfg,
                                   Method method) {
  if (method == Method::SemanticEntropy) return cse::detect_semantic_entropy(bundle, oracle);
  const auto p = probe(bundle, cfg);
  cse::Provenance prov;
  prov.l_star = p.selection.start;
  prov.window = static_cast<int>(p.selection.layers.size());
  prov.ratio = cfg.ratio;
  return cse::detect(bundle, oracle, cfg.cse(), prov);
}

std::vector<cse::DetectionRecord> detect_all(std::span<const SampleBundle> bundles,
                                             const semantic::EntailmentOracle& oracle,
                                             const RunConfig& cfg, Method method) {
  std::vector<cse::DetectionRecord> out(bundles.size());
  parallel_for(bundles.size(), cfg.threads,
               [&](std::size_t i) { out[i] = detect_sample(bundles[i], oracle, cfg, method); });
  return out;
}

namespace serial {

std::vector<cse::DetectionRecord> detect_all(std::span<const SampleBundle> bundles,
                                             const semantic::EntailmentOracle& oracle,
                                             const RunConfig& cfg, Method method) {
  std::vector<cse::DetectionRecord> out;
  out.reserve(bundles.size());
  for (const auto& b : bundles) out.push_back(detect_sample(b, oracle, cfg, method));
  return out;
}

}  // namespace serial

double flip_rate(const SampleBundle& bundle, const semantic::EntailmentOracle& oracle) {
  if (bundle.normal_runs.empty() || bundle.intervened_runs.empty()) {
    throw ValidationError("flip_rate: sample '" + bundle.sample_id + "' lacks runs");
  }
  std::vector<std::string> normal;
  for (const auto& r : bundle.normal_runs) normal.push_back(r.response_text);
  semantic::Clustering c;
  const auto d = semantic::distribution_of(normal, oracle, &c);
  const auto modal = static_cast<std::size_t>(
      std::max_element(d.counts.begin(), d.counts.end()) - d.counts.begin());
  const std::string& reference = c.clusters[modal].representative;
  std::size_t flips = 0;
  for (const auto& r : bundle.intervened_runs) {
    const bool same = oracle.entails(r.response_text, reference) &&
                      oracle.entails(reference, r.response_text);
    flips += same ? 0 : 1;
  }
  return static_cast<double>(flips) / static_cast<double>(bundle.intervened_runs.size());
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "window") return Ablation::Window;
  if (s == "ratio") return Ablation::Ratio;
  if (s == "mask-strategy") return Ablation::MaskStrategy;
  if (s == "layer-select") return Ablation::LayerSelect;
  throw ParameterError("ablation must be window, ratio, mask-strategy or layer-select");
}

std::vector<CurvePoint> run_ablation(Ablation kind, std::span<const toy::ToySpec> specs,
                                     const RunConfig& cfg,
                                     const semantic::EntailmentOracle& oracle) {
  const auto labels = labels_from_specs(specs);
  if (labels.size() != specs.size()) {
    throw ValidationError("ablation: every scenario spec needs a green label");
  }
  std::vector<std::pair<std::string, RunConfig>> settings;
  switch (kind) {
    case Ablation::Window:
      for (const char* w : {"L/4", "L/2", "3L/4", "L"}) {
        RunConfig c = cfg;
        c.window = WindowSpec::parse(w);
        settings.emplace_back(w, c);
      }
      break;
    case Ablation::Ratio:
      for (double r : {0.05, 0.10, 0.25, 0.50}) {
        RunConfig c = cfg;
        c.ratio = r;
        char buf[16];
        std::snprintf(buf, sizeof buf, "%.2f", r);
        settings.emplace_back(buf, c);
      }
      break;
    case Ablation::MaskStrategy:
      for (auto s : {vid::MaskStrategy::Random, vid::MaskStrategy::LowAttention,
                     vid::MaskStrategy::HighAttention}) {
        RunConfig c = cfg;
        c.mask_strategy = s;
        settings.emplace_back(vid::to_string(s), c);
      }
      break;
    case Ablation::LayerSelect:
      for (auto m : {LayerSelectMode::All, LayerSelectMode::Isolated, LayerSelectMode::Consecutive}) {
        RunConfig c = cfg;
        c.layer_select = m;
        settings.emplace_back(to_string(m), c);
      }
      break;
  }

  std::vector<CurvePoint> curve;
  for (const auto& [param, c] : settings) {
    const auto sims = simulate_dataset(specs, c);
    std::vector<SampleBundle> bundles;
    for (const auto& s : sims) bundles.push_back(s.bundle);
    const auto records = detect_all(bundles, oracle, c);
    const auto report = metrics::evaluate(records, labels);
    curve.push_back({param, report.auc, report.aug});
  }
  return curve;
}

void write_curve_csv(std::span<const CurvePoint> curve, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "param,auc,aug\n";
  for (const auto& p : curve) out << p.param << "," << p.auc << "," << p.aug << "\n";
}

}  // namespace vihd::pipeline
