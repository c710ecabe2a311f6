#pragma once

// End-to-end wiring: probe -> live intervened decoding -> detection, over
// single samples and whole datasets, plus the ablation sweeps.

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vihd/config.hpp"
#include "vihd/cse.hpp"
#include "vihd/metrics.hpp"
#include "vihd/semantic.hpp"
#include "vihd/toy_decoder.hpp"
#include "vihd/trace.hpp"
#include "vihd/vdp.hpp"
#include "vihd/vid.hpp"

namespace vihd::pipeline {

inline constexpr const char* kDatasetIndex = "dataset.json";
inline constexpr const char* kLabelsFile = "labels.jsonl";

struct ProbeResult {
  vdp::LayerDependencyProfile profile;
  vdp::LayerSelection selection;
};

/// Profiles the normal runs and selects layers per the config.
ProbeResult probe(const SampleBundle& bundle, const RunConfig& cfg);

std::unique_ptr<semantic::EntailmentOracle> make_oracle(const RunConfig& cfg);

struct SimulationResult {
  SampleBundle bundle;
  std::vector<vid::MaskPlan> plans;  // one per intervened run
  ProbeResult probe;
};

/// M normal runs, then VDP on them, then M intervened runs under the live
/// mask policy. Deterministic in (spec, cfg).
SimulationResult simulate_sample(const toy::ToySpec& spec, const RunConfig& cfg);

/// OpenMP over samples; output order follows input order.
std::vector<SimulationResult> simulate_dataset(std::span<const toy::ToySpec> specs,
                                               const RunConfig& cfg);

/// Bundle plus `<run_id>.mask.json` for each intervened run.
void write_simulation(const SimulationResult& result, const std::filesystem::path& dir);

/// Writes `<out>/<sample_id>/` bundles, dataset.json and, when the specs carry
/// GREEN values, labels.jsonl.
void write_dataset(std::span<const SimulationResult> results, std::span<const toy::ToySpec> specs,
                   const std::filesystem::path& out);

/// A single bundle directory or a dataset directory.
std::vector<SampleBundle> load_bundles(const std::filesystem::path& path);

enum class Method { Vihd, SemanticEntropy };

cse::DetectionRecord detect_sample(const SampleBundle& bundle,
                                   const semantic::EntailmentOracle& oracle, const RunConfig& cfg,
                                   Method method = Method::Vihd);

/// OpenMP over samples; output order follows input order.
std::vector<cse::DetectionRecord> detect_all(std::span<const SampleBundle> bundles,
                                             const semantic::EntailmentOracle& oracle,
                                             const RunConfig& cfg, Method method = Method::Vihd);

namespace serial {
std::vector<cse::DetectionRecord> detect_all(std::span<const SampleBundle> bundles,
                                             const semantic::EntailmentOracle& oracle,
                                             const RunConfig& cfg, Method method = Method::Vihd);
}  // namespace serial

/// Share of intervened responses that differ from the modal normal response.
double flip_rate(const SampleBundle& bundle, const semantic::EntailmentOracle& oracle);

std::vector<metrics::LabeledSample> labels_from_specs(std::span<const toy::ToySpec> specs);

enum class Ablation { Window, Ratio, MaskStrategy, LayerSelect };

Ablation ablation_from_string(const std::string& s);

struct CurvePoint {
  std::string param;
  double auc = 0.0;
  double aug = 0.0;
};

/// Re-runs simulate -> detect -> eval for each setting of the swept knob.
std::vector<CurvePoint> run_ablation(Ablation kind, std::span<const toy::ToySpec> specs,
                                     const RunConfig& cfg,
                                     const semantic::EntailmentOracle& oracle);

void write_curve_csv(std::span<const CurvePoint> curve, const std::filesystem::path& path);

}  // namespace vihd::pipeline
