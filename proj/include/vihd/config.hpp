#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "vihd/cse.hpp"
#include "vihd/sampling.hpp"
#include "vihd/vdp.hpp"
#include "vihd/vid.hpp"

namespace vihd {

/// Window width either as a fraction of L (L/4, L/2, 3L/4, L) or absolute.
struct WindowSpec {
  int numerator = 1;
  int denominator = 2;
  int absolute = 0;  // > 0 selects an absolute width

  /// floor(L * num / den), at least 1; absolute widths are taken as is.
  int resolve(int num_layers) const;
  std::string to_string() const;
  static WindowSpec parse(const std::string& text);
  static WindowSpec fraction(int num, int den) { return {num, den, 0}; }
  static WindowSpec fixed(int width) { return {1, 1, width}; }
};

enum class LayerSelectMode { Consecutive, Isolated, All };
enum class OracleKind { Exact, Nli };

const char* to_string(LayerSelectMode m);
LayerSelectMode layer_select_from_string(const std::string& s);

struct RunConfig {
  int M = 10;
  WindowSpec window = WindowSpec::fraction(1, 2);
  double ratio = 0.10;
  double tau = 0.95;
  double alpha = 1.0;
  sampling::SamplerConfig sampler = sampling::nucleus(0.9, 1.0);
  vid::MaskStrategy mask_strategy = vid::MaskStrategy::HighAttention;
  LayerSelectMode layer_select = LayerSelectMode::Consecutive;
  OracleKind oracle = OracleKind::Exact;
  std::string nli_url;
  double nli_threshold = 0.5;
  std::uint64_t seed = 0;
  int threads = 0;  // 0: OpenMP default

  void validate() const;
  cse::CseConfig cse() const { return {alpha, tau}; }
  /// Layer-selection strategy for an L-layer model. Isolated selection
  /// picks as many layers as the window would cover.
  vdp::SelectionStrategy selection(int num_layers) const;
};

/// Flat JSON keys mirroring RunConfig; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});
nlohmann::json to_json(const RunConfig& cfg);
RunConfig read_config(const std::string& path, RunConfig base = {});

}  // namespace vihd
