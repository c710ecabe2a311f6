#include "vihd/config.hpp"

#include <fstream>

#include "vihd/error.hpp"

namespace vihd {

using json = nlohmann::json;

int WindowSpec::resolve(int num_layers) const {
  if (num_layers < 1) throw ParameterError("window: model has no layers");
  if (absolute > 0) {
    if (absolute > num_layers) {
      throw ParameterError("window width " + std::to_string(absolute) + " exceeds L = " +
                           std::to_string(num_layers));
    }
    return absolute;
  }
  return std::max(1, num_layers * numerator / denominator);
}

std::string WindowSpec::to_string() const {
  if (absolute > 0) return std::to_string(absolute);
  if (numerator == denominator) return "L";
  return (numerator == 1 ? std::string() : std::to_string(numerator)) + "L/" +
         std::to_string(denominator);
}

WindowSpec WindowSpec::parse(const std::string& text) {
  if (text == "L") return fraction(1, 1);
  if (text == "L/4") return fraction(1, 4);
  if (text == "L/2") return fraction(1, 2);
  if (text == "3L/4") return fraction(3, 4);
  try {
    std::size_t used = 0;
    const int w = std::stoi(text, &used);
    if (used == text.size() && w >= 1) return fixed(w);
  } catch (const std::exception&) {
  }
  throw ParameterError("window must be L/4, L/2, 3L/4, L or a positive integer, got '" + text + "'");
}

const char* to_string(LayerSelectMode m) {
  switch (m) {
    case LayerSelectMode::Consecutive: return "consecutive";
    case LayerSelectMode::Isolated: return "isolated";
    case LayerSelectMode::All: return "all";
  }
  return "?";
}

LayerSelectMode layer_select_from_string(const std::string& s) {
  if (s == "consecutive") return LayerSelectMode::Consecutive;
  if (s == "isolated") return LayerSelectMode::Isolated;
  if (s == "all") return LayerSelectMode::All;
  throw ParameterError("layer_select must be consecutive, isolated or all, got '" + s + "'");
}

void RunConfig::validate() const {
  if (M < 1) throw ParameterError("M must be >= 1");
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ParameterError("ratio must be in (0, 1]");
  cse().validate();
  sampler.validate();
  if (oracle == OracleKind::Nli && nli_url.empty()) {
    throw ParameterError("oracle 'nli' needs nli_url");
  }
}

vdp::SelectionStrategy RunConfig::selection(int num_layers) const {
  const int w = window.resolve(num_layers);
  switch (layer_select) {
    case LayerSelectMode::Consecutive: return vdp::ConsecutiveWindow{w};
    case LayerSelectMode::Isolated: return vdp::IsolatedTopK{w};
    case LayerSelectMode::All: return vdp::AllLayers{};
  }
  return vdp::AllLayers{};
}

namespace {

sampling::Scheme scheme_from_string(const std::string& s) {
  if (s == "plain") return sampling::Scheme::Plain;
  if (s == "nucleus") return sampling::Scheme::Nucleus;
  if (s == "topk") return sampling::Scheme::TopK;
  throw ParameterError("sampler must be plain, nucleus or topk, got '" + s + "'");
}

const char* scheme_name(sampling::Scheme s) {
  switch (s) {
    case sampling::Scheme::Plain: return "plain";
    case sampling::Scheme::Nucleus: return "nucleus";
    case sampling::Scheme::TopK: return "topk";
  }
  return "?";
}

}  // namespace

RunConfig config_from_json(const json& j, RunConfig cfg) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "M") cfg.M = value.get<int>();
      else if (key == "window") {
        cfg.window = value.is_number_integer() ? WindowSpec::fixed(value.get<int>())
                                               : WindowSpec::parse(value.get<std::string>());
      } else if (key == "ratio") cfg.ratio = value.get<double>();
      else if (key == "tau") cfg.tau = value.get<double>();
      else if (key == "alpha") cfg.alpha = value.get<double>();
      else if (key == "sampler") cfg.sampler.scheme = scheme_from_string(value.get<std::string>());
      else if (key == "top_p") cfg.sampler.top_p = value.get<double>();
      else if (key == "top_k") cfg.sampler.top_k = value.get<int>();
      else if (key == "temperature") cfg.sampler.temperature = value.get<double>();
      else if (key == "mask_strategy") cfg.mask_strategy = vid::mask_strategy_from_string(value.get<std::string>());
      else if (key == "layer_select") cfg.layer_select = layer_select_from_string(value.get<std::string>());
      else if (key == "oracle") {
        const auto o = value.get<std::string>();
        if (o != "exact" && o != "nli") throw ParameterError("oracle must be exact or nli");
        cfg.oracle = o == "exact" ? OracleKind::Exact : OracleKind::Nli;
      } else if (key == "nli_url") cfg.nli_url = value.get<std::string>();
      else if (key == "nli_threshold") cfg.nli_threshold = value.get<double>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "threads") cfg.threads = value.get<int>();
      else throw ValidationError("config: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return cfg;
}

json to_json(const RunConfig& c) {
  return {
      {"M", c.M},
      {"window", c.window.to_string()},
      {"ratio", c.ratio},
      {"tau", c.tau},
      {"alpha", c.alpha},
      {"sampler", scheme_name(c.sampler.scheme)},
      {"top_p", c.sampler.top_p},
      {"top_k", c.sampler.top_k},
      {"temperature", c.sampler.temperature},
      {"mask_strategy", vid::to_string(c.mask_strategy)},
      {"layer_select", to_string(c.layer_select)},
      {"oracle", c.oracle == OracleKind::Exact ? "exact" : "nli"},
      {"nli_url", c.nli_url},
      {"nli_threshold", c.nli_threshold},
      {"seed", c.seed},
      {"threads", c.threads},
  };
}

RunConfig read_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  try {
    return config_from_json(json::parse(in), base);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

}  // namespace vihd
