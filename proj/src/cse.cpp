#include "vihd/cse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vihd/error.hpp"

namespace vihd::cse {

using json = nlohmann::json;

namespace {

std::vector<std::string> texts(const std::vector<GenerationRun>& runs) {
  std::vector<std::string> out;
  out.reserve(runs.size());
  for (const auto& r : runs) out.push_back(r.response_text);
  return out;
}

std::vector<std::string> representatives(const semantic::Clustering& c) {
  std::vector<std::string> out;
  for (const auto& cl : c.clusters) out.push_back(cl.representative);
  return out;
}

}  // namespace

void CseConfig::validate() const {
  if (!(alpha >= 0.0)) throw ParameterError("alpha must be >= 0");
  if (!(tau >= -1.0 && tau <= 1.0)) throw ParameterError("tau must be in [-1, 1]");
}

const char* to_string(Gate g) {
  return g == Gate::Complementary ? "complementary" : "contrastive";
}

double cosine(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("cosine: supports differ in size");
  double dot = 0.0, pp = 0.0, qq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    dot += p[i] * q[i];
    pp += p[i] * p[i];
    qq += q[i] * q[i];
  }
  if (pp == 0.0 || qq == 0.0) throw DegenerateInputError("cosine: zero vector");
  return dot / (std::sqrt(pp) * std::sqrt(qq));
}

std::vector<double> softmax(std::span<const double> x) {
  if (x.empty()) return {};
  const double top = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Calibration calibrate(std::span<const double> p, std::span<const double> q, const CseConfig& cfg) {
  cfg.validate();
  Calibration c;
  c.cosine = cosine(p, q);
  c.gate = c.cosine >= cfg.tau ? Gate::Complementary : Gate::Contrastive;
  const double a = cfg.alpha;
  c.pre_softmax.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    c.pre_softmax[i] = c.gate == Gate::Complementary ? p[i] / (1.0 + a) + a * q[i] / (1.0 + a)
                                                     : (1.0 + a) * p[i] - a * q[i];
  }
  c.distribution = softmax(c.pre_softmax);
  return c;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

DetectionRecord detect(const SampleBundle& bundle, const semantic::EntailmentOracle& oracle,
                       const CseConfig& cfg, const Provenance& provenance) {
  if (bundle.normal_runs.empty()) {
    throw ValidationError("sample '" + bundle.sample_id + "': no normal runs");
  }
  if (bundle.normal_runs.size() != bundle.intervened_runs.size()) {
    throw ValidationError("sample '" + bundle.sample_id + "': " +
                          std::to_string(bundle.normal_runs.size()) + " normal runs but " +
                          std::to_string(bundle.intervened_runs.size()) + " intervened runs");
  }
  const auto normal = texts(bundle.normal_runs);
  const auto intervened = texts(bundle.intervened_runs);
  const auto joint = semantic::joint_distributions(normal, intervened, oracle);
  const auto cal = calibrate(joint.normal.probs, joint.intervened.probs, cfg);

  DetectionRecord r;
  r.sample_id = bundle.sample_id;
  r.method = "vihd";
  r.cse = entropy(cal.distribution);
  r.gate = cal.gate;
  r.cosine = cal.cosine;
  r.support = representatives(joint.clustering);
  r.p = joint.normal.probs;
  r.p_intervened = joint.intervened.probs;
  r.p_calibrated = cal.distribution;
  r.provenance = provenance;
  return r;
}

DetectionRecord detect_semantic_entropy(const SampleBundle& bundle,
                                        const semantic::EntailmentOracle& oracle) {
  if (bundle.normal_runs.empty()) {
    throw ValidationError("sample '" + bundle.sample_id + "': no normal runs");
  }
  semantic::Clustering clustering;
  const auto d = semantic::distribution_of(texts(bundle.normal_runs), oracle, &clustering);
  const auto cal = calibrate(d.probs, d.probs, CseConfig{0.0, 0.95});

  DetectionRecord r;
  r.sample_id = bundle.sample_id;
  r.method = "se";
  r.cse = entropy(cal.distribution);
  r.gate = cal.gate;
  r.cosine = cal.cosine;
  r.support = representatives(clustering);
  r.p = d.probs;
  r.p_intervened = d.probs;
  r.p_calibrated = cal.distribution;
  return r;
}

json to_json(const DetectionRecord& r) {
  json j = {
      {"sample_id", r.sample_id},
      {"method", r.method},
      {"cse", r.cse},
      {"gate", to_string(r.gate)},
      {"cosine", r.cosine},
      {"support", r.support},
      {"P", r.p},
      {"P_prime", r.p_intervened},
      {"P_c", r.p_calibrated},
      {"w", r.provenance.window},
      {"rho", r.provenance.ratio},
  };
  j["l_star"] = r.provenance.l_star ? json(*r.provenance.l_star) : json(nullptr);
  return j;
}

DetectionRecord record_from_json(const json& j) {
  try {
    DetectionRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.method = j.value("method", std::string("vihd"));
    r.cse = j.at("cse").get<double>();
    const auto gate = j.value("gate", std::string("complementary"));
    if (gate != "complementary" && gate != "contrastive") {
      throw ValidationError("detection record: unknown gate '" + gate + "'");
    }
    r.gate = gate == "complementary" ? Gate::Complementary : Gate::Contrastive;
    r.cosine = j.value("cosine", 1.0);
    r.support = j.value("support", std::vector<std::string>{});
    r.p = j.value("P", std::vector<double>{});
    r.p_intervened = j.value("P_prime", std::vector<double>{});
    r.p_calibrated = j.value("P_c", std::vector<double>{});
    r.provenance.window = j.value("w", 0);
    r.provenance.ratio = j.value("rho", 0.0);
    if (j.contains("l_star") && !j.at("l_star").is_null()) {
      r.provenance.l_star = j.at("l_star").get<int>();
    }
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("detection record: ") + e.what());
  }
}

}  // namespace vihd::cse
