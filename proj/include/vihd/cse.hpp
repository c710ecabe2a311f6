#pragma once

// Calibrated semantic entropy: cosine-gated fusion of the normal and
// intervened semantic distributions, followed by Shannon entropy.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vihd/semantic.hpp"
#include "vihd/trace.hpp"

namespace vihd::cse {

struct CseConfig {
  double alpha = 1.0;  // fusion factor
  double tau = 0.95;   // cosine threshold

  void validate() const;
};

enum class Gate { Complementary, Contrastive };

const char* to_string(Gate g);

/// Where the intervention came from; carried into every record.
struct Provenance {
  std::optional<int> l_star;
  int window = 0;
  double ratio = 0.0;
};

struct DetectionRecord {
  std::string sample_id;
  std::string method = "vihd";  // "vihd" or "se"
  double cse = 0.0;             // nats
  Gate gate = Gate::Complementary;
  double cosine = 1.0;
  std::vector<std::string> support;  // cluster representatives
  std::vector<double> p;
  std::vector<double> p_intervened;
  std::vector<double> p_calibrated;
  Provenance provenance;
};

double cosine(std::span<const double> p, std::span<const double> q);

/// Softmax at unit temperature, max-subtracted.
std::vector<double> softmax(std::span<const double> x);

struct Calibration {
  std::vector<double> distribution;
  std::vector<double> pre_softmax;
  Gate gate = Gate::Complementary;
  double cosine = 1.0;
};

/// cosine >= tau: softmax(P/(1+a) + a P'/(1+a))  (complementary)
/// otherwise:     softmax((1+a) P - a P')         (contrastive)
Calibration calibrate(std::span<const double> p, std::span<const double> q, const CseConfig& cfg);

/// Shannon entropy in nats, 0 log 0 = 0.
double entropy(std::span<const double> p);

/// Full per-sample score from the bundle's response texts.
DetectionRecord detect(const SampleBundle& bundle, const semantic::EntailmentOracle& oracle,
                       const CseConfig& cfg, const Provenance& provenance = {});

/// Plain semantic entropy of the normal runs alone (the alpha = 0 path).
DetectionRecord detect_semantic_entropy(const SampleBundle& bundle,
                                        const semantic::EntailmentOracle& oracle);

nlohmann::json to_json(const DetectionRecord& record);
DetectionRecord record_from_json(const nlohmann::json& j);

}  // namespace vihd::cse
