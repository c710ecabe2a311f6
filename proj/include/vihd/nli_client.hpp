#pragma once

#include <string>
#include <string_view>

#include "vihd/semantic.hpp"

namespace vihd::semantic {

/// Entailment oracle backed by a remote NLI service.
///
/// Protocol: POST {base_url}/entail with {"premise", "hypothesis"}; the reply
/// is {"entail_prob": float}. entails() is entail_prob > threshold.
/// Every call opens its own connection, so one client may be shared
/// across threads.
class NliClient final : public EntailmentOracle {
 public:
  explicit NliClient(std::string base_url, double threshold = 0.5, double timeout_seconds = 30.0);

  bool entails(std::string_view premise, std::string_view hypothesis) const override;
  double entail_probability(std::string_view premise, std::string_view hypothesis) const;

  const std::string& base_url() const { return base_url_; }
  double threshold() const { return threshold_; }

 private:
  std::string base_url_;
  double threshold_;
  double timeout_seconds_;
};

}  // namespace vihd::semantic
