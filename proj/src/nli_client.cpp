#include "vihd/nli_client.hpp"

#include <httplib.h>
#include <json.hpp>

#include "vihd/error.hpp"

namespace vihd::semantic {

using json = nlohmann::json;

NliClient::NliClient(std::string base_url, double threshold, double timeout_seconds)
    : base_url_(std::move(base_url)), threshold_(threshold), timeout_seconds_(timeout_seconds) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  if (base_url_.empty()) throw ParameterError("NliClient: empty base URL");
}

double NliClient::entail_probability(std::string_view premise, std::string_view hypothesis) const {
  const auto pair = "(\"" + std::string(premise) + "\", \"" + std::string(hypothesis) + "\")";
  httplib::Client client(base_url_);
  const auto secs = static_cast<time_t>(timeout_seconds_);
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);

  const json body = {{"premise", premise}, {"hypothesis", hypothesis}};
  auto res = client.Post("/entail", body.dump(), "application/json");
  if (!res) {
    throw OracleError("NLI request failed for " + pair + ": " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw OracleError("NLI service returned HTTP " + std::to_string(res->status) + " for " + pair);
  }
  try {
    const auto reply = json::parse(res->body);
    return reply.at("entail_prob").get<double>();
  } catch (const json::exception& e) {
    throw OracleError("malformed NLI reply for " + pair + ": " + e.what());
  }
}

bool NliClient::entails(std::string_view premise, std::string_view hypothesis) const {
  return entail_probability(premise, hypothesis) > threshold_;
}

}  // namespace vihd::semantic
