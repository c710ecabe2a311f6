#include "vihd/semantic.hpp"

#include <algorithm>
#include <cctype>
#include <exception>
#include <numeric>

#include "vihd/error.hpp"

namespace vihd::semantic {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_terminal_punct(char c) {
  return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':';
}

bool judge(const EntailmentOracle& oracle, std::string_view premise, std::string_view hypothesis) {
  try {
    return oracle.entails(premise, hypothesis);
  } catch (const OracleError&) {
    throw;
  } catch (const std::exception& e) {
    throw OracleError("entailment failed for (\"" + std::string(premise) + "\", \"" +
                      std::string(hypothesis) + "\"): " + e.what());
  }
}

SemanticDistribution count_range(const Clustering& c, std::size_t begin, std::size_t end) {
  SemanticDistribution d;
  d.support.resize(c.size());
  std::iota(d.support.begin(), d.support.end(), std::size_t{0});
  d.counts.assign(c.size(), 0);
  for (std::size_t i = begin; i < end; ++i) ++d.counts[c.assignment[i]];
  const double n = static_cast<double>(end - begin);
  d.probs.reserve(c.size());
  for (std::size_t x : d.counts) d.probs.push_back(static_cast<double>(x) / n);
  return d;
}

}  // namespace

std::string normalize(std::string_view text) {
  std::size_t b = 0;
  std::size_t e = text.size();
  auto trim = [&] {
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
  };
  trim();
  while (e > b && is_terminal_punct(text[e - 1])) {
    --e;
    trim();
  }
  std::string out(text.substr(b, e - b));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool ExactMatch::entails(std::string_view premise, std::string_view hypothesis) const {
  return normalize(premise) == normalize(hypothesis);
}

Clustering cluster(std::span<const std::string> responses, const EntailmentOracle& oracle) {
  if (responses.empty()) throw ValidationError("cluster: no responses");
  Clustering c;
  c.assignment.reserve(responses.size());
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const std::string& r = responses[i];
    std::size_t found = c.clusters.size();
    for (std::size_t k = 0; k < c.clusters.size(); ++k) {
      const std::string& rep = c.clusters[k].representative;
      if (judge(oracle, r, rep) && judge(oracle, rep, r)) {
        found = k;
        break;
      }
    }
    if (found == c.clusters.size()) c.clusters.push_back({r, {}});
    c.clusters[found].members.push_back(i);
    c.assignment.push_back(found);
  }
  return c;
}

std::size_t SemanticDistribution::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

JointDistributions joint_distributions(std::span<const std::string> normal,
                                       std::span<const std::string> intervened,
                                       const EntailmentOracle& oracle) {
  if (normal.empty() || intervened.empty()) {
    throw ValidationError("joint_distributions: both response lists must be non-empty");
  }
  std::vector<std::string> all(normal.begin(), normal.end());
  all.insert(all.end(), intervened.begin(), intervened.end());
  JointDistributions out;
  out.clustering = cluster(all, oracle);
  out.normal = count_range(out.clustering, 0, normal.size());
  out.intervened = count_range(out.clustering, normal.size(), all.size());
  return out;
}

SemanticDistribution distribution_of(std::span<const std::string> responses,
                                     const EntailmentOracle& oracle, Clustering* clustering) {
  Clustering c = cluster(responses, oracle);
  auto d = count_range(c, 0, responses.size());
  if (clustering) *clustering = std::move(c);
  return d;
}

}  // namespace vihd::semantic
