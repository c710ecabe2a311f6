#pragma once

// Semantic-equivalence clustering by bidirectional entailment, and the
// normal / intervened semantic distributions over a shared support.

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vihd::semantic {

/// Judges whether `premise` entails `hypothesis`. Implementations must be
/// reflexive and safe to call from several threads.
class EntailmentOracle {
 public:
  virtual ~EntailmentOracle() = default;
  virtual bool entails(std::string_view premise, std::string_view hypothesis) const = 0;
};

/// Trim, ASCII case-fold and strip trailing punctuation.
std::string normalize(std::string_view text);

/// Entailment as equality of normalized strings.
class ExactMatch final : public EntailmentOracle {
 public:
  bool entails(std::string_view premise, std::string_view hypothesis) const override;
};

struct Cluster {
  std::string representative;
  std::vector<std::size_t> members;  // positions in the input list
};

struct Clustering {
  std::vector<Cluster> clusters;
  std::vector<std::size_t> assignment;  // input position -> cluster index

  std::size_t size() const { return clusters.size(); }
};

/// Greedy assignment in input order: a response joins the first cluster
/// whose representative it mutually entails, otherwise it founds a new one.
Clustering cluster(std::span<const std::string> responses, const EntailmentOracle& oracle);

struct SemanticDistribution {
  std::vector<std::size_t> support;  // joint cluster indices
  std::vector<std::size_t> counts;
  std::vector<double> probs;

  std::size_t total() const;
};

struct JointDistributions {
  Clustering clustering;  // over normal ++ intervened
  SemanticDistribution normal;
  SemanticDistribution intervened;
};

/// Clusters the concatenation of both lists and counts each list per joint
/// cluster. Both distributions share the full joint support.
JointDistributions joint_distributions(std::span<const std::string> normal,
                                       std::span<const std::string> intervened,
                                       const EntailmentOracle& oracle);

/// Distribution of one list over its own clusters.
SemanticDistribution distribution_of(std::span<const std::string> responses,
                                     const EntailmentOracle& oracle, Clustering* clustering = nullptr);

}  // namespace vihd::semantic
