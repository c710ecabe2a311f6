#include "vihd/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "vihd/error.hpp"

namespace vihd {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ParameterError("Rng::below(0)");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

namespace sampling {

void SamplerConfig::validate() const {
  if (!(temperature > 0.0)) throw ParameterError("sampler temperature must be > 0");
  if (scheme == Scheme::Nucleus && !(top_p > 0.0 && top_p <= 1.0)) {
    throw ParameterError("nucleus p must be in (0, 1]");
  }
  if (scheme == Scheme::TopK && top_k < 1) throw ParameterError("top-k K must be >= 1");
}

std::string SamplerConfig::describe() const {
  std::ostringstream os;
  switch (scheme) {
    case Scheme::Plain: os << "plain"; break;
    case Scheme::Nucleus: os << "nucleus(" << top_p << ")"; break;
    case Scheme::TopK: os << "topk(" << top_k << ")"; break;
  }
  os << " T=" << temperature;
  return os.str();
}

namespace {

// Indices sorted by descending logit (equivalently probability), ties to the
// smaller index.
std::vector<std::size_t> sorted_order(std::span<const double> logits) {
  std::vector<std::size_t> order(logits.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
  return order;
}

struct SortedDistribution {
  std::vector<std::size_t> order;  // kept support, descending
  std::vector<double> probs;       // renormalized, same order
};

SortedDistribution truncated(std::span<const double> logits, const SamplerConfig& config) {
  if (logits.empty()) throw ParameterError("sample_categorical: empty logits");
  config.validate();
  for (double x : logits) {
    // -inf is a valid logit (probability zero); NaN and +inf are not.
    if (std::isnan(x) || x == std::numeric_limits<double>::infinity()) {
      throw ParameterError("sample_categorical: invalid logit");
    }
  }
  SortedDistribution d;
  d.order = sorted_order(logits);
  const double top = logits[d.order.front()];
  if (!std::isfinite(top)) throw ParameterError("sample_categorical: all logits are -inf");
  d.probs.reserve(d.order.size());
  double total = 0.0;
  for (std::size_t i : d.order) {
    // (x - max) / T keeps the exponent finite however small T is.
    const double p = std::exp((logits[i] - top) / config.temperature);
    d.probs.push_back(p);
    total += p;
  }
  for (double& p : d.probs) p /= total;

  std::size_t keep = d.order.size();
  if (config.scheme == Scheme::TopK) {
    keep = std::min<std::size_t>(keep, static_cast<std::size_t>(config.top_k));
  } else if (config.scheme == Scheme::Nucleus) {
    double cumulative = 0.0;
    for (std::size_t i = 0; i < d.probs.size(); ++i) {
      cumulative += d.probs[i];
      // slack so mass that sums to exactly p after exp/normalize still stops here
      if (cumulative >= config.top_p - 1e-12) {
        keep = i + 1;
        break;
      }
    }
  }
  d.order.resize(keep);
  d.probs.resize(keep);
  const double kept = std::accumulate(d.probs.begin(), d.probs.end(), 0.0);
  for (double& p : d.probs) p /= kept;
  return d;
}

}  // namespace

std::vector<double> sampling_distribution(std::span<const double> logits,
                                          const SamplerConfig& config) {
  const auto d = truncated(logits, config);
  std::vector<double> out(logits.size(), 0.0);
  for (std::size_t i = 0; i < d.order.size(); ++i) out[d.order[i]] = d.probs[i];
  return out;
}

std::size_t sample_with_uniform(std::span<const double> logits, const SamplerConfig& config,
                                double u) {
  const auto d = truncated(logits, config);
  double cumulative = 0.0;
  for (std::size_t i = 0; i < d.order.size(); ++i) {
    cumulative += d.probs[i];
    if (u < cumulative) return d.order[i];
  }
  return d.order.back();
}

std::size_t sample_categorical(std::span<const double> logits, const SamplerConfig& config,
                               Rng& rng) {
  return sample_with_uniform(logits, config, rng.uniform());
}

}  // namespace sampling
}  // namespace vihd
