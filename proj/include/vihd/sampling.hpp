#pragma once

// Seeded randomness and categorical sampling (plain, nucleus, top-k).

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace vihd {

/// splitmix64 finalizer, used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// mt19937_64 with distribution code written out explicitly so draws are
/// identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : engine_(mix_seed(seed, stream)) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [0, n), n > 0, by rejection.
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

namespace sampling {

enum class Scheme { Plain, Nucleus, TopK };

struct SamplerConfig {
  double temperature = 1.0;
  Scheme scheme = Scheme::Nucleus;
  double top_p = 0.9;
  int top_k = 50;

  void validate() const;
  std::string describe() const;
};

inline SamplerConfig plain(double temperature = 1.0) {
  return {temperature, Scheme::Plain, 1.0, 1};
}
inline SamplerConfig nucleus(double p, double temperature = 1.0) {
  return {temperature, Scheme::Nucleus, p, 1};
}
inline SamplerConfig top_k(int k, double temperature = 1.0) {
  return {temperature, Scheme::TopK, 1.0, k};
}

/// Sampling distribution after temperature and truncation, indexed like the
/// logits. Truncated entries are exactly zero.
std::vector<double> sampling_distribution(std::span<const double> logits,
                                          const SamplerConfig& config);

/// Draw one index by inverse CDF over the probability-sorted support
/// (descending, ties to the smaller index) using a single uniform from rng.
std::size_t sample_categorical(std::span<const double> logits, const SamplerConfig& config,
                               Rng& rng);

/// Same, with the uniform supplied by the caller.
std::size_t sample_with_uniform(std::span<const double> logits, const SamplerConfig& config,
                                double u);

}  // namespace sampling
}  // namespace vihd
