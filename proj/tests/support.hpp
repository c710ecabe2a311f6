#pragma once

// Test helpers: random valid traces and a scratch directory.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "vihd/trace.hpp"

namespace vihd::testing {

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("vihd_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Meta with |V| visual tokens scattered over an input of length n_in.
inline TraceMeta random_meta(std::mt19937_64& rng, int L, int H, int V, int n_in) {
  TraceMeta m;
  m.model_id = "random";
  m.num_layers = L;
  m.num_heads = H;
  m.head_dim = 8;
  m.input_length = n_in;
  std::vector<int> all(static_cast<std::size_t>(n_in));
  for (int i = 0; i < n_in; ++i) all[static_cast<std::size_t>(i)] = i;
  std::shuffle(all.begin(), all.end(), rng);
  m.visual_indices.assign(all.begin(), all.begin() + V);
  std::sort(m.visual_indices.begin(), m.visual_indices.end());
  m.query_text = "what is shown?";
  m.image_ref = "img-" + std::to_string(rng() % 1000);
  return m;
}

/// Each (t, l, h) row gets a random visual mass in [0, 1] spread randomly.
inline AttentionTensor random_attention(std::mt19937_64& rng, std::size_t T, std::size_t L,
                                        std::size_t H, std::size_t V) {
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  AttentionTensor a(TensorShape{T, L, H, V});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t h = 0; h < H; ++h) {
        auto row = a.row(t, l, h);
        float total = 0.0f;
        for (float& x : row) total += (x = unit(rng));
        const float mass = unit(rng) * 0.999f;
        for (float& x : row) x = total > 0.0f ? x / total * mass : 0.0f;
      }
    }
  }
  return a;
}

inline GenerationRun random_run(std::mt19937_64& rng, const TraceMeta& meta, std::size_t T,
                                const std::string& id, Condition c = Condition::Normal) {
  GenerationRun r;
  r.run_id = id;
  r.condition = c;
  r.response_text = "answer " + std::to_string(rng() % 5);
  for (std::size_t t = 0; t < T; ++t) r.response_tokens.push_back(static_cast<int>(rng() % 32000));
  r.attention = random_attention(rng, T, static_cast<std::size_t>(meta.num_layers),
                                 static_cast<std::size_t>(meta.num_heads), meta.num_visual());
  if (c == Condition::Intervened) r.mask_plan_ref = id + ".mask.json";
  return r;
}

inline SampleBundle random_bundle(std::mt19937_64& rng, int M, std::size_t max_T = 6) {
  const int L = 1 + static_cast<int>(rng() % 8);
  const int H = 1 + static_cast<int>(rng() % 4);
  const int V = 1 + static_cast<int>(rng() % 12);
  const int n_in = V + static_cast<int>(rng() % 8);
  SampleBundle b;
  b.sample_id = "sample_" + std::to_string(rng() % 100000);
  b.meta = random_meta(rng, L, H, V, n_in);
  for (int i = 0; i < M; ++i) {
    b.normal_runs.push_back(random_run(rng, b.meta, 1 + rng() % max_T, "n" + std::to_string(i)));
    b.intervened_runs.push_back(random_run(rng, b.meta, 1 + rng() % max_T, "i" + std::to_string(i),
                                           Condition::Intervened));
  }
  return b;
}

}  // namespace vihd::testing
