#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "vihd/error.hpp"
#include "vihd/vdp.hpp"

using namespace vihd;
using namespace vihd::vdp;

namespace {

GenerationRun run_from(std::size_t T, std::size_t L, std::size_t H, std::size_t V,
                       std::vector<float> values) {
  GenerationRun r;
  r.run_id = "r";
  r.response_tokens.assign(T, 1);
  r.attention = AttentionTensor({T, L, H, V}, std::move(values));
  return r;
}

TraceMeta meta_for(int L, int H, std::vector<int> visual, int n_in) {
  return TraceMeta{"m", L, H, 4, n_in, std::move(visual), "", ""};
}

LayerDependencyProfile profile(std::vector<double> s) { return {std::move(s)}; }

}  // namespace

TEST_CASE("uniform attention over the input gives |V|/N_in at every layer") {
  const std::size_t T = 3, L = 4, H = 2, V = 2;
  const auto r = run_from(T, L, H, V, std::vector<float>(T * L * H * V, 0.25f));
  const auto p = dependency_profile(r, meta_for(4, 2, {1, 3}, 4));
  for (double s : p.scores) CHECK(s == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("hand example: s = (0.45, 0.5)") {
  // Layout (t, l, h, v): t0 = [l0: .4 .3 | l1: .25 .25], t1 = [l0: .1 .1 | l1: .25 .25]
  const auto r = run_from(2, 2, 1, 2, {0.4f, 0.3f, 0.25f, 0.25f, 0.1f, 0.1f, 0.25f, 0.25f});
  const auto meta = meta_for(2, 1, {0, 1}, 4);
  const auto p = dependency_profile(r, meta);
  const auto ref = oracle::triple_sum_profile(r);
  REQUIRE(p.scores.size() == 2);
  CHECK(p.scores[0] == doctest::Approx(0.45).epsilon(1e-7));
  CHECK(p.scores[1] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(p.scores[0] == doctest::Approx(ref[0]).epsilon(1e-12));
}

TEST_CASE("all-zero attention gives a zero profile") {
  const auto r = run_from(2, 3, 2, 2, std::vector<float>(24, 0.0f));
  const auto p = dependency_profile(r, meta_for(3, 2, {0, 1}, 5));
  CHECK(p.scores == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("empty generation and shape mismatches are rejected") {
  const auto empty = run_from(0, 2, 1, 2, {});
  CHECK_THROWS_AS(dependency_profile(empty, meta_for(2, 1, {0, 1}, 3)), DegenerateInputError);
  const auto r = run_from(1, 2, 1, 2, std::vector<float>(4, 0.1f));
  CHECK_THROWS_AS(dependency_profile(r, meta_for(3, 1, {0, 1}, 3)), ShapeError);
}

TEST_CASE("parallel kernel agrees with the serial reference and the oracle") {
  std::mt19937_64 rng(11);
  for (int iter = 0; iter < 200; ++iter) {
    const int L = 1 + static_cast<int>(rng() % 40), H = 1 + static_cast<int>(rng() % 8);
    const int V = 1 + static_cast<int>(rng() % 64);
    const auto meta = testing::random_meta(rng, L, H, V, V + 5);
    const auto run = testing::random_run(rng, meta, 1 + rng() % 24, "r");
    const auto par = dependency_profile(run, meta);
    const auto ser = serial::dependency_profile(run, meta);
    const auto ref = oracle::triple_sum_profile(run);
    for (int l = 0; l < L; ++l) {
      CHECK(par.scores[l] == doctest::Approx(ser.scores[l]).epsilon(1e-12));
      CHECK(par.scores[l] == doctest::Approx(ref[l]).epsilon(1e-12));
      CHECK(par.scores[l] >= 0.0);
      CHECK(par.scores[l] <= 1.0 + kVisualMassTolerance);
    }
  }
}

TEST_CASE("permuting layers permutes the profile") {
  std::mt19937_64 rng(5);
  const int L = 6, H = 2, V = 4;
  const auto meta = testing::random_meta(rng, L, H, V, 9);
  const auto run = testing::random_run(rng, meta, 3, "r");
  std::vector<std::size_t> perm(L);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  GenerationRun permuted = run;
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t v = 0; v < V; ++v)
          permuted.attention.at(t, perm[l], h, v) = run.attention.at(t, l, h, v);

  const auto a = dependency_profile(run, meta);
  const auto b = dependency_profile(permuted, meta);
  for (std::size_t l = 0; l < L; ++l) CHECK(b.scores[perm[l]] == a.scores[l]);
}

TEST_CASE("profile_over_runs averages per layer") {
  const auto meta = meta_for(2, 1, {0}, 2);
  const auto a = run_from(1, 2, 1, 1, {0.2f, 0.4f});
  const auto b = run_from(1, 2, 1, 1, {0.4f, 0.6f});
  const std::vector runs{a, b};
  const auto p = profile_over_runs(runs, meta);
  CHECK(p.scores[0] == doctest::Approx(0.3).epsilon(1e-7));
  CHECK(p.scores[1] == doctest::Approx(0.5).epsilon(1e-7));

  const std::vector single{a};
  CHECK(profile_over_runs(single, meta).scores == dependency_profile(a, meta).scores);
  CHECK_THROWS_AS(profile_over_runs(std::span<const GenerationRun>{}, meta), DegenerateInputError);

  const auto other = run_from(1, 3, 1, 1, {0.1f, 0.1f, 0.1f});
  const std::vector mixed{a, other};
  CHECK_THROWS_AS(profile_over_runs(mixed, meta), ShapeError);
}

TEST_CASE("consecutive window selection") {
  const auto s = select_layers(profile({0.1, 0.2, 0.8, 0.9}), ConsecutiveWindow{2});
  CHECK(s.start == 2);
  CHECK(s.layers == std::vector<int>{2, 3});

  const auto tie = select_layers(profile({0.5, 0.5, 0.5}), ConsecutiveWindow{2});
  CHECK(tie.start == 0);
  CHECK(tie.layers == std::vector<int>{0, 1});

  CHECK_THROWS_AS(select_layers(profile({0.1, 0.2}), ConsecutiveWindow{3}), ParameterError);
  CHECK_THROWS_AS(select_layers(profile({0.1, 0.2}), ConsecutiveWindow{0}), ParameterError);
}

TEST_CASE("isolated top-k and all-layer selection") {
  const auto iso = select_layers(profile({0.1, 0.9, 0.2, 0.8}), IsolatedTopK{2});
  CHECK(iso.layers == std::vector<int>{1, 3});
  CHECK_FALSE(iso.start.has_value());

  const auto tie = select_layers(profile({0.3, 0.3, 0.3}), IsolatedTopK{2});
  CHECK(tie.layers == std::vector<int>{0, 1});

  CHECK(select_layers(profile({0.1, 0.2, 0.3}), AllLayers{}).layers == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(select_layers(profile({0.1}), IsolatedTopK{2}), ParameterError);
}

TEST_CASE("window selection matches exhaustive search; full width is all layers") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int iter = 0; iter < 500; ++iter) {
    const int L = 1 + static_cast<int>(rng() % 12);
    std::vector<double> s(L);
    // Quantized scores make ties frequent.
    for (double& x : s) x = iter % 2 ? unit(rng) : std::round(unit(rng) * 4) / 4;
    const int w = 1 + static_cast<int>(rng() % L);
    const auto sel = select_layers(profile(s), ConsecutiveWindow{w});
    CHECK(*sel.start == oracle::exhaustive_window(s, w));
    CHECK(select_layers(profile(s), ConsecutiveWindow{L}).layers ==
          select_layers(profile(s), AllLayers{}).layers);
  }
}
