#include <doctest.h>

#include <fstream>
#include <random>

#include <json.hpp>

#include "support.hpp"
#include "vihd/error.hpp"
#include "vihd/trace.hpp"

using namespace vihd;
using vihd::testing::ScratchDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SampleBundle tiny_bundle() {
  SampleBundle b;
  b.sample_id = "s1";
  b.meta = {"m", 2, 1, 4, 3, {0, 2}, "q", "img"};
  GenerationRun n{"n0", Condition::Normal, "yes", {5, 6}, AttentionTensor({2, 2, 1, 2}), {}};
  GenerationRun i{"i0", Condition::Intervened, "no", {7, 8}, AttentionTensor({2, 2, 1, 2}),
                  "i0.mask.json"};
  n.attention.at(0, 0, 0, 0) = 0.25f;
  i.attention.at(1, 1, 0, 1) = 0.5f;
  b.normal_runs.push_back(n);
  b.intervened_runs.push_back(i);
  return b;
}

}  // namespace

TEST_CASE("bundle with M=1, T=2, L=2, H=1, |V|=2 writes two 32-byte tensors") {
  ScratchDir dir("trace");
  write_bundle(tiny_bundle(), dir.path());
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  CHECK(std::filesystem::file_size(dir / "n0.f32") == 32);
  CHECK(std::filesystem::file_size(dir / "i0.f32") == 32);

  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest.at("format_version") == 1);
  CHECK(manifest.at("runs").at(0).at("shape") == nlohmann::json({2, 2, 1, 2}));
  CHECK(manifest.at("runs").at(1).at("mask_plan_ref") == "i0.mask.json");
}

TEST_CASE("tensor payload is little-endian float32 in (t, l, h, v) order") {
  AttentionTensor a({1, 1, 1, 2});
  a.at(0, 0, 0, 0) = 1.0f;   // 0x3F800000
  a.at(0, 0, 0, 1) = 0.5f;   // 0x3F000000
  const auto bytes = encode_tensor(a);
  REQUIRE(bytes.size() == 8);
  const unsigned char expect[8] = {0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0x3F};
  for (int i = 0; i < 8; ++i) CHECK(static_cast<unsigned char>(bytes[i]) == expect[i]);
}

TEST_CASE("round trip reproduces the bundle bit-exactly") {
  std::mt19937_64 rng(7);
  for (int iter = 0; iter < 25; ++iter) {
    ScratchDir dir("trace_rt");
    const auto b = vihd::testing::random_bundle(rng, 1 + static_cast<int>(rng() % 3));
    write_bundle(b, dir.path());
    const auto back = read_bundle(dir.path());
    CHECK(back == b);

    // Re-writing the read bundle gives identical bytes on disk.
    ScratchDir again("trace_rt2");
    write_bundle(back, again.path());
    CHECK(slurp(dir / "manifest.json") == slurp(again / "manifest.json"));
    for (const auto& r : b.normal_runs) {
      CHECK(slurp(dir / (r.run_id + ".f32")) == slurp(again / (r.run_id + ".f32")));
    }
  }
}

TEST_CASE("validation rejects broken invariants") {
  ScratchDir dir("trace_bad");
  SUBCASE("empty visual_indices") {
    auto b = tiny_bundle();
    b.meta.visual_indices.clear();
    CHECK_THROWS_WITH_AS(write_bundle(b, dir.path()), doctest::Contains("visual_indices"),
                         ValidationError);
  }
  SUBCASE("unsorted visual indices") {
    auto b = tiny_bundle();
    b.meta.visual_indices = {2, 0};
    CHECK_THROWS_AS(write_bundle(b, dir.path()), ValidationError);
  }
  SUBCASE("visual index beyond input") {
    auto b = tiny_bundle();
    b.meta.visual_indices = {0, 3};
    CHECK_THROWS_AS(write_bundle(b, dir.path()), ValidationError);
  }
  SUBCASE("token count disagrees with attention") {
    auto b = tiny_bundle();
    b.normal_runs[0].response_tokens.pop_back();
    CHECK_THROWS_WITH_AS(write_bundle(b, dir.path()), doctest::Contains("n0"), ShapeError);
  }
  SUBCASE("visual mass above one") {
    auto b = tiny_bundle();
    b.normal_runs[0].attention.at(0, 0, 0, 0) = 0.6f;
    b.normal_runs[0].attention.at(0, 0, 0, 1) = 0.6f;
    CHECK_THROWS_WITH_AS(write_bundle(b, dir.path()), doctest::Contains("mass"), ValidationError);
  }
  SUBCASE("intervened run without a plan reference") {
    auto b = tiny_bundle();
    b.intervened_runs[0].mask_plan_ref.reset();
    CHECK_THROWS_WITH_AS(write_bundle(b, dir.path()), doctest::Contains("mask_plan_ref"),
                         ValidationError);
  }
  SUBCASE("run listed under the wrong condition") {
    auto b = tiny_bundle();
    b.normal_runs.push_back(b.intervened_runs[0]);
    b.normal_runs.back().run_id = "i9";
    CHECK_THROWS_AS(write_bundle(b, dir.path()), ValidationError);
  }
  SUBCASE("run id with a path separator") {
    auto b = tiny_bundle();
    b.normal_runs[0].run_id = "../escape";
    CHECK_THROWS_AS(write_bundle(b, dir.path()), ValidationError);
  }
}

TEST_CASE("reader rejects corrupted bundles") {
  ScratchDir dir("trace_corrupt");
  write_bundle(tiny_bundle(), dir.path());

  SUBCASE("truncated tensor names the run") {
    std::filesystem::resize_file(dir / "i0.f32", 28);
    CHECK_THROWS_WITH_AS(read_bundle(dir.path()), doctest::Contains("'i0'"), ShapeError);
  }
  SUBCASE("extra trailing bytes") {
    std::ofstream(dir / "n0.f32", std::ios::app | std::ios::binary) << "x";
    CHECK_THROWS_WITH_AS(read_bundle(dir.path()), doctest::Contains("'n0'"), ShapeError);
  }
  SUBCASE("manifest with L = 0") {
    auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    m["num_layers"] = 0;
    std::ofstream(dir / "manifest.json") << m.dump();
    CHECK_THROWS_WITH_AS(read_bundle(dir.path()), doctest::Contains("num_layers"), ValidationError);
  }
  SUBCASE("missing manifest") {
    std::filesystem::remove(dir / "manifest.json");
    CHECK_THROWS_AS(read_bundle(dir.path()), IoError);
  }
  SUBCASE("missing format_version") {
    auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    m.erase("format_version");
    std::ofstream(dir / "manifest.json") << m.dump();
    CHECK_THROWS_WITH_AS(read_bundle(dir.path()), doctest::Contains("format_version"),
                         ValidationError);
  }
  SUBCASE("attention value outside [0, 1]") {
    AttentionTensor a({2, 2, 1, 2});
    a.at(0, 1, 0, 0) = -0.01f;
    const auto bytes = encode_tensor(a);
    std::ofstream(dir / "n0.f32", std::ios::binary | std::ios::trunc)
        .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_WITH_AS(read_bundle(dir.path()), doctest::Contains("outside [0,1]"),
                         ValidationError);
  }
  SUBCASE("value a hair below zero is accepted") {
    AttentionTensor a({2, 2, 1, 2});
    a.at(0, 1, 0, 0) = -5e-7f;
    const auto bytes = encode_tensor(a);
    std::ofstream(dir / "n0.f32", std::ios::binary | std::ios::trunc)
        .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    CHECK_NOTHROW(read_bundle(dir.path()));
  }
}
