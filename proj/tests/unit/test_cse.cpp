#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "vihd/cse.hpp"
#include "vihd/error.hpp"
#include "vihd/semantic.hpp"

using namespace vihd;
using namespace vihd::cse;

namespace {

SampleBundle texts(const std::vector<std::string>& normal, const std::vector<std::string>& intervened) {
  std::mt19937_64 rng(3);
  SampleBundle b;
  b.sample_id = "s";
  b.meta = testing::random_meta(rng, 2, 1, 3, 5);
  for (std::size_t i = 0; i < normal.size(); ++i) {
    b.normal_runs.push_back(testing::random_run(rng, b.meta, 1, "n" + std::to_string(i)));
    b.normal_runs.back().response_text = normal[i];
  }
  for (std::size_t i = 0; i < intervened.size(); ++i) {
    b.intervened_runs.push_back(
        testing::random_run(rng, b.meta, 1, "i" + std::to_string(i), Condition::Intervened));
    b.intervened_runs.back().response_text = intervened[i];
  }
  return b;
}

std::vector<double> random_dist(std::mt19937_64& rng, std::size_t n) {
  std::vector<double> p(n);
  double total = 0.0;
  for (double& x : p) total += (x = (rng() % 10 == 0) ? 0.0 : (rng() % 1000) / 1000.0 + 1e-3);
  if (total == 0.0) {
    p[0] = 1.0;
    return p;
  }
  for (double& x : p) x /= total;
  return p;
}

}  // namespace

TEST_CASE("cosine examples") {
  using V = std::vector<double>;
  CHECK(cosine(V{0.3, 0.7}, V{0.3, 0.7}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine(V{1, 0}, V{0, 1}) == 0.0);
  CHECK(cosine(V{2.0 / 3, 1.0 / 3}, V{1.0 / 3, 2.0 / 3}) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK_THROWS(cosine(V{0, 0}, V{1, 0}));
  CHECK_THROWS(cosine(V{1}, V{1, 0}));
}

TEST_CASE("calibrate examples") {
  using V = std::vector<double>;
  const CseConfig def{1.0, 0.95};
  auto c = calibrate(V{0.5, 0.5}, V{0.5, 0.5}, def);
  CHECK(c.gate == Gate::Complementary);
  CHECK(c.pre_softmax[0] == doctest::Approx(0.5));
  CHECK(c.distribution[0] == doctest::Approx(0.5));

  c = calibrate(V{1, 0}, V{0, 1}, def);
  CHECK(c.gate == Gate::Contrastive);
  CHECK(c.pre_softmax == V{2.0, -1.0});
  double p0 = 0.0;
  const double h = oracle::softmax_entropy_check(2.0, -1.0, &p0);
  CHECK(c.distribution[0] == doctest::Approx(p0).epsilon(1e-12));
  CHECK(c.distribution[0] == doctest::Approx(0.9526).epsilon(1e-4));
  CHECK(c.distribution[1] == doctest::Approx(0.0474).epsilon(1e-3));
  CHECK(entropy(c.distribution) == doctest::Approx(h).epsilon(1e-12));
  CHECK(entropy(c.distribution) == doctest::Approx(0.1907).epsilon(1e-3));

  c = calibrate(V{0.8, 0.2}, V{0.6, 0.4}, {1.0, 0.5});
  CHECK(c.gate == Gate::Complementary);
  CHECK(c.pre_softmax[0] == doctest::Approx(0.7));
  CHECK(c.pre_softmax[1] == doctest::Approx(0.3));
  CHECK(c.distribution[0] == doctest::Approx(0.5987).epsilon(1e-4));
  CHECK(c.distribution[1] == doctest::Approx(0.4013).epsilon(1e-4));
}

TEST_CASE("entropy examples") {
  using V = std::vector<double>;
  CHECK(entropy(V{0.25, 0.25, 0.25, 0.25}) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(entropy(V{1, 0, 0}) == 0.0);
}

TEST_CASE("gate boundary is inclusive") {
  using V = std::vector<double>;
  const V p{2.0 / 3, 1.0 / 3}, q{1.0 / 3, 2.0 / 3};
  const double cs = cosine(p, q);
  CHECK(calibrate(p, q, {1.0, cs}).gate == Gate::Complementary);
  CHECK(calibrate(p, q, {1.0, std::nextafter(cs, 2.0)}).gate == Gate::Contrastive);
}

TEST_CASE("calibration properties on random distributions") {
  std::mt19937_64 rng(77);
  for (int iter = 0; iter < 2000; ++iter) {
    const std::size_t n = 1 + rng() % 8;
    const auto p = random_dist(rng, n);
    const auto q = random_dist(rng, n);
    const CseConfig cfg{(rng() % 400) / 100.0, (static_cast<double>(rng() % 200) - 100.0) / 100.0};
    const auto c = calibrate(p, q, cfg);
    double total = 0.0;
    for (double x : c.distribution) {
      CHECK(x > 0.0);
      total += x;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    const double h = entropy(c.distribution);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(static_cast<double>(n)) + 1e-12);

    // alpha = 0 ignores the intervened side
    const auto other = random_dist(rng, n);
    const auto a0 = calibrate(p, q, {0.0, cfg.tau});
    const auto b0 = calibrate(p, other, {0.0, cfg.tau});
    for (std::size_t i = 0; i < n; ++i) CHECK(a0.distribution[i] == doctest::Approx(b0.distribution[i]).epsilon(1e-15));

    // complementary with alpha = 1 is symmetric in (P, P')
    const auto pq = calibrate(p, q, {1.0, -1.0});
    const auto qp = calibrate(q, p, {1.0, -1.0});
    CHECK(pq.gate == Gate::Complementary);
    for (std::size_t i = 0; i < n; ++i) CHECK(pq.distribution[i] == doctest::Approx(qp.distribution[i]).epsilon(1e-15));
  }
}

TEST_CASE("detect on response texts") {
  const semantic::ExactMatch exact;
  auto r = detect(texts({"a", "a", "a"}, {"a", "a", "a"}), exact, {});
  CHECK(r.cosine == doctest::Approx(1.0));
  CHECK(r.gate == Gate::Complementary);
  CHECK(r.cse == 0.0);
  CHECK(r.support == std::vector<std::string>{"a"});

  r = detect(texts({"a", "a"}, {"b", "b"}), exact, {1.0, 0.95}, {2, 4, 0.1});
  CHECK(r.gate == Gate::Contrastive);
  CHECK(r.cse == doctest::Approx(oracle::softmax_entropy_check(2.0, -1.0)).epsilon(1e-12));
  CHECK(r.p == std::vector<double>{1.0, 0.0});
  CHECK(r.p_intervened == std::vector<double>{0.0, 1.0});
  CHECK(r.provenance.l_star == std::optional<int>(2));

  CHECK_THROWS_AS(detect(texts({"a", "a"}, {"a"}), exact, {}), ValidationError);

  const auto se = detect_semantic_entropy(texts({"a", "b"}, {"c", "c"}), exact);
  CHECK(se.method == "se");
  CHECK(se.support.size() == 2);
  CHECK(se.cse == doctest::Approx(std::log(2.0)).epsilon(1e-12));  // softmax(0.5,0.5) is uniform
}

TEST_CASE("record JSON round trip") {
  const semantic::ExactMatch exact;
  const auto r = detect(texts({"a", "b", "a"}, {"b", "b", "c"}), exact, {}, {3, 2, 0.25});
  const auto j = to_json(r);
  for (const char* key : {"sample_id", "method", "cse", "gate", "cosine", "support", "P", "P_prime", "P_c", "w", "rho", "l_star"}) {
    CHECK(j.contains(key));
  }
  const auto back = record_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.cse == r.cse);
}
