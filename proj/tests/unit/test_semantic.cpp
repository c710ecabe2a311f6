#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <numeric>
#include <random>
#include <thread>

#include "oracles.hpp"
#include "vihd/error.hpp"
#include "vihd/nli_client.hpp"
#include "vihd/semantic.hpp"

using namespace vihd;
using namespace vihd::semantic;

namespace {

// "two lesions" entails "multiple lesions", not the other way round.
class OneWay final : public EntailmentOracle {
 public:
  bool entails(std::string_view p, std::string_view h) const override {
    if (p == h) return true;
    return p == "two lesions" && h == "multiple lesions";
  }
};

class Throws final : public EntailmentOracle {
 public:
  bool entails(std::string_view p, std::string_view h) const override {
    if (p == h) return true;
    throw std::runtime_error("backend down");
  }
};

std::set<std::set<std::size_t>> as_partition(const Clustering& c) {
  std::set<std::set<std::size_t>> out;
  for (const auto& cl : c.clusters) out.insert({cl.members.begin(), cl.members.end()});
  return out;
}

}  // namespace

TEST_CASE("normalization") {
  CHECK(normalize("  Yes. ") == "yes");
  CHECK(normalize("A Cat!?") == "a cat");
  CHECK(normalize("...") == "");
  CHECK(normalize("mid.dle") == "mid.dle");
}

TEST_CASE("cluster examples") {
  const ExactMatch exact;
  const std::vector<std::string> a{"yes", "yes", "no"};
  auto c = cluster(a, exact);
  REQUIRE(c.size() == 2);
  CHECK(c.clusters[0].members.size() == 2);
  CHECK(c.clusters[1].members.size() == 1);
  CHECK(c.clusters[0].representative == "yes");
  CHECK(c.assignment == std::vector<std::size_t>{0, 0, 1});

  const std::vector<std::string> b{"Yes.", "yes"};
  c = cluster(b, exact);
  CHECK(c.size() == 1);
  CHECK(c.clusters[0].representative == "Yes.");

  const std::vector<std::string> lesions{"two lesions", "multiple lesions"};
  CHECK(cluster(lesions, OneWay{}).size() == 2);

  CHECK_THROWS_AS(cluster(std::vector<std::string>{}, exact), ValidationError);
}

TEST_CASE("oracle failures name the pair") {
  const std::vector<std::string> xs{"left", "right"};
  try {
    cluster(xs, Throws{});
    FAIL("expected OracleError");
  } catch (const OracleError& e) {
    const std::string what = e.what();
    CHECK(what.find("left") != std::string::npos);
    CHECK(what.find("right") != std::string::npos);
  }
}

TEST_CASE("exact-match clustering equals partition by normalized string") {
  const std::vector<std::string> vocab{"yes", "Yes", "yes.", " no", "No!", "maybe", "a cat", "A cat?", "dog"};
  std::mt19937_64 rng(41);
  const ExactMatch exact;
  for (int iter = 0; iter < 1000; ++iter) {
    std::vector<std::string> xs(1 + rng() % 20);
    for (auto& x : xs) x = vocab[rng() % vocab.size()];
    const auto c = cluster(xs, exact);
    CHECK(as_partition(c) == oracle::partition_by_canonical(xs));
    for (std::size_t k = 0; k < c.size(); ++k) {
      CHECK(c.clusters[k].representative == xs[c.clusters[k].members.front()]);
    }
    auto shuffled = xs;
    std::vector<std::size_t> perm(xs.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < perm.size(); ++i) shuffled[i] = xs[perm[i]];
    // Relabel the shuffled partition back onto original positions.
    std::set<std::set<std::size_t>> back;
    for (const auto& cl : cluster(shuffled, exact).clusters) {
      std::set<std::size_t> s;
      for (std::size_t m : cl.members) s.insert(perm[m]);
      back.insert(s);
    }
    CHECK(back == as_partition(c));
  }
}

TEST_CASE("joint distributions share support") {
  const ExactMatch exact;
  using V = std::vector<std::string>;
  auto j = joint_distributions(V{"a", "a"}, V{"a", "a"}, exact);
  CHECK(j.clustering.size() == 1);
  CHECK(j.normal.probs == std::vector<double>{1.0});
  CHECK(j.intervened.probs == std::vector<double>{1.0});

  j = joint_distributions(V{"a", "a"}, V{"b", "b"}, exact);
  CHECK(j.normal.probs == std::vector<double>{1.0, 0.0});
  CHECK(j.intervened.probs == std::vector<double>{0.0, 1.0});
  CHECK(j.normal.support == j.intervened.support);

  j = joint_distributions(V{"a", "a", "b"}, V{"a", "b", "b"}, exact);
  CHECK(j.normal.counts == std::vector<std::size_t>{2, 1});
  CHECK(j.normal.probs[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(j.intervened.probs[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(j.normal.total() == 3);

  CHECK_THROWS_AS(joint_distributions(V{}, V{"a"}, exact), ValidationError);
}

TEST_CASE("NLI client speaks the entail protocol") {
  httplib::Server server;
  std::atomic<int> calls{0};
  server.Post("/entail", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    const auto body = nlohmann::json::parse(req.body);
    const auto p = body.at("premise").get<std::string>();
    const auto h = body.at("hypothesis").get<std::string>();
    double prob = p == h ? 0.99 : 0.1;
    if (p == "a tabby cat" && h == "a cat") prob = 0.8;
    if (p == "a cat" && h == "a tabby cat") prob = 0.6;
    if (p == "borderline") prob = 0.5;
    if (p == "boom") {
      res.status = 500;
      return;
    }
    if (p == "garbage") {
      res.set_content("not json", "text/plain");
      return;
    }
    res.set_content(nlohmann::json{{"entail_prob", prob}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const NliClient client("http://127.0.0.1:" + std::to_string(port), 0.5, 5.0);
  CHECK(client.entails("a cat", "a cat"));
  CHECK(client.entail_probability("a tabby cat", "a cat") == doctest::Approx(0.8));
  CHECK(client.entails("a tabby cat", "a cat"));
  CHECK_FALSE(client.entails("borderline", "x"));  // strictly above threshold
  CHECK_FALSE(client.entails("a dog", "a cat"));
  CHECK_THROWS_AS(client.entails("boom", "x"), OracleError);
  CHECK_THROWS_AS(client.entails("garbage", "x"), OracleError);

  const std::vector<std::string> xs{"a tabby cat", "a cat", "a dog", "a cat"};
  const auto c = cluster(xs, client);
  CHECK(c.size() == 2);
  CHECK(c.assignment == std::vector<std::size_t>{0, 0, 1, 0});

  // Concurrent use from several threads.
  std::vector<std::thread> pool;
  std::atomic<int> ok{0};
  for (int i = 0; i < 8; ++i) {
    pool.emplace_back([&] {
      for (int k = 0; k < 5; ++k) ok += client.entails("a tabby cat", "a cat");
    });
  }
  for (auto& t : pool) t.join();
  CHECK(ok == 40);

  server.stop();
  worker.join();
  CHECK(calls > 0);

  const NliClient dead("http://127.0.0.1:1", 0.5, 0.5);
  CHECK_THROWS_AS(dead.entails("a", "b"), OracleError);
}
