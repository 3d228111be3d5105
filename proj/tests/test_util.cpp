#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cstdint>
#include <set>
#include <vector>

#include "wcluster/common.hpp"
#include "wcluster/rng.hpp"
#include "wcluster/thread_pool.hpp"

using namespace wcluster;

TEST_CASE("format_double round-trips through parse_double") {
  for (double x : {0.0, -0.0, 1.0, -1.0, 0.1, 2.0 / 3.0, 3200.0, 1e-300, 1.7e308, -4.625e-5}) {
    CHECK(parse_double(format_double(x)) == x);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(-2.0) == "-2");
}

TEST_CASE("parse_double rejects malformed input") {
  CHECK_THROWS_AS(parse_double(""), ValidationError);
  CHECK_THROWS_AS(parse_double("1.5x"), ValidationError);
  CHECK_THROWS_AS(parse_double("abc"), ValidationError);
  CHECK_THROWS_AS(parse_double("1.0 "), ValidationError);
}

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64(std::string("")) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64(std::string("a")) == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64(std::string("foobar")) == 0x85944171f73967e8ULL);
}

TEST_CASE("to_hex is fixed width lowercase") {
  CHECK(to_hex(0) == "0000000000000000");
  CHECK(to_hex(0xdeadbeefULL) == "00000000deadbeef");
  CHECK(to_hex(0xffffffffffffffffULL) == "ffffffffffffffff");
}

TEST_CASE("metric names round-trip") {
  CHECK(metric_from_name("euclidean") == Metric::Euclidean);
  CHECK(metric_from_name("squared_euclidean") == Metric::SquaredEuclidean);
  CHECK(metric_from_name(metric_name(Metric::Euclidean)) == Metric::Euclidean);
  CHECK_THROWS_AS(metric_from_name("manhattan"), ValidationError);
}

TEST_CASE("substream draws are pure functions of the address") {
  SubstreamRng a({1, 2, 3});
  SubstreamRng b({1, 2, 3});
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  SubstreamRng c({1, 2, 4});
  SubstreamRng d({1, 2, 3});
  int differ = 0;
  for (int i = 0; i < 100; ++i) differ += c.next_u64() != d.next_u64();
  CHECK(differ == 100);
}

TEST_CASE("word order changes the stream") {
  SubstreamRng a({1, 2});
  SubstreamRng b({2, 1});
  CHECK(a.next_u64() != b.next_u64());
}

TEST_CASE("next_unit stays inside the open interval") {
  SubstreamRng rng({42});
  for (int i = 0; i < 10000; ++i) {
    double u = rng.next_unit();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("next_unit is roughly uniform") {
  SubstreamRng rng({7, 7});
  const int n = 20000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    double u = rng.next_unit();
    sum += u;
    sum2 += u * u;
  }
  double mean = sum / n;
  double var = sum2 / n - mean * mean;
  CHECK(mean == Catch::Approx(0.5).margin(0.01));
  CHECK(var == Catch::Approx(1.0 / 12.0).margin(0.01));
}

TEST_CASE("next_exponential has the requested mean") {
  SubstreamRng rng({11});
  const int n = 20000;
  double sum = 0;
  for (int i = 0; i < n; ++i) sum += rng.next_exponential(3.0);
  CHECK(sum / n == Catch::Approx(3.0).margin(0.1));
}

TEST_CASE("hash_words is deterministic and order sensitive") {
  CHECK(hash_words({1, 2, 3}) == hash_words({1, 2, 3}));
  CHECK(hash_words({1, 2, 3}) != hash_words({3, 2, 1}));
  CHECK(hash_words({0}) != hash_words({0, 0}));
}

TEST_CASE("parallel_for covers every index exactly once") {
  for (int threads : {1, 2, 3, 8}) {
    std::vector<std::atomic<int>> hits(257);
    for (auto& h : hits) h = 0;
    parallel_for(hits.size(), threads, [&](std::size_t i) { ++hits[i]; });
    for (auto& h : hits) CHECK(h == 1);
  }
}

TEST_CASE("parallel_for results do not depend on the worker count") {
  std::vector<double> one(100), four(100);
  parallel_for(one.size(), 1, [&](std::size_t i) { one[i] = hash_words({i}) * 0x1.0p-64; });
  parallel_for(four.size(), 4, [&](std::size_t i) { four[i] = hash_words({i}) * 0x1.0p-64; });
  CHECK(one == four);
}

TEST_CASE("parallel_for propagates exceptions") {
  CHECK_THROWS_AS(parallel_for(16, 4,
                               [&](std::size_t i) {
                                 if (i == 7) throw ValidationError("boom");
                               }),
                  ValidationError);
}

TEST_CASE("default_thread_count is positive") { CHECK(default_thread_count() >= 1); }
