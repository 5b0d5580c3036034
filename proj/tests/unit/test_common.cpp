#include <doctest.h>

#include <atomic>
#include <cmath>
#include <set>
#include <vector>

#include "amcuq/common.hpp"

using namespace amcuq;

TEST_SUITE("common") {
  TEST_CASE("derive_seed separates children") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t a = 0; a < 50; ++a) {
      for (std::uint64_t b = 0; b < 4; ++b) seen.insert(derive_seed(42, a, b));
    }
    CHECK(seen.size() == 200);
    CHECK(derive_seed(42, 1) == derive_seed(42, 1, 0));
    CHECK(derive_seed(42, 1) != derive_seed(43, 1));
  }

  TEST_CASE("rng is reproducible and in range") {
    Rng a(9), b(9);
    for (int i = 0; i < 1000; ++i) {
      const double u = a.uniform();
      CHECK(u == b.uniform());
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
      const auto k = a.below(7);
      CHECK(k == b.below(7));
      CHECK(k < 7);
    }
  }

  TEST_CASE("normal draws have unit variance") {
    Rng r(3);
    double s = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double x = r.normal();
      s += x;
      s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
  }

  TEST_CASE("precision names") {
    CHECK(parse_precision("f32") == Precision::f32);
    CHECK(parse_precision("f64") == Precision::f64);
    CHECK(to_string(Precision::f32) == "f32");
    CHECK_THROWS_AS(parse_precision("f16"), Error);
  }

  TEST_CASE("parallel_for visits every index once") {
    for (std::size_t workers : {1u, 3u, 16u}) {
      std::vector<std::atomic<int>> hits(97);
      parallel_for(hits.size(), workers, [&](std::size_t i) { ++hits[i]; });
      for (const auto& h : hits) CHECK(h.load() == 1);
    }
  }

  TEST_CASE("parallel_for rethrows the lowest failing index") {
    auto run = [] {
      parallel_for(20, 4, [](std::size_t i) {
        if (i == 5 || i == 13) fail(ErrorCode::io, "task " + std::to_string(i));
      });
    };
    try {
      run();
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::io);
      CHECK(std::string(e.what()) == "task 5");
    }
  }
}
