#include <atomic>
#include <cstdlib>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <doctest.h>

#include <latentlens/parallel.hpp>
#include <latentlens/rng.hpp>

using namespace latentlens;

TEST_CASE("substreams") {
  CHECK(substream_key(1, Stream::seed, 0) == substream_key(1, Stream::seed, 0));
  std::set<std::uint64_t> keys;
  for (std::uint64_t master : {0u, 1u, 2u}) {
    for (Stream s : {Stream::seed, Stream::ddpm_noise, Stream::data}) {
      for (std::uint64_t i = 0; i < 50; ++i) {
        for (std::uint64_t salt : {0u, 1u}) keys.insert(substream_key(master, s, i, salt));
      }
    }
  }
  CHECK(keys.size() == 3 * 3 * 50 * 2);
  Rng a = substream(9, Stream::fresh, 4);
  Rng b = substream(9, Stream::fresh, 4);
  CHECK(standard_normal(a, 6) == standard_normal(b, 6));
}

TEST_CASE("standard normal moments") {
  Rng rng(1);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = standard_normal(rng, 1)[0];
    sum += v;
    sq += v * v;
  }
  CHECK(std::abs(sum / n) <= 3 / std::sqrt(n));
  CHECK(std::abs(sq / n - 1.0) <= 3 * std::sqrt(2.0 / n));
}

TEST_CASE("parallel for") {
  SUBCASE("every index once") {
    for (std::size_t workers : {1u, 2u, 5u}) {
      std::vector<std::atomic<int>> hits(37);
      parallel_for(37, [&](std::size_t i) { ++hits[i]; }, workers);
      for (auto& h : hits) CHECK(h.load() == 1);
    }
    parallel_for(0, [](std::size_t) { FAIL("no work expected"); }, 3);
  }
  SUBCASE("lowest failing index wins") {
    for (std::size_t workers : {1u, 4u}) {
      try {
        parallel_for(
            100,
            [](std::size_t i) {
              if (i == 17 || i == 80) throw std::runtime_error(std::to_string(i));
            },
            workers);
        FAIL("expected an exception");
      } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()) == "17");
      }
    }
  }
  SUBCASE("worker count from the environment") {
    const char* old = std::getenv("LATENTLENS_WORKERS");
    const std::string saved = old ? old : "";
    setenv("LATENTLENS_WORKERS", "3", 1);
    CHECK(default_workers() == 3);
    setenv("LATENTLENS_WORKERS", "0", 1);
    CHECK(default_workers() >= 1);
    unsetenv("LATENTLENS_WORKERS");
    CHECK(default_workers() >= 1);
    if (old) setenv("LATENTLENS_WORKERS", saved.c_str(), 1);
  }
}
