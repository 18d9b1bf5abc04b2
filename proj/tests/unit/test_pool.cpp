#include <algorithm>
#include <cstring>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include <doctest.h>

#include <latentlens/error.hpp>
#include <latentlens/pool.hpp>

#include "helpers.hpp"

using namespace latentlens;
using testing::record;
using testing::vec;

namespace {

SeedPool labeled_pool(int classes, const std::vector<std::size_t>& counts) {
  SeedPool p;
  p.num_classes = classes;
  std::int64_t index = 0;
  for (int c = 0; c < classes; ++c) {
    for (std::size_t j = 0; j < counts[static_cast<std::size_t>(c)]; ++j) {
      p.records.push_back(record(index++, c, 0.5));
    }
  }
  return p;
}

std::set<std::int64_t> indices(const SeedPool& p) {
  std::set<std::int64_t> out;
  for (const auto& r : p.records) out.insert(r.index);
  return out;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("latentlens_test_pool_" + name);
}

}  // namespace

TEST_CASE("label and confidence") {
  auto [l1, c1] = label_and_confidence(vec({0.7, 0.2, 0.1}));
  CHECK(l1 == 0);
  CHECK(c1 == doctest::Approx(0.5).epsilon(1e-15));
  auto [l2, c2] = label_and_confidence(vec({0.0, 1.0, 0.0}));
  CHECK(l2 == 1);
  CHECK(c2 == 1.0);
  auto [l3, c3] = label_and_confidence(vec({1.0 / 3, 1.0 / 3, 1.0 / 3}));
  CHECK(l3 == 0);
  CHECK(c3 == 0.0);
}

TEST_CASE("build pool") {
  const auto s = NoiseSchedule::standard();
  SUBCASE("single class") {
    const auto p = build_pool(testing::gaussian(vec({1.0, -1.0})), s, 20, Sampler::ddim, {}, 3);
    REQUIRE(p.records.size() == 20);
    for (const auto& r : p.records) {
      CHECK(r.label == 0);
      CHECK(r.confidence == 1.0);
    }
  }
  SUBCASE("well separated classes are confident") {
    const auto p = build_pool(testing::two_classes(1, 12.0), s, 2000, Sampler::ddim, {}, 4);
    const auto confident = std::count_if(p.records.begin(), p.records.end(),
                                         [](const SeedRecord& r) { return r.confidence > 0.9; });
    CHECK(static_cast<double>(confident) / 2000.0 >= 0.9);
  }
  SUBCASE("record invariants and provenance") {
    const auto m = make_sphere_mixture(3, 4, 2.0, 1);
    const auto p = build_pool(m, s, 50, Sampler::ddim, {Method::rk4, 32}, 5, {0, "abc", 1});
    CHECK(p.dim == 4);
    CHECK(p.num_classes == 3);
    CHECK(p.provenance.master_seed == 5);
    CHECK(p.provenance.config_digest == "abc");
    CHECK(p.provenance.excluded == 0);
    for (const auto& r : p.records) {
      CHECK(r.label == argmax(r.posterior));
      CHECK(r.confidence == top_margin(r.posterior));
      CHECK(r.level == 0);
      CHECK(r.posterior.isApprox(m.class_posterior(r.sample)));
    }
  }
  CHECK_THROWS_AS(build_pool(testing::gaussian(vec({0.0})), s, 0, Sampler::ddim, {}, 1), DomainError);
}

TEST_CASE("deterministic rebuilds") {
  const auto m = make_sphere_mixture(3, 4, 1.0, 2);
  const auto s = NoiseSchedule::standard();
  const IntegratorSpec spec{Method::rk4, 32};
  SUBCASE("ddim reproduces samples bit-exactly across worker counts") {
    const auto a = build_pool(m, s, 200, Sampler::ddim, spec, 9, {0, "", 1});
    const auto b = build_pool(m, s, 200, Sampler::ddim, spec, 9, {0, "", 3});
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
      CHECK(std::memcmp(a.records[i].sample.data(), b.records[i].sample.data(),
                        sizeof(double) * 4) == 0);
    }
    CHECK(a == b);
  }
  SUBCASE("ddpm is worker independent but noise dependent") {
    const auto a = build_pool(m, s, 400, Sampler::ddpm, spec, 9, {0, "", 1});
    const auto b = build_pool(m, s, 400, Sampler::ddpm, spec, 9, {0, "", 2});
    CHECK(a == b);
    const auto c = build_pool(m, s, 400, Sampler::ddpm, spec, 9, {1, "", 2});
    std::size_t agree = 0;
    for (std::size_t i = 0; i < a.records.size(); ++i) {
      CHECK(a.records[i].seed == c.records[i].seed);
      agree += a.records[i].label == c.records[i].label;
    }
    CHECK(agree < a.records.size());
  }
}

TEST_CASE("balance") {
  Rng rng(1);
  SUBCASE("down to the smallest label") {
    const auto out = balance_pool(labeled_pool(2, {3, 2}), rng);
    CHECK(label_counts(out) == std::vector<std::size_t>{2, 2});
  }
  SUBCASE("already balanced is unchanged") {
    const auto p = labeled_pool(3, {4, 4, 4});
    CHECK(balance_pool(p, rng) == p);
  }
  SUBCASE("fixed rng gives a fixed subset") {
    const auto p = labeled_pool(3, {1000, 700, 700});
    Rng a(7), b(7), c(8);
    const auto x = balance_pool(p, a);
    CHECK(label_counts(x) == std::vector<std::size_t>{700, 700, 700});
    CHECK(indices(x) == indices(balance_pool(p, b)));
    CHECK(indices(x) != indices(balance_pool(p, c)));
  }
  SUBCASE("missing class") {
    try {
      balance_pool(labeled_pool(3, {2, 0, 2}), rng);
      FAIL("expected a pool error");
    } catch (const PoolError& e) {
      CHECK(std::string(e.what()).find("class 1") != std::string::npos);
    }
  }
}

TEST_CASE("stratify") {
  SUBCASE("three levels") {
    SeedPool p;
    p.num_classes = 2;
    p.records = {record(0, 0, 0.9), record(1, 0, 0.5), record(2, 0, 0.1),
                 record(3, 1, 0.8), record(4, 1, 0.4), record(5, 1, 0.2)};
    const auto out = stratify(p, 3);
    const std::vector<int> expected{1, 2, 3, 1, 2, 3};
    for (std::size_t i = 0; i < 6; ++i) CHECK(out.records[i].level == expected[i]);
  }
  SUBCASE("one level") {
    const auto out = stratify(labeled_pool(2, {5, 5}), 1);
    for (const auto& r : out.records) CHECK(r.level == 1);
  }
  SUBCASE("remainder goes to the first bins") {
    SeedPool p = labeled_pool(1, {7});
    for (std::size_t i = 0; i < 7; ++i) p.records[i].confidence = 0.1 * static_cast<double>(i);
    const auto counts = pool_counts(stratify(p, 3));
    CHECK(counts.at({0, 1}) == 3);
    CHECK(counts.at({0, 2}) == 2);
    CHECK(counts.at({0, 3}) == 2);
  }
  SUBCASE("too few records") {
    CHECK_THROWS_AS(stratify(labeled_pool(2, {3, 2}), 3), PoolError);
    CHECK_THROWS_AS(stratify(labeled_pool(1, {3}), 0), PoolError);
  }
  SUBCASE("confidence ordering across levels") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SeedPool p = labeled_pool(3, {40, 40, 40});
    for (auto& r : p.records) r.confidence = u(rng);
    const auto out = stratify(p, 4);
    for (int c = 0; c < 3; ++c) {
      for (int l = 1; l < 4; ++l) {
        double lowest = 2.0, highest = -1.0;
        for (const auto& r : out.records) {
          if (r.label != c) continue;
          if (r.level == l) lowest = std::min(lowest, r.confidence);
          if (r.level == l + 1) highest = std::max(highest, r.confidence);
        }
        CHECK(lowest >= highest);
      }
    }
  }
}

TEST_CASE("train/test split") {
  Rng rng(2);
  SUBCASE("cell sizes") {
    auto p = stratify(labeled_pool(2, {10, 2}), 1);
    const auto out = split_train_test(p, 0.2, rng);
    auto count_test = [&](const SeedPool& q, int label) {
      return std::count_if(q.records.begin(), q.records.end(), [&](const SeedRecord& r) {
        return r.label == label && r.split == Split::test;
      });
    };
    CHECK(count_test(out, 0) == 2);
    CHECK(count_test(split_train_test(p, 0.5, rng), 1) == 1);
  }
  SUBCASE("every cell of a stratified pool") {
    const auto m = make_sphere_mixture(3, 4, 2.0, 1);
    auto p = build_pool(m, NoiseSchedule::standard(), 600, Sampler::ddim, {Method::rk4, 16}, 1);
    Rng b(4);
    p = stratify(balance_pool(p, b), 5);
    const auto out = split_train_test(p, 0.2, rng);
    std::map<std::pair<int, int>, std::size_t> tests;
    for (const auto& r : out.records) tests[{r.label, r.level}] += r.split == Split::test;
    for (const auto& [cell, n] : pool_counts(out)) {
      CHECK(tests[cell] == static_cast<std::size_t>(std::lround(0.2 * static_cast<double>(n))));
    }
  }
  SUBCASE("empty cell and bad fraction") {
    CHECK_THROWS_AS(split_train_test(labeled_pool(2, {3, 0}), 0.2, rng), PoolError);
    CHECK_THROWS_AS(split_train_test(labeled_pool(1, {3}), 1.0, rng), PoolError);
    CHECK_THROWS_AS(split_train_test(labeled_pool(1, {3}), 0.0, rng), PoolError);
  }
}

TEST_CASE("level boundary and selection") {
  SeedPool p;
  p.num_classes = 1;
  p.records = {record(0, 0, 0.9), record(1, 0, 0.7), record(2, 0, 0.5), record(3, 0, 0.1)};
  p = stratify(p, 2);
  CHECK(level_boundary(p)[0] == doctest::Approx(0.6));
  CHECK(select_records(p, 1).size() == 2);
  CHECK(select_records(p, 0).size() == 4);
  CHECK(select_records(p, 0, Split::test).empty());
  CHECK_THROWS_AS(level_boundary(p, 3), PoolError);
}

TEST_CASE("csv round trip") {
  SUBCASE("empty pool") {
    SeedPool p;
    p.dim = 2;
    p.num_classes = 3;
    std::stringstream ss;
    write_pool_csv(p, ss);
    CHECK(ss.str() == "index,split,level,label,confidence,z_0,z_1,x_0,x_1,p_0,p_1,p_2\n");
    CHECK(read_pool_csv(ss) == p);
  }
  SUBCASE("small pool through files") {
    const auto m = make_sphere_mixture(2, 3, 2.0, 1);
    auto p = build_pool(m, NoiseSchedule::standard(), 3, Sampler::ddpm, {Method::rk4, 8}, 6,
                        {2, "digest", 1});
    p.records[1].split = Split::test;
    p.records[2].level = 4;
    const auto path = temp_file("small.csv");
    save_pool(p, path);
    CHECK(std::filesystem::exists(manifest_path(path)));
    CHECK(load_pool(path) == p);
    std::filesystem::remove(path);
    std::filesystem::remove(manifest_path(path));
  }
  SUBCASE("1000 random doubles are bit exact") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> exponent(-300, 300);
    std::normal_distribution<double> normal;
    SeedPool p;
    p.dim = 1;
    p.num_classes = 1;
    for (int i = 0; i < 333; ++i) {
      SeedRecord r = record(i, 0, std::ldexp(std::abs(normal(rng)), -exponent(rng) / 10));
      r.seed = vec({normal(rng) * std::pow(10.0, exponent(rng))});
      r.sample = vec({normal(rng) * std::pow(10.0, exponent(rng) / 3)});
      r.posterior = vec({normal(rng)});
      p.records.push_back(r);
    }
    std::stringstream ss;
    write_pool_csv(p, ss);
    const auto q = read_pool_csv(ss);
    REQUIRE(q.records.size() == p.records.size());
    for (std::size_t i = 0; i < p.records.size(); ++i) {
      const auto& a = p.records[i];
      const auto& b = q.records[i];
      CHECK(std::memcmp(&a.confidence, &b.confidence, sizeof(double)) == 0);
      CHECK(std::memcmp(a.seed.data(), b.seed.data(), sizeof(double)) == 0);
      CHECK(std::memcmp(a.sample.data(), b.sample.data(), sizeof(double)) == 0);
      CHECK(std::memcmp(a.posterior.data(), b.posterior.data(), sizeof(double)) == 0);
    }
  }
  SUBCASE("malformed rows report the line") {
    std::stringstream ss("index,split,level,label,confidence,z_0,x_0,p_0\n"
                         "0,train,1,0,1,0.5,0.5,1\n"
                         "1,train,1,0,oops,0.5,0.5,1\n");
    try {
      read_pool_csv(ss);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
    std::stringstream short_row("index,split,level,label,confidence,z_0,x_0,p_0\n0,train,1\n");
    CHECK_THROWS_AS(read_pool_csv(short_row), ParseError);
    std::stringstream bad_header("idx,split\n");
    CHECK_THROWS_AS(read_pool_csv(bad_header), ParseError);
  }
}
