#include <cmath>
#include <random>

#include "doctest.h"
#include "tsrag/error.hpp"
#include "tsrag/series.hpp"

using namespace tsrag;

namespace {
const double M = kMissing;
}

TEST_CASE("interpolate_missing fills gaps") {
  CHECK(interpolate_missing(std::vector<double>{1, M, 3}) == std::vector<double>{1, 2, 3});
  CHECK(interpolate_missing(std::vector<double>{5, 5, 5}) == std::vector<double>{5, 5, 5});
  CHECK(interpolate_missing(std::vector<double>{M, M, 4, M, 8, M}) ==
        std::vector<double>{4, 4, 4, 6, 8, 8});
  CHECK_THROWS_WITH_AS(interpolate_missing(std::vector<double>{M, M}), "uninterpolatable series",
                       DataError);
}

TEST_CASE("interpolate_missing is idempotent and keeps present values") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + gen() % 40);
    for (auto& x : v) x = (gen() % 3 == 0) ? M : u(gen);
    v[gen() % v.size()] = u(gen);
    auto once = interpolate_missing(v);
    for (std::size_t i = 0; i < v.size(); ++i) {
      CHECK_FALSE(std::isnan(once[i]));
      if (!std::isnan(v[i])) CHECK(once[i] == v[i]);
    }
    CHECK(interpolate_missing(once) == once);
  }
}

TEST_CASE("split_channels projects columns") {
  RawSeries two("x", "Energy", "-", "-", 3, 2, {1, 10, 2, 20, 3, 30});
  auto parts = split_channels(two);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].values == std::vector<double>{1, 2, 3});
  CHECK(parts[1].values == std::vector<double>{10, 20, 30});
  CHECK(parts[0].item_id != parts[1].item_id);
  CHECK(parts[1].item_id.find("x") == 0);

  auto one = split_channels(RawSeries::univariate("y", "Web", {4, 5}));
  REQUIRE(one.size() == 1);
  CHECK(one[0].values == std::vector<double>{4, 5});

  RawSeries three("z", "IoT", "-", "-", 2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(split_channels(three)[1].values == three.column(1));
}

TEST_CASE("RawSeries validation") {
  CHECK_THROWS_AS(RawSeries("", "d", "-", "-", 1, 1, {1}).validate(), DataError);
  CHECK_THROWS_AS(RawSeries("a", "", "-", "-", 1, 1, {1}).validate(), DataError);
  CHECK_THROWS_AS(RawSeries("a", "d", "-", "-", 0, 1, {}).validate(), DataError);
  CHECK_NOTHROW(RawSeries("a", "d", "-", "-", 1, 1, {1}).validate());
}

TEST_CASE("segment_windows offsets") {
  std::vector<double> ten(10);
  for (int i = 0; i < 10; ++i) ten[i] = i;
  auto w = segment_windows(RawSeries::univariate("s", "d", ten), 4, 2);
  REQUIRE(w.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(w[i].offset == 2 * i);
    CHECK(w[i].values.front() == static_cast<double>(2 * i));
    CHECK(w[i].parent_id == "s");
    CHECK(w[i].domain == "d");
  }

  auto whole = segment_windows(RawSeries::univariate("s", "d", {1, 2, 3}), 3, 1);
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].values == std::vector<double>{1, 2, 3});

  auto seven = segment_windows(RawSeries::univariate("s", "d", {0, 1, 2, 3, 4, 5, 6}), 3, 3);
  REQUIRE(seven.size() == 2);
  CHECK(seven[0].offset == 0);
  CHECK(seven[1].offset == 3);
  CHECK(seven[1].values == std::vector<double>{3, 4, 5});

  CHECK_THROWS_WITH_AS(segment_windows(RawSeries::univariate("s", "d", {1, 2}), 3, 1),
                       "series shorter than window", DataError);
}

TEST_CASE("window count formula holds exhaustively") {
  for (std::size_t n = 1; n <= 32; ++n) {
    std::vector<double> v(n, 1.0);
    auto series = RawSeries::univariate("s", "d", v);
    for (std::size_t w = 1; w <= n; ++w)
      for (std::size_t s = 1; s <= n; ++s) {
        const std::size_t expect = (n - w) / s + 1;
        CHECK(window_count(n, w, s) == expect);
        CHECK(segment_windows(series, w, s).size() == expect);
      }
  }
}

TEST_CASE("window ids are stable and zero-padded") {
  SeriesWindow w{"item", 0, 42, {1.0}, "Energy"};
  CHECK(w.id() == "Energy/item@00000042");
}

TEST_CASE("normalize") {
  auto n = normalize(std::vector<double>{1, 2, 3});
  CHECK(n.stats.loc == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(n.stats.scale == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
  CHECK(n.values[0] == doctest::Approx(-std::sqrt(1.5)).epsilon(1e-14));
  CHECK(n.values[1] == 0.0);
  CHECK(n.values[2] == doctest::Approx(std::sqrt(1.5)).epsilon(1e-14));

  auto c = normalize(std::vector<double>{7, 7, 7});
  CHECK(c.values == std::vector<double>{0, 0, 0});
  CHECK(c.stats.loc == 7.0);
  CHECK(c.stats.scale == kScaleFloor);
  auto back = denormalize(c.values, c.stats);
  for (double v : back) CHECK(v == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("normalize round trip and moments") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> g(3.0, 5.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> x(2 + gen() % 64);
    for (auto& v : x) v = g(gen);
    auto n = normalize(x);
    auto back = denormalize(n.values, n.stats);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(back[i] - x[i]) <= 1e-12);
    double mean = 0, var = 0;
    for (double v : n.values) mean += v;
    mean /= static_cast<double>(x.size());
    for (double v : n.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    CHECK(std::abs(mean) <= 1e-12);
    CHECK(std::abs(std::sqrt(var) - 1.0) <= 1e-9);
  }
}
