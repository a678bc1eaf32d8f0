#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "gradcheck.hpp"
#include "temp_dir.hpp"
#include "tsrag/error.hpp"
#include "tsrag/msil.hpp"

using namespace tsrag;

namespace {

using Series = std::vector<std::vector<double>>;

FusionParams identity_params() {
  FusionParams p = FusionParams::zeros(1, 1);
  p.w_q = p.w_k = p.w_v = {1.0};
  p.mlp1.w1 = p.mlp1.w2 = {1.0};
  p.mlp2.w1 = p.mlp2.w2 = {1.0};
  return p;
}

Series random_series(Rng& rng, std::size_t n, std::size_t w) {
  Series s(n, std::vector<double>(w));
  for (auto& v : s)
    for (auto& x : v) x = rng.normal();
  return s;
}

double norm2(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("partition_domains") {
  std::vector<Hit> hits = {{"a", 1, "Energy", 0}, {"b", 1, "Web", 1}, {"c", 1, "Energy", 2}};
  auto [same, cross] = partition_domains("Energy", hits);
  REQUIRE(same.size() == 2);
  CHECK(same[0].window_id == "a");
  CHECK(same[1].window_id == "c");
  REQUIRE(cross.size() == 1);
  CHECK(cross[0].window_id == "b");

  auto [all, none] = partition_domains("Web", std::vector<Hit>{{"x", 1, "Web", 0}});
  CHECK(all.size() == 1);
  CHECK(none.empty());
  auto [e1, e2] = partition_domains("Web", std::vector<Hit>{});
  CHECK(e1.empty());
  CHECK(e2.empty());
}

TEST_CASE("interaction pattern") {
  Series one = {{3, 4}};
  CHECK(raw_interaction(one) == std::vector<double>{0.6, 0.8});
  Series two = {{1, 2}, {2, 1}};
  auto p = raw_interaction(two);
  CHECK(p[0] == doctest::Approx(1.0 / std::numbers::sqrt2).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(1.0 / std::numbers::sqrt2).epsilon(1e-15));
  Series zero = {{1, 0, 2}, {3, 5, 1}};
  CHECK(raw_interaction(zero)[1] == 0.0);
  Series all_zero = {{0, 0}, {1, 1}};
  CHECK(raw_interaction(all_zero) == std::vector<double>{0, 0});
  CHECK_THROWS_WITH_AS(raw_interaction(Series{}), "no retrieved series", DataError);
  CHECK_THROWS_AS(raw_interaction(Series{{1, 2}, {1}}), DataError);
}

TEST_CASE("average pattern") {
  CHECK(raw_average(Series{{2, 4}, {4, 2}}) == std::vector<double>{3, 3});
  std::vector<double> u = {0.1, -0.7, 3.3};
  CHECK(raw_average(Series{u, u, u}) == u);
  CHECK_THROWS_AS(raw_average(Series{}), DataError);
}

TEST_CASE("identity projections pass patterns through") {
  auto p = identity_params();
  Series s = {{0.5, 1.0, 2.0}, {1.0, 0.25, 3.0}};
  auto [p_int, raw_product] = interaction_pattern(s, p);
  auto [p_avg, raw_mean] = average_pattern(s, p);
  CHECK(p_int == raw_product);
  CHECK(p_avg == raw_mean);
}

TEST_CASE("patterns are permutation invariant and unit norm") {
  Rng rng(1);
  auto params = FusionParams::init(4, 4, 3);
  for (int trial = 0; trial < 100; ++trial) {
    auto s = random_series(rng, 2 + rng.below(6), 1 + rng.below(30));
    auto base = extract_patterns(s, params);
    CHECK(std::abs(norm2(base.raw_product) - 1.0) <= 1e-9);
    for (std::size_t i = s.size(); i > 1; --i) std::swap(s[i - 1], s[rng.below(i)]);
    auto shuffled = extract_patterns(s, params);
    CHECK(shuffled.raw_product == base.raw_product);
    CHECK(shuffled.raw_mean == base.raw_mean);
    CHECK(shuffled.p_int == base.p_int);
    CHECK(shuffled.p_avg == base.p_avg);
  }
}

TEST_CASE("attention by hand") {
  auto p = identity_params();
  auto out = cross_attention(std::vector<double>{0, 1}, std::vector<double>{1, 0},
                             std::vector<double>{1, 2}, p);
  const double e = std::exp(1.0);
  CHECK(out.weights[0][0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out.weights[0][1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out.weights[1][0] == doctest::Approx(e / (e + 1)).epsilon(1e-15));
  CHECK(out.weights[1][1] == doctest::Approx(1 / (e + 1)).epsilon(1e-15));
  CHECK(out.r_fused[0] == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(out.r_fused[1] == doctest::Approx((e + 2) / (e + 1)).epsilon(1e-15));

  auto single = cross_attention(std::vector<double>{0.3}, std::vector<double>{-2},
                                std::vector<double>{0.7}, FusionParams::init(3, 2, 1));
  CHECK(single.weights[0][0] == 1.0);

  auto params = FusionParams::init(4, 2, 5);
  auto flat = cross_attention(std::vector<double>(5, 0.4), std::vector<double>{1, -1, 2, 0, 3},
                              std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5}, params);
  for (const auto& row : flat.weights) CHECK(row == flat.weights[0]);
}

TEST_CASE("attention rows sum to one") {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t w = 1 + rng.below(40);
    auto params = FusionParams::init(1 + rng.below(16), 2, rng.next());
    auto v = random_series(rng, 3, w);
    for (auto& x : v[0]) x *= 10.0;
    auto out = cross_attention(v[0], v[1], v[2], params);
    for (const auto& row : out.weights) {
      double s = 0;
      for (double a : row) s += a;
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("ablated prediction ignores retrieval") {
  Rng rng(3);
  auto params = ModelParams::init(6, 2, 3, 3, 4);
  auto s = random_series(rng, 3, 6);
  auto sample = FusionSample::make(s[0], {0.0, 0.0}, Series{s[1], s[2]});
  auto bare = FusionSample::make(s[0], {0.0, 0.0}, Series{});
  CHECK_FALSE(bare.has_retrieval());
  CHECK(predict(sample, params, false) == params.head.apply(s[0]));
  CHECK(predict(bare, params, true) == params.head.apply(s[0]));
  CHECK(predict(sample, params, true) != predict(sample, params, false));
}

TEST_CASE("gradients match finite differences") {
  LossConfig loss;  // lambda 0.1, median heuristic, biased
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    auto inst = random_instance(100 + seed);
    auto g = check_gradients(inst.batch, inst.params, loss, true);
    CHECK_MESSAGE(g.worst <= 1e-4, g.where);
  }
  LossConfig unbiased{0.5, 1.3, MmdEstimator::Unbiased};
  auto inst = random_instance(7);
  auto g = check_gradients(inst.batch, inst.params, unbiased, true);
  CHECK_MESSAGE(g.worst <= 1e-4, g.where);
  auto ablated = check_gradients(inst.batch, inst.params, loss, false);
  CHECK_MESSAGE(ablated.worst <= 1e-4, ablated.where);
}

TEST_CASE("zero projections still give finite matching gradients") {
  auto inst = random_instance(55);
  inst.params.fusion.w_q.assign(inst.params.fusion.d, 0.0);
  inst.params.fusion.w_k.assign(inst.params.fusion.d, 0.0);
  LossConfig loss;
  auto grad = gradients(inst.batch, inst.params, loss, true).grad;
  for (double x : grad.fusion.w_q) CHECK(std::isfinite(x));
  auto g = check_gradients(inst.batch, inst.params, loss, true);
  CHECK_MESSAGE(g.worst <= 1e-4, g.where);
}

TEST_CASE("duplicated batch gives the same gradient") {
  auto inst = random_instance(77);
  inst.batch.resize(1);
  auto twice = inst.batch;
  twice.push_back(inst.batch[0]);
  for (double lambda : {0.0, 0.1}) {
    LossConfig loss{lambda, std::nullopt, MmdEstimator::Biased};
    auto a = gradients(inst.batch, inst.params, loss, true);
    auto b = gradients(twice, inst.params, loss, true);
    CHECK(a.loss.total == doctest::Approx(b.loss.total).epsilon(1e-12));
    std::vector<double> fa, fb;
    for_each_tensor(a.grad, [&](std::string_view, std::span<const double> t) {
      fa.insert(fa.end(), t.begin(), t.end());
    });
    for_each_tensor(b.grad, [&](std::string_view, std::span<const double> t) {
      fb.insert(fb.end(), t.begin(), t.end());
    });
    REQUIRE(fa.size() == fb.size());
    for (std::size_t i = 0; i < fa.size(); ++i) CHECK(fa[i] == doctest::Approx(fb[i]).epsilon(1e-10));
  }
}

TEST_CASE("non-finite loss is an error") {
  auto inst = random_instance(3);
  inst.batch[0].truth[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(gradients(inst.batch, inst.params, LossConfig{}, true), DataError);
}

TEST_CASE("checkpoint round trip") {
  TempDir dir;
  auto params = ModelParams::init(7, 3, 4, 5, 11);
  save_params(params, dir / "p.txt");
  auto back = load_params(dir / "p.txt");
  CHECK(encode_params(back) == encode_params(params));
  CHECK(back.head.weights == params.head.weights);
  CHECK(back.fusion.mlp2.b2 == params.fusion.mlp2.b2);
  CHECK_THROWS_AS(load_params(dir.write("junk.txt", "hello\n")), DataError);
}

TEST_CASE("initialization bounds") {
  auto p = FusionParams::init(16, 8, 0);
  for (double x : p.w_q) CHECK(std::abs(x) <= 1.0);
  for (double x : p.mlp1.w2) CHECK(std::abs(x) <= 1.0 / std::sqrt(8.0));
  CHECK_THROWS_AS(FusionParams::init(0, 1, 0), ConfigError);
  auto m = ModelParams::init(64, 4, 2, 2, 0);
  for (double x : m.head.weights) CHECK(std::abs(x) <= 1.0 / 8.0);
}
