#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "tsrag/error.hpp"
#include "tsrag/retrieval.hpp"
#include "tsrag/synthetic.hpp"

using namespace tsrag;

namespace {

double ref_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  long double dot = 0, na = 0, nb = 0, d2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
    d2 += (a[i] - b[i]) * (a[i] - b[i]);
  }
  return static_cast<double>(dot / (std::sqrt(na) * std::sqrt(nb) + 1e-8) + 1.0 / (std::sqrt(d2) + 1e-8));
}

std::vector<SeriesWindow> corpus(std::size_t n, std::size_t w, std::uint64_t seed) {
  RetrievalCorpusSpec spec;
  spec.windows = n;
  spec.window = w;
  spec.seed = seed;
  auto ws = make_retrieval_corpus(spec);
  for (auto& x : ws) x.values = normalize(x.values).values;
  return ws;
}

std::vector<std::string> ids(const Retrieval& r) {
  std::vector<std::string> out;
  for (const auto& h : r.hits) out.push_back(h.window_id);
  return out;
}

void check_well_formed(const Retrieval& r, std::size_t k) {
  CHECK(r.hits.size() <= k);
  std::set<std::string> unique;
  for (std::size_t i = 0; i < r.hits.size(); ++i) {
    unique.insert(r.hits[i].window_id);
    if (i > 0) {
      const auto& p = r.hits[i - 1];
      const auto& c = r.hits[i];
      CHECK((p.score > c.score || (p.score == c.score && p.window_id < c.window_id)));
    }
  }
  CHECK(unique.size() == r.hits.size());
}

Query make_query(std::vector<double> target, std::size_t k, std::size_t probes,
                 std::optional<std::string> domain = {}, double rho = 0.6) {
  Query q;
  q.target = std::move(target);
  q.k = k;
  q.probes = probes;
  q.domain = std::move(domain);
  q.rho = rho;
  return q;
}

}  // namespace

TEST_CASE("similarity values") {
  using V = std::vector<double>;
  CHECK(similarity(V{1, 0}, V{0, 1}) == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(similarity(V{3, 4}, V{3, 4}) == doctest::Approx(1.0 + 1e8).epsilon(1e-12));
  CHECK(similarity(V{1, 1}, V{2, 2}) == doctest::Approx(1.70711).epsilon(1e-5));
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    V a(1 + rng.below(20)), b(a.size());
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    CHECK(similarity(a, b) == doctest::Approx(ref_similarity(a, b)).epsilon(1e-12));
    CHECK(similarity(a, b) == similarity(b, a));
    CHECK(similarity(a, a) >= similarity(a, b));
  }
}

TEST_CASE("local share rounds half away from zero") {
  CHECK(local_share(8, 0.6) == 5);
  CHECK(local_share(8, 0.0) == 0);
  CHECK(local_share(8, 1.0) == 8);
  CHECK(local_share(1, 0.5) == 1);
  CHECK(local_share(4, 0.125) == 1);
}

TEST_CASE("oracle ordering by hand") {
  std::vector<SeriesWindow> ws = {
      {"b", 0, 0, {0, 1}, "X"}, {"c", 0, 0, {-1, 0}, "X"}, {"d", 0, 0, {2, 0}, "X"},
      {"a", 0, 0, {1, 0}, "X"}};
  auto r = linear_scan_oracle(make_query({1, 0}, 4, 1), ws);
  CHECK(ids(r) == std::vector<std::string>{"X/a@00000000", "X/d@00000000", "X/b@00000000",
                                           "X/c@00000000"});
  // d=[2,0]: cos 2/(2+eps) + 1/(1+eps); c=[-1,0]: -1/(1+eps) + 1/(2+eps)
  CHECK(r.hits[1].score == doctest::Approx(2.0 / (2.0 + 1e-8) + 1.0 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(r.hits[3].score == doctest::Approx(-1.0 / (1.0 + 1e-8) + 1.0 / (2.0 + 1e-8)).epsilon(1e-15));
  CHECK(r.stats.evaluations == 4);
  CHECK(ids(linear_scan_oracle(make_query({1, 0}, 1, 1), ws)) ==
        std::vector<std::string>{"X/a@00000000"});
}

TEST_CASE("oracle is invariant under shuffling the window set") {
  auto ws = corpus(300, 16, 2);
  auto q = make_query(ws[17].values, 8, 1);
  auto base = ids(linear_scan_oracle(q, ws));
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    for (std::size_t i = ws.size(); i > 1; --i) std::swap(ws[i - 1], ws[rng.below(i)]);
    CHECK(ids(linear_scan_oracle(q, ws)) == base);
  }
}

TEST_CASE("full probing equals the oracle") {
  auto ws = corpus(2000, 16, 4);
  auto tree = SeriesTree::build(ws, {64, 1});
  auto queries = make_retrieval_queries({2000, 16, 4, 8, 0.3, 2.0, 4}, 50, 9);
  for (const auto& qw : queries) {
    auto q = make_query(normalize(qw.values).values, 8, tree.cluster_count());
    auto got = retrieve_global(q, tree);
    auto want = linear_scan_oracle(q, tree);
    check_well_formed(got, 8);
    CHECK(ids(got) == ids(want));
    CHECK(want.stats.evaluations == tree.size());
  }
}

TEST_CASE("saturation and single-cluster trees") {
  auto ws = corpus(20, 8, 5);
  auto tree = SeriesTree::build(ws, {256, 0});
  REQUIRE(tree.cluster_count() == 3);  // 20 windows span three domains
  auto q = make_query(ws[0].values, 50, 100);
  auto all = retrieve_global(q, tree);
  CHECK(all.hits.size() == 20);
  check_well_formed(all, 50);

  std::vector<SeriesWindow> one(ws.begin(), ws.begin() + 6);
  auto single = SeriesTree::build(one, {256, 0});
  REQUIRE(single.cluster_count() == 1);
  for (const auto& w : ws) {
    auto qq = make_query(w.values, 3, 1);
    CHECK(ids(retrieve_global(qq, single)) == ids(linear_scan_oracle(qq, single)));
  }
}

TEST_CASE("hybrid composition") {
  auto ws = corpus(3000, 16, 6);
  auto tree = SeriesTree::build(ws, {64, 2});
  for (std::size_t i = 0; i < 40; ++i) {
    const auto& w = ws[i * 37];
    auto mixed = retrieve_topk(make_query(w.values, 8, 4, w.domain, 0.6), tree);
    CHECK(mixed.local_hits == 5);
    CHECK(mixed.global_hits == 3);
    CHECK(mixed.hits.size() == 8);
    check_well_formed(mixed, 8);

    auto local = retrieve_topk(make_query(w.values, 8, 4, w.domain, 1.0), tree);
    CHECK(local.local_hits == 8);
    for (const auto& h : local.hits) CHECK(h.domain == w.domain);

    auto zero = retrieve_topk(make_query(w.values, 8, 4, w.domain, 0.0), tree);
    auto global = retrieve_global(make_query(w.values, 8, 4), tree);
    REQUIRE(zero.hits.size() == global.hits.size());
    for (std::size_t j = 0; j < zero.hits.size(); ++j) {
      CHECK(zero.hits[j].window_id == global.hits[j].window_id);
      CHECK(zero.hits[j].score == global.hits[j].score);
    }

    auto unknown = retrieve_topk(make_query(w.values, 8, 4, std::string("Nowhere"), 0.6), tree);
    CHECK(ids(unknown) == ids(global));
  }
}

TEST_CASE("cost bound") {
  auto ws = corpus(4000, 16, 7);
  auto tree = SeriesTree::build(ws, {128, 3});
  const std::size_t protos = tree.cluster_count();
  for (std::size_t p : {1, 2, 4, 8}) {
    auto r = retrieve_global(make_query(ws[5].values, 8, p), tree);
    CHECK(r.stats.clusters_probed == p);
    CHECK(r.stats.evaluations <= protos + p * 128);
  }
}

TEST_CASE("admission filter") {
  auto ws = corpus(500, 16, 8);
  auto tree = SeriesTree::build(ws, {64, 0});
  auto q = make_query(ws[3].values, 5, tree.cluster_count());
  q.admit = [&](const SeriesWindow& w) { return w.id() != ws[3].id(); };
  auto r = retrieve_global(q, tree);
  for (const auto& h : r.hits) CHECK(h.window_id != ws[3].id());
  auto o = linear_scan_oracle(q, tree);
  CHECK(ids(r) == ids(o));
}

TEST_CASE("query validation") {
  auto ws = corpus(50, 8, 9);
  auto tree = SeriesTree::build(ws, {256, 0});
  CHECK_THROWS_AS(retrieve_global(make_query(ws[0].values, 0, 1), tree), ConfigError);
  CHECK_THROWS_AS(retrieve_global(make_query(ws[0].values, 1, 0), tree), ConfigError);
  CHECK_THROWS_AS(retrieve_topk(make_query(ws[0].values, 1, 1, "Energy", 1.5), tree), ConfigError);
  CHECK_THROWS_AS(retrieve_global(make_query({1, 2, 3}, 1, 1), tree), DataError);
}
