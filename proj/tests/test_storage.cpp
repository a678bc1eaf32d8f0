#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "doctest.h"
#include "temp_dir.hpp"
#include "tsrag/error.hpp"
#include "tsrag/storage.hpp"

using namespace tsrag;

namespace {

bool bit_equal(const std::vector<StoreRecord>& a, const std::vector<StoreRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].domain_category != b[i].domain_category || a[i].item_id != b[i].item_id ||
        a[i].start != b[i].start || a[i].end != b[i].end || a[i].freq != b[i].freq ||
        a[i].target.size() != b[i].target.size())
      return false;
    for (std::size_t j = 0; j < a[i].target.size(); ++j)
      if (std::bit_cast<std::uint64_t>(a[i].target[j]) != std::bit_cast<std::uint64_t>(b[i].target[j]))
        return false;
  }
  return true;
}

double random_double(std::mt19937_64& gen) {
  switch (gen() % 6) {
    case 0: return std::uniform_real_distribution<double>(-1, 1)(gen);
    case 1: return static_cast<double>(static_cast<int>(gen() % 20001) - 10000);
    case 2: return -0.0;
    case 3: return std::ldexp(std::uniform_real_distribution<double>(1, 2)(gen), static_cast<int>(gen() % 600) - 300);
    default: {
      double v;
      do {
        v = std::bit_cast<double>(gen());
      } while (!std::isfinite(v));
      return v;
    }
  }
}

}  // namespace

TEST_CASE("empty store round trip") {
  TempDir dir;
  write_store({}, dir / "empty.crb.jsonl");
  CHECK(read_store(dir / "empty.crb.jsonl").empty());
}

TEST_CASE("record with integer targets round trips exactly") {
  TempDir dir;
  std::vector<StoreRecord> recs = {
      make_record("Nature", "T1", "1969-01-01", "daily", {9083, 8006, 11136})};
  CHECK(recs[0].end == "1969-01-03");
  write_store(recs, dir / "a.crb.jsonl");
  auto back = read_store(dir / "a.crb.jsonl");
  CHECK(bit_equal(recs, back));
  CHECK(slurp(dir / "a.crb.jsonl") ==
        "{\"domain_category\":\"Nature\",\"item_id\":\"T1\",\"start\":\"1969-01-01\","
        "\"end\":\"1969-01-03\",\"freq\":\"daily\",\"target\":[9083,8006,11136]}\n");
}

TEST_CASE("random records round trip bit-exactly") {
  TempDir dir;
  std::mt19937_64 gen(5);
  std::vector<StoreRecord> recs;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> t(1 + gen() % 50);
    for (auto& v : t) v = random_double(gen);
    StoreRecord r{"dom" + std::to_string(i % 7), "item \"" + std::to_string(i) + "\"\t\\",
                  "2020-01-01", "-", "-", std::move(t)};
    recs.push_back(std::move(r));
  }
  write_store(recs, dir / "r.crb.jsonl");
  CHECK(bit_equal(recs, read_store(dir / "r.crb.jsonl")));
}

TEST_CASE("read_store errors") {
  TempDir dir;
  const std::string good =
      "{\"domain_category\":\"Web\",\"item_id\":\"a\",\"start\":\"-\",\"end\":\"-\",\"freq\":\"-\","
      "\"target\":[1,2]}\n";
  const std::string no_freq =
      "{\"domain_category\":\"Web\",\"item_id\":\"b\",\"start\":\"-\",\"end\":\"-\","
      "\"target\":[1,2]}\n";
  auto p = dir.write("bad.crb.jsonl", good + no_freq);
  try {
    read_store(p);
    FAIL("expected an error");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("freq") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
  }
  CHECK(read_store(dir.write("ok.crb.jsonl", good)).at(0).freq == "-");
  CHECK_THROWS_AS(read_store(dir.write("dup.crb.jsonl", good + good)), DataError);
  CHECK_THROWS_AS(read_store(dir.write("junk.crb.jsonl", good + "{not json\n")), DataError);
  CHECK_THROWS_AS(read_store(dir / "absent.crb.jsonl"), DataError);
}

TEST_CASE("end timestamps") {
  CHECK(advance_timestamp("2020-01-01 00:00:00", "Hourly", 25) == "2020-01-02 01:00:00");
  CHECK(advance_timestamp("2020-02-28", "daily", 1) == "2020-02-29");
  CHECK(advance_timestamp("2019-02-28", "daily", 1) == "2019-03-01");
  CHECK(advance_timestamp("2020-01-31", "monthly", 1) == "2020-02-29");
  CHECK(advance_timestamp("19690101", "daily", 2) == "19690103");
  CHECK(advance_timestamp("2020-01-01 00:00", "15min", 4) == "2020-01-01 01:00");
  CHECK(advance_timestamp("2020-01-01", "-", 3).empty());
  CHECK(advance_timestamp("-", "daily", 3).empty());
  CHECK(make_record("d", "i", "-", "daily", {1, 2}).end == "-");
}

TEST_CASE("ingest_csv") {
  TempDir dir;
  std::string csv = "a,b\n";
  for (int i = 0; i < 10; ++i) csv += std::to_string(i) + "," + std::to_string(10 * i) + "\n";
  auto recs = ingest_csv(dir.write("two.csv", csv), "Energy", "-");
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].target.size() == 10);
  CHECK(recs[1].target.size() == 10);
  CHECK(recs[1].target[3] == 30.0);
  CHECK(recs[0].domain_category == "Energy");
  CHECK(recs[0].item_id != recs[1].item_id);

  auto gap = ingest_csv(dir.write("gap.csv", "v\n1\n\n3\n"), "Web", "-");
  REQUIRE(gap.size() == 1);
  CHECK(gap[0].target == std::vector<double>{1, 2, 3});
  auto nan = ingest_csv(dir.write("nan.csv", "v\n1\nNaN\n5\n"), "Web", "-");
  CHECK(nan[0].target == std::vector<double>{1, 3, 5});

  auto ts = ingest_csv(dir.write("ts.csv", "date,x\n2021-03-01,1\n2021-03-02,2\n2021-03-03,4\n"),
                       "Health", "daily");
  REQUIRE(ts.size() == 1);
  CHECK(ts[0].start == "2021-03-01");
  CHECK(ts[0].end == "2021-03-03");
  CHECK(ts[0].target == std::vector<double>{1, 2, 4});

  try {
    ingest_csv(dir.write("bad.csv", "x,y\n1,2\n3,oops\n"), "Web", "-");
    FAIL("expected an error");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("column 2") != std::string::npos);
  }
  CHECK_THROWS_AS(ingest_csv(dir / "missing.csv", "Web", "-"), DataError);
}

TEST_CASE("ingest, store and read give the in-memory windows") {
  TempDir dir;
  std::mt19937_64 gen(9);
  std::normal_distribution<double> g;
  std::string csv = "time,a,b,c\n";
  for (int i = 0; i < 100; ++i) {
    const int hour = i % 24;
    csv += "2022-01-0" + std::to_string(1 + i / 24) + (hour < 10 ? " 0" : " ") + std::to_string(hour) + ":00:00";
    for (int c = 0; c < 3; ++c) csv += "," + (gen() % 17 == 0 ? std::string() : std::to_string(g(gen)));
    csv += "\n";
  }
  auto recs = ingest_csv(dir.write("m.csv", csv), "IoT", "Hourly");
  write_store(recs, dir / "m.crb.jsonl");
  auto back = read_store(dir / "m.crb.jsonl");
  auto a = windows_from_records(recs, 16, 8);
  auto b = windows_from_records(back, 16, 8);
  REQUIRE(a.size() == b.size());
  CHECK(a.size() == 3 * window_count(100, 16, 8));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id() == b[i].id());
    CHECK(a[i].values == b[i].values);
  }
}
