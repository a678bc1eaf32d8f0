#include <regex>
#include <sstream>

#include "doctest.h"
#include "temp_dir.hpp"
#include "tsrag/kmeans.hpp"
#include "tsrag/storage.hpp"
#include "tsrag/subprocess.hpp"

using namespace tsrag;

namespace {

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args) {
  auto r = run_command(std::string(TSRAG_CLI) + " " + args + " 2>&1", "",
                       std::chrono::milliseconds(120000));
  return {r.exit_code, r.output};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// 600 windows of length 8 in one domain, three well separated groups.
std::filesystem::path three_groups(const TempDir& dir) {
  Rng rng(4);
  std::vector<StoreRecord> recs;
  for (int i = 0; i < 600; ++i) {
    std::vector<double> v(8);
    for (std::size_t t = 0; t < 8; ++t) {
      const double shape = i % 3 == 0 ? double(t) : i % 3 == 1 ? -double(t) : (t % 2 ? 3.0 : -3.0);
      v[t] = shape + 0.1 * rng.normal();
    }
    recs.push_back(make_record("Energy", "s" + std::to_string(i), "-", "-", v));
  }
  auto p = dir / "groups.crb.jsonl";
  write_store(recs, p);
  return p;
}

}  // namespace

TEST_CASE("ingest") {
  TempDir dir;
  auto csv = dir.write("meter.csv", "a,b\n1,2\n3,\n5,6\n");
  auto store = (dir / "s.crb.jsonl").string();
  auto r = cli("ingest " + csv.string() + " --domain Energy --freq Hourly --start '2020-01-01 00:00:00' -o " + store);
  CHECK(r.code == 0);
  CHECK(r.out == "2 records written\n");
  auto recs = read_store(store);
  REQUIRE(recs.size() == 2);
  CHECK(recs[1].target == std::vector<double>{2, 4, 6});
  CHECK(recs[0].end == "2020-01-01 02:00:00");

  auto again = cli("ingest " + csv.string() + " --domain Energy -o " + store);
  CHECK(again.code == 2);
  CHECK(again.out.find("duplicate") != std::string::npos);

  auto missing = cli("ingest " + (dir / "nope.csv").string() + " --domain Energy -o " + store);
  CHECK(missing.code == 2);
  CHECK(missing.out.find("nope.csv") != std::string::npos);
}

TEST_CASE("build summary and determinism") {
  TempDir dir;
  auto store = three_groups(dir).string();
  auto a = cli("build " + store + " --window 8 --cap 256 --seed 3 -o " + (dir / "a.tree").string());
  CHECK(a.code == 0);
  CHECK(a.out.find("Energy: clusters=3") != std::string::npos);
  auto b = cli("build " + store + " --window 8 --cap 256 --seed 3 -o " + (dir / "b.tree").string());
  CHECK(b.code == 0);
  CHECK(slurp(dir / "a.tree") == slurp(dir / "b.tree"));

  auto empty = dir.write("empty.crb.jsonl", "");
  auto none = cli("build " + empty.string() + " --window 8 -o " + (dir / "c.tree").string());
  CHECK(none.code == 2);
  CHECK(cli("build -o " + (dir / "c.tree").string()).code == 1);
}

TEST_CASE("invalid configuration is rejected before any work") {
  TempDir dir;
  auto store = three_groups(dir).string();
  auto r = cli("build " + store + " --window 8 --rho 2 -o " + (dir / "t.tree").string());
  CHECK(r.code == 1);
  CHECK(r.out.find("rho") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "t.tree"));
  auto cfg = dir.write("bad.cfg", "window=8\nbogus=1\n");
  auto u = cli("build " + store + " --config " + cfg.string() + " -o " + (dir / "t.tree").string());
  CHECK(u.code == 1);
  CHECK(u.out.find("bogus") != std::string::npos);
}

TEST_CASE("query") {
  TempDir dir;
  auto store = (dir / "c.crb.jsonl").string();
  REQUIRE(cli("synth --kind retrieval --count 2000 --length 16 --seed 2 -o " + store).code == 0);
  auto tree = (dir / "c.tree").string();
  REQUIRE(cli("build " + store + " --window 16 --cap 64 -o " + tree).code == 0);

  auto exact = cli("query --tree " + tree + " --window-id 'Energy/syn100@00000000' --machine");
  REQUIRE(exact.code == 0);
  auto rows = lines(exact.out);
  REQUIRE(rows.size() == 8);
  CHECK(rows[0].rfind("Energy/syn100@00000000,", 0) == 0);
  const std::regex row_format(R"(^[^,]+,-?\d+\.\d{6},[A-Za-z0-9]+$)");
  for (const auto& r : rows) CHECK(std::regex_match(r, row_format));

  auto local = cli("query --tree " + tree + " --window-id 'Energy/syn100@00000000' --domain Energy --rho 1");
  auto global = cli("query --tree " + tree + " --window-id 'Energy/syn100@00000000' --domain Energy --rho 0");
  CHECK(local.out.find("local=8 global=0") != std::string::npos);
  CHECK(global.out.find("local=0 global=8") != std::string::npos);
  CHECK(local.out != global.out);

  auto numbers = dir.write("target.csv", "value\n" + std::string("1\n2\n3\n4\n5\n6\n7\n8\n9\n10\n11\n12\n13\n14\n15\n16\n17\n"));
  auto byfile = cli("query --tree " + tree + " --target " + numbers.string() + " --k 3 --machine");
  CHECK(byfile.code == 0);
  CHECK(lines(byfile.out).size() == 3);
  auto shortfile = dir.write("short.csv", "1,2,3\n");
  CHECK(cli("query --tree " + tree + " --target " + shortfile.string()).code == 2);
}

TEST_CASE("eval sweep") {
  TempDir dir;
  auto store = (dir / "c.crb.jsonl").string();
  REQUIRE(cli("synth --kind retrieval --count 3000 --length 16 --seed 5 -o " + store).code == 0);
  auto tree = (dir / "c.tree").string();
  REQUIRE(cli("build " + store + " --window 16 --cap 64 -o " + tree).code == 0);
  auto report = (dir / "eval.csv").string();
  auto r = cli("eval --tree " + tree + " " + store + " --queries 40 --sweep-k 8,4 --report " + report);
  REQUIRE(r.code == 0);
  auto rows = lines(slurp(report));
  REQUIRE(rows.size() == 11);
  CHECK(rows[0] == "probes,k,queries,recall,mean_evaluations,oracle_evaluations,us_per_query");
  double last = -1;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::vector<std::string> f;
    std::istringstream in(rows[i]);
    for (std::string c; std::getline(in, c, ',');) f.push_back(c);
    REQUIRE(f.size() == 7);
    const double recall = std::stod(f[3]);
    if (f[0] == "1") last = -1;
    CHECK(recall >= last);
    last = recall;
    if (f[0] == "all") CHECK(f[3] == "1.000000");
    CHECK(f[5] == "3000");
    if (f[0] == "4") CHECK(std::stod(f[4]) < 3000.0 / 5.0);
  }
}

TEST_CASE("insert and stats") {
  TempDir dir;
  auto store = (dir / "c.crb.jsonl").string();
  auto more = (dir / "m.crb.jsonl").string();
  REQUIRE(cli("synth --kind retrieval --count 300 --length 16 --seed 1 -o " + store).code == 0);
  auto tree = (dir / "c.tree").string();
  REQUIRE(cli("build " + store + " --window 16 --cap 32 -o " + tree).code == 0);
  std::vector<StoreRecord> extra;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> v(16);
    for (int t = 0; t < 16; ++t) v[t] = std::sin(0.3 * t + i);
    extra.push_back(make_record("Web", "new" + std::to_string(i), "-", "-", v));
  }
  write_store(extra, more);
  auto ins = cli("insert --tree " + tree + " " + more);
  CHECK(ins.code == 0);
  CHECK(ins.out.find("50 windows inserted") != std::string::npos);
  auto st = cli("stats --tree " + tree + " " + store);
  CHECK(st.code == 0);
  CHECK(st.out.find("windows=350") != std::string::npos);
  CHECK(st.out.find("invariants: ok") != std::string::npos);
  CHECK(st.out.find("Web: windows=50") != std::string::npos);
  CHECK(st.out.find("records=300") != std::string::npos);
}

TEST_CASE("forecast arms") {
  TempDir dir;
  const std::string cfg =
      " --window 16 --stride 4 --horizon 4 --sample_stride 4 --cap 32 --d 4 --h 4 --epochs 3 --batch 16";
  auto store = (dir / "f.crb.jsonl").string();
  REQUIRE(cli("synth --kind forecast --count 2 --length 160 --domains 2 -o " + store + cfg).code == 0);
  auto tree = (dir / "f.tree").string();
  REQUIRE(cli("build " + store + " -o " + tree + cfg).code == 0);

  auto rag1 = cli("forecast --tree " + tree + " " + store + cfg + " --report " + (dir / "r1.csv").string() +
                  " --params-out " + (dir / "p1.txt").string());
  auto rag2 = cli("forecast --tree " + tree + " " + store + cfg + " --report " + (dir / "r2.csv").string() +
                  " --params-out " + (dir / "p2.txt").string());
  REQUIRE(rag1.code == 0);
  CHECK(slurp(dir / "r1.csv") == slurp(dir / "r2.csv"));
  CHECK(slurp(dir / "p1.txt") == slurp(dir / "p2.txt"));
  auto rows = lines(slurp(dir / "r1.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[3].rfind("rag,0,test,", 0) == 0);

  auto ab = cli("forecast " + store + cfg + " --ablate-rag");
  CHECK(ab.code == 0);
  CHECK(ab.out.find("ablate,0,test,") != std::string::npos);
  CHECK(cli("forecast " + store + cfg).code == 1);

  auto ext = cli("forecast --tree " + tree + " " + store + cfg +
                 " --backend 'external:cat > /dev/null; echo 0 0 0 0'");
  CHECK(ext.code == 0);
  CHECK(ext.out.find("external,0,test,") != std::string::npos);
  auto broken = cli("forecast --tree " + tree + " " + store + cfg + " --backend 'external:exit 3'");
  CHECK(broken.code == 3);
  auto mute = cli("forecast --tree " + tree + " " + store + cfg +
                  " --backend 'external:cat > /dev/null; echo nothing'");
  CHECK(mute.code == 3);
}

TEST_CASE("config printing honours overrides") {
  auto r = cli("config --k 5 --bandwidth 0.5");
  CHECK(r.code == 0);
  CHECK(r.out.find("k=5\n") != std::string::npos);
  CHECK(r.out.find("bandwidth=0.5\n") != std::string::npos);
  CHECK(cli("nosuch").code == 1);
}
