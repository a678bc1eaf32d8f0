#include "tsrag/commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "tsrag/error.hpp"
#include "tsrag/format.hpp"
#include "tsrag/synthetic.hpp"

namespace tsrag {

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("cannot write " + path.string());
}

TreeOptions tree_options(const RunConfig& c) {
  return {c.cap, c.seed, c.max_iters, c.tol};
}

std::vector<double> read_numbers(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path.string());
  std::vector<double> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(f, line); ++lineno) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream tokens(line);
    std::vector<double> row;
    std::string tok;
    bool bad = false;
    while (tokens >> tok) {
      double v;
      if (!parse_double(tok, v)) {
        bad = true;
        break;
      }
      row.push_back(v);
    }
    if (bad) {
      if (lineno == 1) continue;  // header
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-numeric value '" +
                      tok + "'");
    }
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

}  // namespace

std::vector<StoreRecord> read_stores(const std::vector<fs::path>& stores) {
  if (stores.empty()) throw ConfigError("no store given");
  std::vector<StoreRecord> all;
  for (const auto& p : stores) {
    auto recs = read_store(p);
    all.insert(all.end(), std::make_move_iterator(recs.begin()),
               std::make_move_iterator(recs.end()));
  }
  validate_records(all);
  return all;
}

std::size_t cmd_ingest(const IngestArgs& args, std::ostream& out) {
  if (args.csvs.empty()) throw ConfigError("no CSV given");
  if (args.domain.empty()) throw ConfigError("domain must not be empty");
  std::vector<StoreRecord> records;
  if (fs::exists(args.out)) records = read_store(args.out);
  std::size_t added = 0;
  for (const auto& csv : args.csvs) {
    auto recs = ingest_csv(csv, args.domain, args.freq, args.start);
    added += recs.size();
    records.insert(records.end(), std::make_move_iterator(recs.begin()),
                   std::make_move_iterator(recs.end()));
  }
  validate_records(records);
  write_store(records, args.out);
  out << added << " records written\n";
  return added;
}

std::vector<SeriesWindow> normalized_windows(const std::vector<StoreRecord>& records,
                                             std::size_t window, std::size_t stride) {
  auto windows = windows_from_records(records, window, stride, true);
  for (auto& w : windows) w.values = normalize(w.values).values;
  return windows;
}

SeriesTree cmd_build(const BuildArgs& args, const RunConfig& config, std::ostream& out) {
  config.validate();
  auto records = read_stores(args.stores);
  auto windows = normalized_windows(records, config.window, config.effective_stride());
  if (windows.empty())
    throw DataError("no series is at least " + std::to_string(config.window) + " steps long");
  auto tree = SeriesTree::build(std::move(windows), tree_options(config));
  tree.save(args.out);
  out << "windows=" << tree.size() << " domains=" << tree.domains().size()
      << " clusters=" << tree.cluster_count() << "\n";
  for (const auto& [name, dom] : tree.domains()) {
    out << name << ": clusters=" << dom.clusters.size() << " sizes=";
    for (std::size_t i = 0; i < dom.clusters.size(); ++i)
      out << (i ? "," : "") << dom.clusters[i].members.size();
    out << "\n";
  }
  return tree;
}

Retrieval cmd_query(const QueryArgs& args, const RunConfig& config, std::ostream& out) {
  config.validate();
  auto tree = SeriesTree::load(args.tree);
  const std::size_t w = tree.window_size();
  Query q;
  if (args.window_id) {
    auto h = tree.windows().find(*args.window_id);
    if (!h) throw DataError("unknown window id " + *args.window_id);
    q.target = normalize(tree.windows()[*h].values).values;
  } else if (args.target) {
    auto values = read_numbers(*args.target);
    if (values.size() < w)
      throw DataError(args.target->string() + ": " + std::to_string(values.size()) +
                      " values, window needs " + std::to_string(w));
    auto tail = std::span<const double>(values).subspan(values.size() - w);
    q.target = normalize(interpolate_missing(tail)).values;
  } else {
    throw ConfigError("query needs --target or --window-id");
  }
  q.domain = args.domain;
  q.k = config.k;
  q.rho = config.rho;
  q.probes = config.probes;
  auto res = retrieve_topk(q, tree);
  if (args.machine) {
    for (const auto& h : res.hits) out << h.window_id << ',' << fixed(h.score, 6) << ',' << h.domain << '\n';
    return res;
  }
  out << "hits=" << res.hits.size() << " local=" << res.local_hits << " global=" << res.global_hits
      << " evaluations=" << res.stats.evaluations << " clusters_probed=" << res.stats.clusters_probed
      << "\n";
  for (std::size_t i = 0; i < res.hits.size(); ++i) {
    const auto& h = res.hits[i];
    out << (i + 1) << "  " << fixed(h.score, 6) << "  " << h.domain << "  " << h.window_id << "\n";
  }
  return res;
}

std::size_t cmd_insert(const InsertArgs& args, const RunConfig& config, std::ostream& out) {
  config.validate();
  auto tree = SeriesTree::load(args.tree);
  auto records = read_stores(args.stores);
  auto windows = normalized_windows(records, tree.window_size(), config.effective_stride());
  const std::size_t before = tree.cluster_count();
  for (auto& w : windows) tree.insert(std::move(w));
  tree.save(args.out ? *args.out : args.tree);
  out << windows.size() << " windows inserted, clusters " << before << " -> " << tree.cluster_count()
      << "\n";
  return windows.size();
}

std::string eval_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream s;
  s << "probes,k,queries,recall,mean_evaluations,oracle_evaluations,us_per_query\n";
  for (const auto& r : rows) {
    s << (r.probes == 0 ? std::string("all") : std::to_string(r.probes)) << ',' << r.k << ','
      << r.queries << ',' << fixed(r.recall, 6) << ',' << fixed(r.mean_evaluations, 2) << ','
      << r.oracle_evaluations << ',' << fixed(r.us_per_query, 2) << '\n';
  }
  return s.str();
}

std::vector<EvalRow> cmd_eval(const EvalArgs& args, const RunConfig& config, std::ostream& out) {
  config.validate();
  auto tree = SeriesTree::load(args.tree);
  auto records = read_stores(args.stores);
  auto pool = normalized_windows(records, tree.window_size(), config.effective_stride());
  if (pool.empty()) throw DataError("no query windows");
  Rng rng(config.seed);
  std::vector<std::size_t> pick(pool.size());
  for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
  const std::size_t n = std::min(args.queries, pool.size());
  for (std::size_t i = 0; i < n; ++i) std::swap(pick[i], pick[i + rng.below(pick.size() - i)]);
  pick.resize(n);

  std::vector<std::size_t> ks = args.ks.empty() ? std::vector<std::size_t>{config.k} : args.ks;
  std::size_t threads = args.threads ? args.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);

  auto parallel = [&](auto&& body) {
    std::vector<std::thread> workers;
    for (std::size_t t = 0; t < threads; ++t)
      workers.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += threads) body(i);
      });
    for (auto& th : workers) th.join();
  };

  std::vector<EvalRow> rows;
  for (std::size_t k : ks) {
    std::vector<std::set<std::string>> truth(n);
    parallel([&](std::size_t i) {
      Query q;
      q.target = pool[pick[i]].values;
      q.k = k;
      for (const auto& h : linear_scan_oracle(q, tree).hits) truth[i].insert(h.window_id);
    });
    for (std::size_t p : args.probes) {
      std::vector<double> recall(n), evals(n), micros(n);
      parallel([&](std::size_t i) {
        Query q;
        q.target = pool[pick[i]].values;
        q.k = k;
        q.probes = p == 0 ? tree.cluster_count() : p;
        const auto t0 = std::chrono::steady_clock::now();
        auto res = retrieve_global(q, tree);
        const auto t1 = std::chrono::steady_clock::now();
        micros[i] = std::chrono::duration<double, std::micro>(t1 - t0).count();
        evals[i] = static_cast<double>(res.stats.evaluations);
        std::size_t found = 0;
        for (const auto& h : res.hits) found += truth[i].count(h.window_id);
        recall[i] = truth[i].empty() ? 1.0 : static_cast<double>(found) / static_cast<double>(truth[i].size());
      });
      auto mean = [n](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(n);
      };
      rows.push_back({p, k, n, mean(recall), mean(evals), tree.size(), mean(micros)});
    }
  }
  const auto csv = eval_csv(rows);
  if (args.report) write_text(*args.report, csv);
  out << csv;
  return rows;
}

ForecastReport cmd_forecast(const ForecastArgs& args, const RunConfig& config, std::ostream& out) {
  config.validate();
  auto options = ForecastOptions::from_config(config);
  options.use_retrieval = !args.ablate_rag;
  std::optional<ExternalBackend> backend;
  if (args.backend) {
    const std::string prefix = "external:";
    if (args.backend->rfind(prefix, 0) != 0 || args.backend->size() == prefix.size())
      throw ConfigError("backend must be external:<command>");
    backend = ExternalBackend{args.backend->substr(prefix.size()),
                              std::chrono::milliseconds(config.timeout_ms)};
  }
  if (options.use_retrieval && !args.tree) throw ConfigError("forecast with retrieval needs --tree");
  auto records = read_stores(args.stores);
  std::optional<SeriesTree> tree;
  if (options.use_retrieval) tree = SeriesTree::load(*args.tree);
  const SeriesTree* tp = tree ? &*tree : nullptr;
  auto report = backend ? run_external_forecast(records, tp, options, *backend)
                        : run_forecast(records, tp, options);
  const auto csv = report.to_csv();
  if (args.report) write_text(*args.report, csv);
  if (args.params_out) {
    if (!report.params) throw ConfigError("the external backend has no parameters to save");
    save_params(*report.params, *args.params_out);
  }
  out << csv;
  return report;
}

void cmd_stats(const StatsArgs& args, std::ostream& out) {
  if (!args.tree && args.stores.empty()) throw ConfigError("stats needs --tree or a store");
  if (args.tree) {
    auto tree = SeriesTree::load(*args.tree);
    const auto& o = tree.options();
    out << "tree " << args.tree->string() << "\n"
        << "windows=" << tree.size() << " window=" << tree.window_size() << " cap=" << o.cap
        << " seed=" << o.seed << " clusters=" << tree.cluster_count() << "\n";
    for (const auto& [name, dom] : tree.domains()) {
      std::size_t lo = SIZE_MAX, hi = 0, total = 0;
      for (const auto& c : dom.clusters) {
        lo = std::min(lo, c.members.size());
        hi = std::max(hi, c.members.size());
        total += c.members.size();
      }
      out << name << ": windows=" << total << " clusters=" << dom.clusters.size()
          << " min=" << lo << " max=" << hi << "\n";
    }
    auto problems = tree.check_invariants();
    out << "invariants: " << (problems.empty() ? "ok" : std::to_string(problems.size()) + " broken")
        << "\n";
    for (const auto& p : problems) out << "  " << p << "\n";
  }
  if (!args.stores.empty()) {
    auto records = read_stores(args.stores);
    std::map<std::string, std::pair<std::size_t, std::size_t>> per;
    for (const auto& r : records) {
      per[r.domain_category].first += 1;
      per[r.domain_category].second += r.target.size();
    }
    out << "records=" << records.size() << " domains=" << per.size() << "\n";
    for (const auto& [name, c] : per)
      out << name << ": records=" << c.first << " points=" << c.second << "\n";
  }
}

std::size_t cmd_synth(const SynthArgs& args, const RunConfig& config, std::ostream& out) {
  if (args.domains == 0) throw ConfigError("domains must be positive");
  std::vector<StoreRecord> records;
  if (args.kind == "retrieval") {
    RetrievalCorpusSpec spec;
    if (args.count) spec.windows = args.count;
    if (args.length) spec.window = args.length;
    spec.domains = args.domains;
    spec.seed = config.seed;
    for (auto& w : make_retrieval_corpus(spec))
      records.push_back(make_record(w.domain, w.parent_id, "-", "-", std::move(w.values)));
  } else if (args.kind == "forecast") {
    ForecastCorpusSpec spec;
    if (args.count) spec.series_per_domain = args.count;
    if (args.length) spec.length = args.length;
    spec.domains = args.domains;
    spec.seed = config.seed;
    records = make_forecast_corpus(spec);
  } else {
    throw ConfigError("synth kind must be 'forecast' or 'retrieval'");
  }
  write_store(records, args.out);
  out << records.size() << " records written\n";
  return records.size();
}

}  // namespace tsrag
