#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tsrag/commands.hpp"
#include "tsrag/error.hpp"

namespace {

struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key=value config file");
    for (const auto& key : tsrag::RunConfig::keys())
      app->add_option("--" + key, values[key], "override config key '" + key + "'");
  }

  tsrag::RunConfig resolve() const {
    auto cfg = file.empty() ? tsrag::RunConfig{} : tsrag::RunConfig::load(file);
    for (const auto& [key, value] : values)
      if (!value.empty()) cfg.set(key, value);
    cfg.validate();
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical time-series retrieval and retrieval-augmented forecasting"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  ConfigFlags flags;

  tsrag::IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "parse CSV files into a store");
  c_ingest->add_option("csv", ingest.csvs, "CSV files")->required();
  c_ingest->add_option("--domain", ingest.domain, "domain category")->required();
  c_ingest->add_option("--freq", ingest.freq, "sampling frequency (e.g. Hourly, 15min, -)");
  c_ingest->add_option("--start", ingest.start, "start timestamp when the CSV has none");
  c_ingest->add_option("--out,-o", ingest.out, "store file (.crb.jsonl)")->required();

  tsrag::BuildArgs build;
  auto* c_build = app.add_subcommand("build", "build a tree from stores");
  c_build->add_option("store", build.stores, "store files")->required();
  c_build->add_option("--out,-o", build.out, "tree file")->required();

  tsrag::QueryArgs query;
  std::string q_target, q_window, q_domain;
  auto* c_query = app.add_subcommand("query", "top-k retrieval for one target window");
  c_query->add_option("--tree", query.tree, "tree file")->required();
  c_query->add_option("--target", q_target, "file of numbers; the last window is queried");
  c_query->add_option("--window-id", q_window, "query with an indexed window");
  c_query->add_option("--domain", q_domain, "domain of the target");
  c_query->add_flag("--machine", query.machine, "print id,score,domain lines");

  tsrag::InsertArgs insert;
  std::string i_out;
  auto* c_insert = app.add_subcommand("insert", "insert store windows into a tree");
  c_insert->add_option("--tree", insert.tree, "tree file")->required();
  c_insert->add_option("store", insert.stores, "store files")->required();
  c_insert->add_option("--out,-o", i_out, "output tree (default: overwrite)");

  tsrag::EvalArgs eval;
  std::vector<std::string> e_probes;
  std::string e_report;
  auto* c_eval = app.add_subcommand("eval", "recall and cost sweep against the exhaustive scan");
  c_eval->add_option("--tree", eval.tree, "tree file")->required();
  c_eval->add_option("store", eval.stores, "stores supplying query windows")->required();
  c_eval->add_option("--queries", eval.queries, "number of query windows");
  c_eval->add_option("--sweep-probes", e_probes, "probe counts; 'all' for every cluster")->delimiter(',');
  c_eval->add_option("--sweep-k", eval.ks, "k values (default: config k)")->delimiter(',');
  c_eval->add_option("--threads", eval.threads, "worker threads (0: all cores)");
  c_eval->add_option("--report", e_report, "CSV output file");

  tsrag::ForecastArgs forecast;
  std::string f_tree, f_backend, f_report, f_params;
  auto* c_forecast = app.add_subcommand("forecast", "train and score the forecaster");
  c_forecast->add_option("--tree", f_tree, "tree file");
  c_forecast->add_option("store", forecast.stores, "store files")->required();
  c_forecast->add_flag("--ablate-rag", forecast.ablate_rag, "disable retrieval");
  c_forecast->add_option("--backend", f_backend, "external:<command>");
  c_forecast->add_option("--report", f_report, "CSV output file");
  c_forecast->add_option("--params-out", f_params, "trained parameter checkpoint");

  tsrag::StatsArgs stats;
  std::string s_tree;
  auto* c_stats = app.add_subcommand("stats", "summarize a tree and/or stores");
  c_stats->add_option("--tree", s_tree, "tree file");
  c_stats->add_option("store", stats.stores, "store files");

  tsrag::SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "write a seeded synthetic store");
  c_synth->add_option("--kind", synth.kind, "forecast or retrieval")
      ->check(CLI::IsMember({"forecast", "retrieval"}));
  c_synth->add_option("--count", synth.count, "windows (retrieval) or series per domain (forecast)");
  c_synth->add_option("--domains", synth.domains, "number of domains");
  c_synth->add_option("--length", synth.length, "window (retrieval) or series length (forecast)");
  c_synth->add_option("--out,-o", synth.out, "store file")->required();

  auto* c_config = app.add_subcommand("config", "print the effective configuration");

  for (auto* sub : {c_ingest, c_build, c_query, c_insert, c_eval, c_forecast, c_stats, c_synth,
                    c_config})
    flags.attach(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const auto cfg = flags.resolve();
    auto opt = [](const std::string& s) {
      return s.empty() ? std::nullopt : std::optional<std::string>(s);
    };
    if (c_ingest->parsed()) {
      tsrag::cmd_ingest(ingest, std::cout);
    } else if (c_build->parsed()) {
      tsrag::cmd_build(build, cfg, std::cout);
    } else if (c_query->parsed()) {
      if (!q_target.empty()) query.target = q_target;
      query.window_id = opt(q_window);
      query.domain = opt(q_domain);
      tsrag::cmd_query(query, cfg, std::cout);
    } else if (c_insert->parsed()) {
      if (!i_out.empty()) insert.out = i_out;
      tsrag::cmd_insert(insert, cfg, std::cout);
    } else if (c_eval->parsed()) {
      if (!e_probes.empty()) {
        eval.probes.clear();
        for (const auto& p : e_probes) {
          if (p == "all") {
            eval.probes.push_back(0);
            continue;
          }
          std::size_t pos = 0;
          unsigned long v = 0;
          try {
            v = std::stoul(p, &pos);
          } catch (const std::exception&) {
            pos = 0;
          }
          if (pos != p.size() || v == 0) throw tsrag::ConfigError("bad probe count '" + p + "'");
          eval.probes.push_back(v);
        }
      }
      if (!e_report.empty()) eval.report = e_report;
      tsrag::cmd_eval(eval, cfg, std::cout);
    } else if (c_forecast->parsed()) {
      if (!f_tree.empty()) forecast.tree = f_tree;
      forecast.backend = opt(f_backend);
      if (!f_report.empty()) forecast.report = f_report;
      if (!f_params.empty()) forecast.params_out = f_params;
      tsrag::cmd_forecast(forecast, cfg, std::cout);
    } else if (c_stats->parsed()) {
      if (!s_tree.empty()) stats.tree = s_tree;
      tsrag::cmd_stats(stats, std::cout);
    } else if (c_synth->parsed()) {
      tsrag::cmd_synth(synth, cfg, std::cout);
    } else if (c_config->parsed()) {
      std::cout << cfg.to_text();
    }
  } catch (const tsrag::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const tsrag::BackendError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
