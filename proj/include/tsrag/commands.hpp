#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tsrag/config.hpp"
#include "tsrag/forecast.hpp"
#include "tsrag/tree.hpp"

namespace tsrag {

namespace fs = std::filesystem;

struct IngestArgs {
  std::vector<fs::path> csvs;
  std::string domain;
  std::string freq = "-";
  std::string start = "-";
  fs::path out;
};

/// Parses the CSVs and merges their records into `out` (created when absent).
/// Prints "<n> records written" with the number of new records.
std::size_t cmd_ingest(const IngestArgs& args, std::ostream& out);

/// Z-normalized windows of every record, ready to index or to query with.
std::vector<SeriesWindow> normalized_windows(const std::vector<StoreRecord>& records,
                                             std::size_t window, std::size_t stride);

std::vector<StoreRecord> read_stores(const std::vector<fs::path>& stores);

struct BuildArgs {
  std::vector<fs::path> stores;
  fs::path out;
};

/// Builds and saves a tree; prints one summary line per domain.
SeriesTree cmd_build(const BuildArgs& args, const RunConfig& config, std::ostream& out);

struct QueryArgs {
  fs::path tree;
  std::optional<fs::path> target;   // file of numbers; the last `window` values are used
  std::optional<std::string> window_id;  // alternatively, an indexed window
  std::optional<std::string> domain;
  bool machine = false;
};

Retrieval cmd_query(const QueryArgs& args, const RunConfig& config, std::ostream& out);

struct InsertArgs {
  fs::path tree;
  std::vector<fs::path> stores;
  std::optional<fs::path> out;  // defaults to overwriting `tree`
};

std::size_t cmd_insert(const InsertArgs& args, const RunConfig& config, std::ostream& out);

struct EvalArgs {
  fs::path tree;
  std::vector<fs::path> stores;       // queries come from these windows
  std::size_t queries = 100;          // sampled (seeded) from the store windows
  std::vector<std::size_t> probes = {1, 2, 4, 8, 0};  // 0: all clusters
  std::vector<std::size_t> ks;        // empty: config k
  std::size_t threads = 0;            // 0: hardware concurrency
  std::optional<fs::path> report;
};

struct EvalRow {
  std::size_t probes = 0;  // 0: all
  std::size_t k = 0;
  std::size_t queries = 0;
  double recall = 0.0;
  double mean_evaluations = 0.0;
  std::size_t oracle_evaluations = 0;
  double us_per_query = 0.0;
};

/// Recall and cost of global retrieval against the exhaustive scan, as CSV
/// with header `probes,k,queries,recall,mean_evaluations,oracle_evaluations,us_per_query`.
std::vector<EvalRow> cmd_eval(const EvalArgs& args, const RunConfig& config, std::ostream& out);
std::string eval_csv(const std::vector<EvalRow>& rows);

struct ForecastArgs {
  std::optional<fs::path> tree;
  std::vector<fs::path> stores;
  bool ablate_rag = false;
  std::optional<std::string> backend;  // "external:<command>"
  std::optional<fs::path> report;
  std::optional<fs::path> params_out;
};

ForecastReport cmd_forecast(const ForecastArgs& args, const RunConfig& config, std::ostream& out);

struct StatsArgs {
  std::optional<fs::path> tree;
  std::vector<fs::path> stores;
};

void cmd_stats(const StatsArgs& args, std::ostream& out);

struct SynthArgs {
  std::string kind = "forecast";  // "forecast" or "retrieval"
  std::size_t count = 0;          // retrieval: windows; forecast: series per domain (0: default)
  std::size_t domains = 4;
  std::size_t length = 0;         // forecast: series length; retrieval: window (0: default)
  fs::path out;
};

std::size_t cmd_synth(const SynthArgs& args, const RunConfig& config, std::ostream& out);

}  // namespace tsrag
