#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsrag/coherer.hpp"
#include "tsrag/config.hpp"
#include "tsrag/msil.hpp"
#include "tsrag/storage.hpp"
#include "tsrag/tree.hpp"

namespace tsrag {

enum class Split { Train, Val, Test };
const char* split_name(Split split);

/// Chronological boundaries of a length-n series: train [0, a), val [a, b), test [b, n)
/// with a = floor(0.6 n) and b = floor(0.8 n).
std::pair<std::size_t, std::size_t> split_bounds(std::size_t n);

struct ForecastOptions {
  std::size_t window = 512;
  std::size_t horizon = 96;
  std::size_t sample_stride = 48;
  std::size_t k = 8;
  double rho = 0.6;
  std::size_t probes = 4;
  std::size_t d = 16;
  std::size_t h = 16;
  std::size_t epochs = 40;
  std::size_t batch = 64;
  double lr = 0.01;
  LossConfig loss;
  std::uint64_t seed = 0;
  bool use_retrieval = true;

  static ForecastOptions from_config(const RunConfig& config);
};

/// A training/evaluation example together with what is needed to score it in
/// the original scale.
struct ForecastCase {
  FusionSample sample;
  NormStats stats;
  std::vector<double> future;  // raw values
  std::vector<Hit> hits;
  std::size_t record = 0;
  std::size_t anchor = 0;  // index of the first forecast step
};

/// Examples of one split. Forecast windows lie inside the split; contexts may
/// reach back into earlier data. With retrieval on, windows of the same series
/// that overlap the forecast window or anything after it are never admitted.
std::vector<ForecastCase> make_cases(const std::vector<StoreRecord>& records,
                                     const SeriesTree* tree, const ForecastOptions& options,
                                     Split split);

struct SplitScore {
  std::size_t samples = 0;
  double mse = 0.0;  // original scale
};

struct ForecastReport {
  std::string arm;  // "rag", "ablate" or "external"
  std::uint64_t seed = 0;
  std::optional<SplitScore> train, val;
  SplitScore test;
  std::size_t best_epoch = 0;
  std::vector<double> val_history;  // per epoch
  std::optional<ModelParams> params;

  /// Fixed header `arm,seed,split,samples,mse,best_epoch`, one row per split.
  std::string to_csv() const;
};

/// Original-scale MSE of a model over a set of cases.
SplitScore evaluate(const std::vector<ForecastCase>& cases, const ModelParams& params,
                    bool use_retrieval);

/// Trains fusion parameters and the linear head with Adam on the train split,
/// keeps the epoch with the lowest validation MSE and scores every split.
/// `tree` may be null only when retrieval is off.
ForecastReport run_forecast(const std::vector<StoreRecord>& records, const SeriesTree* tree,
                            const ForecastOptions& options);

/// Test split forecast through a text-model backend; no training.
ForecastReport run_external_forecast(const std::vector<StoreRecord>& records,
                                     const SeriesTree* tree, const ForecastOptions& options,
                                     const ExternalBackend& backend);

}  // namespace tsrag
