#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tsrag/series.hpp"

namespace tsrag {

/// One univariate series with the unified metadata protocol.
struct StoreRecord {
  std::string domain_category;
  std::string item_id;
  std::string start;
  std::string end;
  std::string freq;
  std::vector<double> target;

  bool operator==(const StoreRecord&) const = default;
};

/// Field order of a store line.
inline constexpr const char* kStoreKeys[] = {"domain_category", "item_id", "start",
                                              "end",             "freq",    "target"};

/// Builds a record, deriving `end` from start + (n - 1) * freq when both are
/// regular and parseable, otherwise "-".
StoreRecord make_record(std::string domain, std::string item_id, std::string start,
                        std::string freq, std::vector<double> target);

/// Timestamp of `start` advanced by `steps` sampling intervals, in the same
/// textual layout as `start`. Empty when either the timestamp or the frequency
/// is not understood (irregular "-" frequencies included).
std::string advance_timestamp(const std::string& start, const std::string& freq, std::size_t steps);

/// Throws DataError when a record breaks the store invariants.
void validate_records(const std::vector<StoreRecord>& records);

/// One JSON object per line, keys in kStoreKeys order, reals in shortest round-trip form.
std::string encode_record(const StoreRecord& record);

void write_store(const std::vector<StoreRecord>& records, const std::filesystem::path& path);
std::vector<StoreRecord> read_store(const std::filesystem::path& path);

/// Parses a CSV (header required; optional leading timestamp column) into one
/// record per numeric column. Empty and NaN cells are repaired by interpolation.
std::vector<StoreRecord> ingest_csv(const std::filesystem::path& path, const std::string& domain,
                                    const std::string& freq, const std::string& start = "-");

RawSeries to_series(const StoreRecord& record);

/// Windows of every record. Records shorter than `window` are skipped when
/// `skip_short` is set, otherwise they raise DataError.
std::vector<SeriesWindow> windows_from_records(const std::vector<StoreRecord>& records,
                                               std::size_t window, std::size_t stride,
                                               bool skip_short = false);

}  // namespace tsrag
