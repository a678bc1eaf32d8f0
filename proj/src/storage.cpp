#include "tsrag/storage.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "tsrag/error.hpp"
#include "tsrag/format.hpp"

namespace tsrag {
namespace {

// Proleptic Gregorian day count relative to 1970-01-01.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

unsigned days_in_month(std::int64_t y, unsigned m) {
  static constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  return m == 2 && leap ? 29 : kDays[m - 1];
}

enum class Layout { Compact, Date, DateTimeMinutes, DateTimeSeconds };

struct Timestamp {
  std::int64_t seconds = 0;  // since epoch
  Layout layout = Layout::Date;
  char separator = ' ';
};

bool digits(const std::string& s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

std::optional<Timestamp> parse_timestamp(const std::string& s) {
  int y = 0, mo = 0, d = 0, hh = 0, mi = 0, ss = 0;
  Timestamp ts;
  if (s.size() == 8) {
    if (!digits(s, 0, 4, y) || !digits(s, 4, 2, mo) || !digits(s, 6, 2, d)) return std::nullopt;
    ts.layout = Layout::Compact;
  } else if (s.size() >= 10 && s[4] == '-' && s[7] == '-') {
    if (!digits(s, 0, 4, y) || !digits(s, 5, 2, mo) || !digits(s, 8, 2, d)) return std::nullopt;
    if (s.size() == 10) {
      ts.layout = Layout::Date;
    } else if ((s.size() == 16 || s.size() == 19) && (s[10] == ' ' || s[10] == 'T') &&
               s[13] == ':') {
      ts.separator = s[10];
      if (!digits(s, 11, 2, hh) || !digits(s, 14, 2, mi)) return std::nullopt;
      ts.layout = Layout::DateTimeMinutes;
      if (s.size() == 19) {
        if (s[16] != ':' || !digits(s, 17, 2, ss)) return std::nullopt;
        ts.layout = Layout::DateTimeSeconds;
      }
    } else {
      return std::nullopt;
    }
  } else {
    return std::nullopt;
  }
  if (mo < 1 || mo > 12 || d < 1 || static_cast<unsigned>(d) > days_in_month(y, mo) || hh > 23 ||
      mi > 59 || ss > 59)
    return std::nullopt;
  ts.seconds = days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 +
               hh * 3600 + mi * 60 + ss;
  return ts;
}

std::string format_timestamp(const Timestamp& ts) {
  const std::int64_t days = ts.seconds >= 0 ? ts.seconds / 86400 : -((-ts.seconds + 86399) / 86400);
  const std::int64_t rem = ts.seconds - days * 86400;
  std::int64_t y = 0;
  unsigned m = 0, d = 0;
  civil_from_days(days, y, m, d);
  const int hh = static_cast<int>(rem / 3600), mi = static_cast<int>(rem % 3600 / 60),
            ss = static_cast<int>(rem % 60);
  Layout layout = ts.layout;
  if ((layout == Layout::Compact || layout == Layout::Date) && rem != 0)
    layout = Layout::DateTimeSeconds;
  if (layout == Layout::DateTimeMinutes && ss != 0) layout = Layout::DateTimeSeconds;
  char buf[48];
  switch (layout) {
    case Layout::Compact:
      std::snprintf(buf, sizeof(buf), "%04lld%02u%02u", static_cast<long long>(y), m, d);
      break;
    case Layout::Date:
      std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02u", static_cast<long long>(y), m, d);
      break;
    case Layout::DateTimeMinutes:
      std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02u%c%02d:%02d", static_cast<long long>(y), m,
                    d, ts.separator, hh, mi);
      break;
    case Layout::DateTimeSeconds:
      std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02u%c%02d:%02d:%02d",
                    static_cast<long long>(y), m, d, ts.separator, hh, mi, ss);
      break;
  }
  return buf;
}

struct Step {
  std::int64_t seconds = 0;
  std::int64_t months = 0;
};

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::optional<Step> parse_freq(const std::string& freq) {
  std::string f = lower(freq);
  f.erase(std::remove(f.begin(), f.end(), ' '), f.end());
  std::size_t i = 0;
  while (i < f.size() && std::isdigit(static_cast<unsigned char>(f[i]))) ++i;
  std::int64_t mult = 1;
  if (i > 0) mult = std::stoll(f.substr(0, i));
  if (i < f.size() && f[i] == '.') return std::nullopt;  // sub-unit steps are not representable
  const std::string unit = f.substr(i);
  if (mult <= 0) return std::nullopt;
  auto secs = [&](std::int64_t s) { return Step{s * mult, 0}; };
  if (unit == "s" || unit == "sec" || unit == "secs" || unit == "second" || unit == "seconds")
    return secs(1);
  if (unit == "t" || unit == "min" || unit == "mins" || unit == "minute" || unit == "minutes" ||
      unit == "minutely")
    return secs(60);
  if (unit == "h" || unit == "hour" || unit == "hours" || unit == "hourly") return secs(3600);
  if (unit == "d" || unit == "day" || unit == "days" || unit == "daily") return secs(86400);
  if (unit == "w" || unit == "week" || unit == "weeks" || unit == "weekly") return secs(7 * 86400);
  if (unit == "m" || unit == "ms" || unit == "month" || unit == "months" || unit == "monthly")
    return Step{0, mult};
  if (unit == "y" || unit == "a" || unit == "year" || unit == "years" || unit == "yearly")
    return Step{0, 12 * mult};
  return std::nullopt;
}

void require_key(const nlohmann::json& obj, const char* key, std::size_t line) {
  if (!obj.contains(key))
    throw DataError("line " + std::to_string(line) + ": missing key '" + key + "'");
}

std::string string_field(const nlohmann::json& obj, const char* key, std::size_t line) {
  require_key(obj, key, line);
  const auto& v = obj.at(key);
  if (!v.is_string())
    throw DataError("line " + std::to_string(line) + ": key '" + key + "' must be a string");
  return v.get<std::string>();
}

// Splits one CSV line; double quotes group fields and "" escapes a quote.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool is_missing_cell(const std::string& cell) {
  const std::string t = lower(trim(cell));
  return t.empty() || t == "nan";
}

bool is_timestamp_header(const std::string& name) {
  static const std::set<std::string> kNames = {"date", "time", "timestamp", "datetime", "ds",
                                               "index", "date_time"};
  return kNames.count(lower(trim(name))) > 0;
}

}  // namespace

std::string advance_timestamp(const std::string& start, const std::string& freq,
                              std::size_t steps) {
  auto ts = parse_timestamp(start);
  auto step = parse_freq(freq);
  if (!ts || !step) return "";
  const auto n = static_cast<std::int64_t>(steps);
  if (step->months == 0) {
    ts->seconds += step->seconds * n;
    return format_timestamp(*ts);
  }
  const std::int64_t days = ts->seconds >= 0 ? ts->seconds / 86400 : -((-ts->seconds + 86399) / 86400);
  const std::int64_t rem = ts->seconds - days * 86400;
  std::int64_t y = 0;
  unsigned m = 0, d = 0;
  civil_from_days(days, y, m, d);
  const std::int64_t total = y * 12 + (m - 1) + step->months * n;
  const std::int64_t ny = total >= 0 ? total / 12 : -((-total + 11) / 12);
  const unsigned nm = static_cast<unsigned>(total - ny * 12) + 1;
  const unsigned nd = std::min(d, days_in_month(ny, nm));
  ts->seconds = days_from_civil(ny, nm, nd) * 86400 + rem;
  return format_timestamp(*ts);
}

StoreRecord make_record(std::string domain, std::string item_id, std::string start,
                        std::string freq, std::vector<double> target) {
  StoreRecord r;
  r.domain_category = std::move(domain);
  r.item_id = std::move(item_id);
  r.start = std::move(start);
  r.freq = std::move(freq);
  r.target = std::move(target);
  std::string end;
  if (!r.target.empty()) end = advance_timestamp(r.start, r.freq, r.target.size() - 1);
  r.end = end.empty() ? "-" : end;
  return r;
}

void validate_records(const std::vector<StoreRecord>& records) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : records) {
    if (r.domain_category.empty() || r.item_id.empty())
      throw DataError("store record needs a non-empty domain_category and item_id");
    if (r.target.empty()) throw DataError("store record '" + r.item_id + "' has an empty target");
    for (double v : r.target)
      if (!std::isfinite(v))
        throw DataError("store record '" + r.item_id + "' has a non-finite target value");
    if (!seen.emplace(r.domain_category, r.item_id).second)
      throw DataError("duplicate record id '" + r.domain_category + "/" + r.item_id + "'");
  }
}

std::string encode_record(const StoreRecord& r) {
  std::string line = "{\"domain_category\":" + json_quote(r.domain_category) +
                     ",\"item_id\":" + json_quote(r.item_id) + ",\"start\":" + json_quote(r.start) +
                     ",\"end\":" + json_quote(r.end) + ",\"freq\":" + json_quote(r.freq) +
                     ",\"target\":[";
  for (std::size_t i = 0; i < r.target.size(); ++i) {
    if (i) line += ',';
    line += shortest(r.target[i]);
  }
  line += "]}";
  return line;
}

void write_store(const std::vector<StoreRecord>& records, const std::filesystem::path& path) {
  validate_records(records);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open store for writing: " + path.string());
  for (const auto& r : records) out << encode_record(r) << '\n';
  out.flush();
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<StoreRecord> read_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open store: " + path.string());
  std::vector<StoreRecord> records;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": line " + std::to_string(lineno) +
                      ": malformed record: " + e.what());
    }
    if (!obj.is_object())
      throw DataError(path.string() + ": line " + std::to_string(lineno) +
                      ": malformed record: expected an object");
    try {
      for (const char* key : kStoreKeys) require_key(obj, key, lineno);
      for (const auto& item : obj.items()) {
        if (std::find_if(std::begin(kStoreKeys), std::end(kStoreKeys), [&](const char* k) {
              return item.key() == k;
            }) == std::end(kStoreKeys))
          throw DataError("line " + std::to_string(lineno) + ": unknown key '" + item.key() + "'");
      }
      StoreRecord r;
      r.domain_category = string_field(obj, "domain_category", lineno);
      r.item_id = string_field(obj, "item_id", lineno);
      r.start = string_field(obj, "start", lineno);
      r.end = string_field(obj, "end", lineno);
      r.freq = string_field(obj, "freq", lineno);
      const auto& target = obj.at("target");
      if (!target.is_array() || target.empty())
        throw DataError("line " + std::to_string(lineno) + ": target must be a non-empty array");
      r.target.reserve(target.size());
      for (const auto& v : target) {
        if (!v.is_number())
          throw DataError("line " + std::to_string(lineno) + ": target holds a non-number");
        r.target.push_back(v.get<double>());
      }
      if (r.domain_category.empty() || r.item_id.empty())
        throw DataError("line " + std::to_string(lineno) + ": empty domain_category or item_id");
      if (!seen.emplace(r.domain_category, r.item_id).second)
        throw DataError("line " + std::to_string(lineno) + ": duplicate record id '" +
                        r.domain_category + "/" + r.item_id + "'");
      records.push_back(std::move(r));
    } catch (const DataError& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  return records;
}

std::vector<StoreRecord> ingest_csv(const std::filesystem::path& path, const std::string& domain,
                                    const std::string& freq, const std::string& start) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open CSV: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header row");
  const auto header = split_csv_line(line);

  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_lines;
  std::size_t lineno = 1;
  std::vector<std::size_t> blank;  // single-column files: a blank line is a missing cell
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      if (header.size() == 1 && !rows.empty()) blank.push_back(lineno);
      continue;
    }
    for (std::size_t b : blank) {
      rows.push_back({""});
      row_lines.push_back(b);
    }
    blank.clear();
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError(path.string() + ": line " + std::to_string(lineno) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(fields.size()));
    rows.push_back(std::move(fields));
    row_lines.push_back(lineno);
  }
  if (rows.empty()) throw DataError(path.string() + ": no data rows");

  bool has_timestamp = is_timestamp_header(header[0]);
  if (!has_timestamp && header.size() > 1 && !is_missing_cell(rows[0][0])) {
    double probe = 0.0;
    has_timestamp = !parse_double(rows[0][0], probe);
  }
  const std::size_t first_col = has_timestamp ? 1 : 0;
  if (first_col >= header.size()) throw DataError(path.string() + ": no numeric columns");
  const std::size_t channels = header.size() - first_col;
  const std::size_t steps = rows.size();

  std::vector<double> values(steps * channels);
  for (std::size_t i = 0; i < steps; ++i) {
    for (std::size_t j = 0; j < channels; ++j) {
      const std::string& cell = rows[i][first_col + j];
      double v = kMissing;
      if (!is_missing_cell(cell)) {
        if (!parse_double(cell, v) || !std::isfinite(v))
          throw DataError(path.string() + ": line " + std::to_string(row_lines[i]) + ", column " +
                          std::to_string(first_col + j + 1) + " ('" + trim(header[first_col + j]) +
                          "'): non-numeric cell '" + cell + "'");
      }
      values[i * channels + j] = v;
    }
  }

  std::string series_start = start;
  std::string series_end;
  if (has_timestamp) {
    series_start = trim(rows.front()[0]);
    series_end = trim(rows.back()[0]);
  }
  RawSeries raw(path.stem().string(), domain, series_start, freq, steps, channels,
                std::move(values));
  std::vector<StoreRecord> out;
  for (auto& channel : split_channels(raw)) {
    StoreRecord r = make_record(domain, channel.item_id, series_start, freq,
                                interpolate_missing(channel.values));
    if (has_timestamp) r.end = series_end.empty() ? "-" : series_end;
    out.push_back(std::move(r));
  }
  return out;
}

RawSeries to_series(const StoreRecord& record) {
  return RawSeries::univariate(record.item_id, record.domain_category, record.target, record.start,
                               record.freq);
}

std::vector<SeriesWindow> windows_from_records(const std::vector<StoreRecord>& records,
                                               std::size_t window, std::size_t stride,
                                               bool skip_short) {
  std::vector<SeriesWindow> out;
  for (const auto& r : records) {
    if (r.target.size() < window && skip_short) continue;
    auto ws = segment_windows(to_series(r), window, stride);
    out.insert(out.end(), std::make_move_iterator(ws.begin()), std::make_move_iterator(ws.end()));
  }
  return out;
}

}  // namespace tsrag
