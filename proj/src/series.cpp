#include "tsrag/series.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "tsrag/error.hpp"

namespace tsrag {

bool is_missing(double v) { return std::isnan(v); }

RawSeries::RawSeries(std::string item_id_, std::string domain_, std::string start_,
                     std::string freq_, std::size_t steps_, std::size_t channels_,
                     std::vector<double> values_)
    : item_id(std::move(item_id_)),
      domain(std::move(domain_)),
      start(std::move(start_)),
      freq(std::move(freq_)),
      steps(steps_),
      channels(channels_),
      values(std::move(values_)) {
  validate();
}

RawSeries RawSeries::univariate(std::string item_id, std::string domain, std::vector<double> values,
                                std::string start, std::string freq) {
  const std::size_t n = values.size();
  return RawSeries(std::move(item_id), std::move(domain), std::move(start), std::move(freq), n, 1,
                   std::move(values));
}

std::vector<double> RawSeries::column(std::size_t channel) const {
  std::vector<double> out(steps);
  for (std::size_t i = 0; i < steps; ++i) out[i] = at(i, channel);
  return out;
}

void RawSeries::validate() const {
  if (item_id.empty()) throw DataError("series item_id must be non-empty");
  if (domain.empty()) throw DataError("series '" + item_id + "': domain must be non-empty");
  if (steps < 1 || channels < 1)
    throw DataError("series '" + item_id + "': needs at least one step and one channel");
  if (values.size() != steps * channels)
    throw DataError("series '" + item_id + "': value count does not match steps x channels");
}

std::string SeriesWindow::id() const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "@%08zu", offset);
  return domain + "/" + parent_id + buf;
}

std::vector<double> interpolate_missing(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  const std::size_t n = out.size();
  std::size_t first = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_missing(out[i])) {
      first = i;
      break;
    }
  }
  if (first == n) throw DataError("uninterpolatable series");

  for (std::size_t i = 0; i < first; ++i) out[i] = out[first];
  std::size_t prev = first;
  for (std::size_t i = first + 1; i < n; ++i) {
    if (is_missing(out[i])) continue;
    if (i - prev > 1) {
      const double a = out[prev];
      const double b = out[i];
      const double span = static_cast<double>(i - prev);
      for (std::size_t j = prev + 1; j < i; ++j)
        out[j] = a + (b - a) * (static_cast<double>(j - prev) / span);
    }
    prev = i;
  }
  for (std::size_t i = prev + 1; i < n; ++i) out[i] = out[prev];
  return out;
}

std::vector<RawSeries> split_channels(const RawSeries& series) {
  series.validate();
  std::vector<RawSeries> out;
  out.reserve(series.channels);
  for (std::size_t j = 0; j < series.channels; ++j) {
    out.push_back(RawSeries(series.item_id + "_" + std::to_string(j), series.domain, series.start,
                            series.freq, series.steps, 1, series.column(j)));
  }
  return out;
}

std::size_t window_count(std::size_t steps, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0 || window > steps) return 0;
  return (steps - window) / stride + 1;
}

std::vector<SeriesWindow> segment_windows(const RawSeries& series, std::size_t window,
                                          std::size_t stride) {
  if (series.channels != 1) throw DataError("segment_windows expects a univariate series");
  if (window == 0 || stride == 0) throw ConfigError("window and stride must be positive");
  if (window > series.steps) throw DataError("series shorter than window");
  const std::size_t count = window_count(series.steps, window, stride);
  std::vector<SeriesWindow> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t offset = k * stride;
    SeriesWindow w;
    w.parent_id = series.item_id;
    w.channel = 0;
    w.offset = offset;
    w.domain = series.domain;
    w.values.assign(series.values.begin() + static_cast<std::ptrdiff_t>(offset),
                    series.values.begin() + static_cast<std::ptrdiff_t>(offset + window));
    if (std::any_of(w.values.begin(), w.values.end(), is_missing))
      throw DataError("window " + w.id() + " contains missing values; interpolate first");
    out.push_back(std::move(w));
  }
  return out;
}

Normalized normalize(std::span<const double> window) {
  Normalized out;
  const double n = static_cast<double>(window.size());
  double sum = 0.0;
  for (double v : window) sum += v;
  const double mean = window.empty() ? 0.0 : sum / n;
  double ss = 0.0;
  for (double v : window) ss += (v - mean) * (v - mean);
  const double sd = window.empty() ? 0.0 : std::sqrt(ss / n);
  out.stats = {mean, std::max(sd, kScaleFloor)};
  out.values.resize(window.size());
  for (std::size_t i = 0; i < window.size(); ++i)
    out.values[i] = (window[i] - out.stats.loc) / out.stats.scale;
  return out;
}

std::vector<double> denormalize(std::span<const double> values, const NormStats& stats) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * stats.scale + stats.loc;
  return out;
}

}  // namespace tsrag
