#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace tsrag {

/// Marker for a missing observation.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// Floor on the per-window scale so constant windows normalize to zeros.
inline constexpr double kScaleFloor = 1e-8;

bool is_missing(double v);

/// A raw series with N time steps and D channels, stored row-major.
struct RawSeries {
  std::string item_id;
  std::string domain;
  std::string start;
  std::string freq;
  std::size_t steps = 0;
  std::size_t channels = 0;
  std::vector<double> values;  // steps * channels, row-major; may hold kMissing

  RawSeries() = default;
  RawSeries(std::string item_id, std::string domain, std::string start, std::string freq,
            std::size_t steps, std::size_t channels, std::vector<double> values);

  /// Convenience constructor for a univariate series.
  static RawSeries univariate(std::string item_id, std::string domain, std::vector<double> values,
                              std::string start = "-", std::string freq = "-");

  double at(std::size_t step, std::size_t channel) const { return values[step * channels + channel]; }
  std::vector<double> column(std::size_t channel) const;

  /// Throws DataError if any structural invariant is broken.
  void validate() const;
};

/// One fixed-length segment of one channel.
struct SeriesWindow {
  std::string parent_id;
  std::size_t channel = 0;
  std::size_t offset = 0;
  std::vector<double> values;
  std::string domain;

  /// Stable identifier: "<domain>/<parent_id>@<offset>" with the offset zero-padded to 8 digits.
  std::string id() const;
};

struct NormStats {
  double loc = 0.0;
  double scale = 1.0;
};

struct Normalized {
  std::vector<double> values;
  NormStats stats;
};

/// Fills interior gaps linearly and edge gaps with the nearest present value.
/// Throws DataError("uninterpolatable series") when every entry is missing.
std::vector<double> interpolate_missing(std::span<const double> values);

/// One univariate series per channel; item ids get a "_<channel>" suffix.
std::vector<RawSeries> split_channels(const RawSeries& series);

/// Windows of length `window` every `stride` steps; the tail that does not fill a window is dropped.
std::vector<SeriesWindow> segment_windows(const RawSeries& series, std::size_t window,
                                          std::size_t stride);

/// Number of windows `segment_windows` produces.
std::size_t window_count(std::size_t steps, std::size_t window, std::size_t stride);

/// Z-normalization with population standard deviation, scale floored at kScaleFloor.
Normalized normalize(std::span<const double> window);

std::vector<double> denormalize(std::span<const double> values, const NormStats& stats);

}  // namespace tsrag
