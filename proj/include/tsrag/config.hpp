#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tsrag/coherer.hpp"

namespace tsrag {

/// Every tunable of the command-line tools. Text form is one `key=value` per line.
struct RunConfig {
  std::size_t window = 512;
  std::size_t stride = 0;  // 0: same as window
  std::size_t cap = 256;
  std::size_t k = 8;
  double rho = 0.6;
  std::size_t probes = 4;
  std::size_t d = 16;
  std::size_t h = 16;
  double lambda = 0.1;
  std::uint64_t seed = 0;
  MmdEstimator estimator = MmdEstimator::Biased;
  std::optional<double> bandwidth;  // unset: median heuristic
  std::size_t horizon = 96;
  std::size_t epochs = 40;
  double lr = 0.01;
  std::size_t batch = 64;
  std::size_t sample_stride = 0;  // 0: horizon / 2
  std::size_t max_iters = 100;
  double tol = 1e-6;
  std::size_t timeout_ms = 30000;

  std::size_t effective_stride() const { return stride == 0 ? window : stride; }
  std::size_t effective_sample_stride() const {
    return sample_stride == 0 ? std::max<std::size_t>(1, horizon / 2) : sample_stride;
  }
  LossConfig loss() const { return {lambda, bandwidth, estimator}; }

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  /// Sets one key from text; throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  std::string to_text() const;
  static RunConfig from_text(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  static const std::vector<std::string>& keys();
  bool operator==(const RunConfig&) const = default;
};

}  // namespace tsrag
