#include "tsrag/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tsrag/error.hpp"
#include "tsrag/format.hpp"

namespace tsrag {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_unsigned(const std::string& key, const std::string& value) {
  T out{};
  const auto v = trim(value);
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + value + "'");
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  double out = 0.0;
  if (!parse_double(value, out) || !std::isfinite(out))
    throw ConfigError("config key '" + key + "' expects a finite real, got '" + value + "'");
  return out;
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> kKeys = {
      "window", "stride", "cap",    "k",     "rho",           "probes",    "d",
      "h",      "lambda", "seed",   "estimator", "bandwidth", "horizon",   "epochs",
      "lr",     "batch",  "sample_stride", "max_iters", "tol",  "timeout_ms"};
  return kKeys;
}

void RunConfig::validate() const {
  if (window < 1) throw ConfigError("window must be >= 1");
  if (cap < 1) throw ConfigError("cap must be >= 1");
  if (k < 1) throw ConfigError("k must be >= 1");
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in [0, 1]");
  if (probes < 1) throw ConfigError("probes must be >= 1");
  if (d < 1) throw ConfigError("d must be >= 1");
  if (h < 1) throw ConfigError("h must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
  if (bandwidth && !(*bandwidth > 0.0 && std::isfinite(*bandwidth))) throw ConfigError("bandwidth must be positive or 'median'");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(tol >= 0.0)) throw ConfigError("tol must be >= 0");
  if (timeout_ms < 1) throw ConfigError("timeout_ms must be >= 1");
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "window") window = parse_unsigned<std::size_t>(key, value);
  else if (key == "stride") stride = parse_unsigned<std::size_t>(key, value);
  else if (key == "cap") cap = parse_unsigned<std::size_t>(key, value);
  else if (key == "k") k = parse_unsigned<std::size_t>(key, value);
  else if (key == "rho") rho = parse_real(key, value);
  else if (key == "probes") probes = parse_unsigned<std::size_t>(key, value);
  else if (key == "d") d = parse_unsigned<std::size_t>(key, value);
  else if (key == "h") h = parse_unsigned<std::size_t>(key, value);
  else if (key == "lambda") lambda = parse_real(key, value);
  else if (key == "seed") seed = parse_unsigned<std::uint64_t>(key, value);
  else if (key == "estimator") {
    if (value == "biased") estimator = MmdEstimator::Biased;
    else if (value == "unbiased") estimator = MmdEstimator::Unbiased;
    else throw ConfigError("estimator must be 'biased' or 'unbiased', got '" + value + "'");
  } else if (key == "bandwidth") {
    if (value == "median" || value == "median-heuristic") bandwidth.reset();
    else bandwidth = parse_real(key, value);
  } else if (key == "horizon") horizon = parse_unsigned<std::size_t>(key, value);
  else if (key == "epochs") epochs = parse_unsigned<std::size_t>(key, value);
  else if (key == "lr") lr = parse_real(key, value);
  else if (key == "batch") batch = parse_unsigned<std::size_t>(key, value);
  else if (key == "sample_stride") sample_stride = parse_unsigned<std::size_t>(key, value);
  else if (key == "max_iters") max_iters = parse_unsigned<std::size_t>(key, value);
  else if (key == "tol") tol = parse_real(key, value);
  else if (key == "timeout_ms") timeout_ms = parse_unsigned<std::size_t>(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::get(const std::string& key) const {
  if (key == "window") return std::to_string(window);
  if (key == "stride") return std::to_string(stride);
  if (key == "cap") return std::to_string(cap);
  if (key == "k") return std::to_string(k);
  if (key == "rho") return shortest(rho);
  if (key == "probes") return std::to_string(probes);
  if (key == "d") return std::to_string(d);
  if (key == "h") return std::to_string(h);
  if (key == "lambda") return shortest(lambda);
  if (key == "seed") return std::to_string(seed);
  if (key == "estimator") return estimator == MmdEstimator::Biased ? "biased" : "unbiased";
  if (key == "bandwidth") return bandwidth ? shortest(*bandwidth) : "median";
  if (key == "horizon") return std::to_string(horizon);
  if (key == "epochs") return std::to_string(epochs);
  if (key == "lr") return shortest(lr);
  if (key == "batch") return std::to_string(batch);
  if (key == "sample_stride") return std::to_string(sample_stride);
  if (key == "max_iters") return std::to_string(max_iters);
  if (key == "tol") return shortest(tol);
  if (key == "timeout_ms") return std::to_string(timeout_ms);
  throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& key : keys()) out += key + "=" + get(key) + "\n";
  return out;
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

}  // namespace tsrag
