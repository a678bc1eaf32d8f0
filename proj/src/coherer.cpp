#include "tsrag/coherer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>
#include <sstream>

#include "tsrag/error.hpp"
#include "tsrag/format.hpp"
#include "tsrag/subprocess.hpp"

namespace tsrag {

LinearHead::LinearHead(std::size_t context_, std::size_t horizon_)
    : context(context_), horizon(horizon_), weights(context_ * horizon_, 0.0), bias(horizon_, 0.0) {}

void LinearHead::validate() const {
  if (horizon < 1) throw ConfigError("forecast horizon must be at least 1");
  if (weights.size() != horizon * context || bias.size() != horizon)
    throw ConfigError("linear head weights must be horizon x context");
}

std::vector<double> LinearHead::apply(std::span<const double> input) const {
  if (input.size() != context)
    throw DataError("head expects " + std::to_string(context) + " inputs, got " +
                    std::to_string(input.size()));
  std::vector<double> out(bias);
  for (std::size_t o = 0; o < horizon; ++o) {
    const double* row = weights.data() + o * context;
    double acc = 0.0;
    for (std::size_t i = 0; i < context; ++i) acc += row[i] * input[i];
    out[o] += acc;
  }
  return out;
}

std::vector<double> ExternalBackend::forecast(const std::string& prompt,
                                              std::size_t horizon) const {
  if (command.empty()) throw ConfigError("external backend command is empty");
  auto res = run_command(command, prompt, timeout);
  if (res.exit_code != 0)
    throw BackendError("backend exited with status " + std::to_string(res.exit_code) + ": " +
                       command);
  return parse_forecast_text(res.output, horizon);
}

std::vector<double> numerical_coherer(std::span<const double> r_fused,
                                      std::span<const double> t_norm, const LinearHead& head) {
  if (r_fused.size() != t_norm.size())
    throw DataError("fused representation and target differ in length");
  std::vector<double> fused(t_norm.size());
  for (std::size_t i = 0; i < fused.size(); ++i) fused[i] = t_norm[i] + r_fused[i];
  return head.apply(fused);
}

std::vector<double> numerical_coherer(std::span<const double> r_fused,
                                      std::span<const double> t_norm, const ForecastHead& head) {
  if (head.kind != HeadKind::LinearBaseline)
    throw ConfigError("the numerical coherer needs a linear-baseline head");
  return numerical_coherer(r_fused, t_norm, head.linear);
}

std::vector<double> denormalize_forecast(std::span<const double> forecast, const NormStats& stats) {
  return denormalize(forecast, stats);
}

std::string build_prompt(std::span<const double> t_norm, std::span<const double> raw_mean,
                         std::span<const double> raw_product, std::span<const Hit> hits,
                         const PromptMetadata& metadata, std::size_t horizon) {
  std::ostringstream p;
  p << "[Task]\n"
    << "You are a time series forecaster. The context below holds " << t_norm.size()
    << " normalized observations. Predict the next " << horizon << " values.\n\n";

  p << "[Target series]\n";
  p << "domain=" << (metadata.domain.empty() ? "-" : metadata.domain)
    << ", item=" << (metadata.item_id.empty() ? "-" : metadata.item_id)
    << ", freq=" << (metadata.freq.empty() ? "-" : metadata.freq) << "\n";
  if (t_norm.empty()) {
    p << "length=0\n";
  } else {
    const auto [lo, hi] = std::minmax_element(t_norm.begin(), t_norm.end());
    const double mean =
        std::accumulate(t_norm.begin(), t_norm.end(), 0.0) / static_cast<double>(t_norm.size());
    const double drift = t_norm.back() - t_norm.front();  // sum of first differences
    const char* trend = drift > 0.0 ? "increasing" : (drift < 0.0 ? "decreasing" : "flat");
    p << "length=" << t_norm.size() << ", min=" << fixed(*lo, 4) << ", max=" << fixed(*hi, 4)
      << ", mean=" << fixed(mean, 4) << ", last=" << fixed(t_norm.back(), 4)
      << ", trend=" << trend << "\n";
  }
  p << "values: " << join_fixed(t_norm, 4) << "\n\n";

  p << "[Retrieved knowledge]\n";
  if (hits.empty()) {
    p << "no auxiliary series retrieved\n\n";
  } else {
    p << "retrieved=" << hits.size() << "\n";
    for (std::size_t i = 0; i < hits.size(); ++i)
      p << (i + 1) << ". domain=" << hits[i].domain << ", similarity=" << fixed(hits[i].score, 4)
        << "\n";
    p << "average pattern: " << join_fixed(raw_mean, 4) << "\n";
    p << "interaction pattern: " << join_fixed(raw_product, 4) << "\n\n";
  }

  p << "[Output format]\n"
    << "Reply with exactly " << horizon
    << " comma-separated numbers in the normalized scale and nothing else.\n";
  return p.str();
}

std::vector<double> parse_forecast_text(const std::string& text, std::size_t horizon) {
  static const std::regex kNumber(R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)");
  std::vector<double> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kNumber);
       it != std::sregex_iterator() && out.size() < horizon; ++it) {
    double v = 0.0;
    std::string tok = it->str();
    if (tok.front() == '+') tok.erase(0, 1);
    if (parse_double(tok, v) && std::isfinite(v)) out.push_back(v);
  }
  if (out.size() < horizon)
    throw BackendError("malformed model reply: expected " + std::to_string(horizon) +
                       " numbers, found " + std::to_string(out.size()));
  return out;
}

void LossConfig::validate() const {
  if (!std::isfinite(lambda) || lambda < 0.0) throw ConfigError("lambda must be finite and >= 0");
  if (bandwidth && !(*bandwidth > 0.0 && std::isfinite(*bandwidth)))
    throw ConfigError("kernel bandwidth must be positive");
}

namespace {

double euclid(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

void check_samples(const Matrix& x, const Matrix& y, const LossConfig& config) {
  config.validate();
  if (x.empty() || y.empty()) throw DataError("mmd2 needs at least one sample on each side");
  if (config.estimator == MmdEstimator::Unbiased && (x.size() < 2 || y.size() < 2))
    throw DataError("unbiased mmd2 needs at least two samples on each side");
  const std::size_t dim = x[0].size();
  for (const auto* set : {&x, &y})
    for (const auto& v : *set)
      if (v.size() != dim) throw DataError("mmd2 samples differ in length");
}

// Median of pairwise distances over x and y, and the pair(s) that define it.
struct MedianPick {
  double value = 1.0;
  bool fallback = true;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // indices into the concatenation
  double weight = 1.0;
};

MedianPick median_distance(const Matrix& x, const Matrix& y) {
  const std::size_t n = x.size() + y.size();
  auto at = [&](std::size_t i) -> const std::vector<double>& {
    return i < x.size() ? x[i] : y[i - x.size()];
  };
  struct Pair {
    double d;
    std::size_t i, j;
  };
  std::vector<Pair> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.push_back({euclid(at(i), at(j)), i, j});
  MedianPick pick;
  if (pairs.empty()) return pick;
  auto by_distance = [](const Pair& a, const Pair& b) {
    if (a.d != b.d) return a.d < b.d;
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  };
  const std::size_t mid = pairs.size() / 2;
  std::nth_element(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(mid), pairs.end(),
                   by_distance);
  const Pair upper = pairs[mid];
  if (pairs.size() % 2 == 1) {
    pick.value = upper.d;
    pick.pairs = {{upper.i, upper.j}};
    pick.weight = 1.0;
  } else {
    const Pair lower = *std::max_element(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(mid),
                                         by_distance);
    pick.value = 0.5 * (lower.d + upper.d);
    pick.pairs = {{lower.i, lower.j}, {upper.i, upper.j}};
    pick.weight = 0.5;
  }
  pick.fallback = !(pick.value > 0.0);
  if (pick.fallback) pick.value = 1.0;
  return pick;
}

struct MmdParts {
  double value = 0.0;
  double dvalue_dsigma = 0.0;
};

// Estimator value, d/dsigma, and (optionally) the fixed-bandwidth gradient wrt x.
MmdParts mmd_core(const Matrix& x, const Matrix& y, double sigma, MmdEstimator est,
                  Matrix* grad_x) {
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  const bool unbiased = est == MmdEstimator::Unbiased;
  const double wxx = unbiased ? 1.0 / (n * (n - 1.0)) : 1.0 / (n * n);
  const double wyy = unbiased ? 1.0 / (m * (m - 1.0)) : 1.0 / (m * m);
  const double wxy = 2.0 / (n * m);
  const double s2 = sigma * sigma;
  const std::size_t dim = x[0].size();

  MmdParts out;
  auto kernel = [&](const std::vector<double>& a, const std::vector<double>& b, double& d2) {
    d2 = 0.0;
    for (std::size_t t = 0; t < dim; ++t) d2 += (a[t] - b[t]) * (a[t] - b[t]);
    return std::exp(-d2 / (2.0 * s2));
  };
  // Accumulate each term over the symmetric pair set in a fixed order so
  // mmd2(x, y) == mmd2(y, x) bit for bit.
  auto self_term = [&](const Matrix& z, double w, Matrix* grad) {
    double sum = 0.0, dsum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (!unbiased) sum += 1.0;  // k(z_i, z_i)
      for (std::size_t j = i + 1; j < z.size(); ++j) {
        double d2 = 0.0;
        const double k = kernel(z[i], z[j], d2);
        sum += 2.0 * k;
        dsum += 2.0 * k * d2 / (s2 * sigma);
        if (grad) {
          const double c = w * 2.0 * (-k / s2);
          for (std::size_t t = 0; t < dim; ++t) {
            const double diff = z[i][t] - z[j][t];
            (*grad)[i][t] += c * diff;
            (*grad)[j][t] -= c * diff;
          }
        }
      }
    }
    out.value += w * sum;
    out.dvalue_dsigma += w * dsum;
  };
  self_term(x, wxx, grad_x);
  self_term(y, wyy, nullptr);
  // Cross kernels are summed in sorted order, which does not depend on which
  // list came first.
  std::vector<double> cross_k, cross_dk;
  cross_k.reserve(x.size() * y.size());
  cross_dk.reserve(x.size() * y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) {
      double d2 = 0.0;
      const double k = kernel(x[i], y[j], d2);
      cross_k.push_back(k);
      cross_dk.push_back(k * d2 / (s2 * sigma));
      if (grad_x) {
        const double c = -wxy * (-k / s2);
        for (std::size_t t = 0; t < dim; ++t) (*grad_x)[i][t] += c * (x[i][t] - y[j][t]);
      }
    }
  }
  std::sort(cross_k.begin(), cross_k.end());
  std::sort(cross_dk.begin(), cross_dk.end());
  const double cross = std::accumulate(cross_k.begin(), cross_k.end(), 0.0);
  const double dcross = std::accumulate(cross_dk.begin(), cross_dk.end(), 0.0);
  out.value -= wxy * cross;
  out.dvalue_dsigma -= wxy * dcross;
  return out;
}

Matrix zeros_like(const Matrix& x) {
  Matrix g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i].assign(x[i].size(), 0.0);
  return g;
}

}  // namespace

double kernel_bandwidth(const Matrix& x, const Matrix& y, const LossConfig& config) {
  if (config.bandwidth) return *config.bandwidth;
  return median_distance(x, y).value;
}

double mmd2(const Matrix& x, const Matrix& y, const LossConfig& config) {
  check_samples(x, y, config);
  const double sigma = kernel_bandwidth(x, y, config);
  const MmdParts a = mmd_core(x, y, sigma, config.estimator, nullptr);
  return a.value;
}

double mmd2_grad(const Matrix& x, const Matrix& y, const LossConfig& config, Matrix& grad_x) {
  check_samples(x, y, config);
  grad_x = zeros_like(x);
  MedianPick pick;
  double sigma = 0.0;
  if (config.bandwidth) {
    sigma = *config.bandwidth;
  } else {
    pick = median_distance(x, y);
    sigma = pick.value;
  }
  const MmdParts parts = mmd_core(x, y, sigma, config.estimator, &grad_x);
  if (!config.bandwidth && !pick.fallback) {
    auto at = [&](std::size_t i) -> const std::vector<double>& {
      return i < x.size() ? x[i] : y[i - x.size()];
    };
    for (const auto& [i, j] : pick.pairs) {
      const double d = euclid(at(i), at(j));
      if (d == 0.0) continue;
      const double c = parts.dvalue_dsigma * pick.weight / d;
      for (std::size_t t = 0; t < x[0].size(); ++t) {
        const double diff = at(i)[t] - at(j)[t];
        if (i < x.size()) grad_x[i][t] += c * diff;
        if (j < x.size()) grad_x[j][t] -= c * diff;
      }
    }
  }
  return parts.value;
}

namespace {

void check_pair(const Matrix& pred, const Matrix& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw DataError("prediction and truth batches differ in size or are empty");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != truth[i].size() || pred[i].empty())
      throw DataError("prediction and truth vectors differ in length");
    for (std::size_t t = 0; t < pred[i].size(); ++t)
      if (!std::isfinite(pred[i][t]) || !std::isfinite(truth[i][t]))
        throw DataError("non-finite value in loss input");
  }
}

double mse_of(const Matrix& pred, const Matrix& truth, Matrix* grad) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& row : pred) count += row.size();
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t t = 0; t < pred[i].size(); ++t) {
      const double e = pred[i][t] - truth[i][t];
      total += e * e;
      if (grad) (*grad)[i][t] = 2.0 * e * inv;
    }
  return total * inv;
}

}  // namespace

double total_loss(const Matrix& pred, const Matrix& truth, const LossConfig& config) {
  check_pair(pred, truth);
  config.validate();
  const double mse = mse_of(pred, truth, nullptr);
  const double mmd = config.lambda == 0.0 ? 0.0 : mmd2(pred, truth, config);
  const double total = mse + config.lambda * mmd;
  if (!std::isfinite(total)) throw DataError("non-finite loss");
  return total;
}

LossValue total_loss_grad(const Matrix& pred, const Matrix& truth, const LossConfig& config,
                          Matrix& grad_pred) {
  check_pair(pred, truth);
  config.validate();
  grad_pred = zeros_like(pred);
  LossValue v;
  v.mse = mse_of(pred, truth, &grad_pred);
  if (config.lambda != 0.0) {
    Matrix g;
    v.mmd = mmd2_grad(pred, truth, config, g);
    for (std::size_t i = 0; i < pred.size(); ++i)
      for (std::size_t t = 0; t < pred[i].size(); ++t) grad_pred[i][t] += config.lambda * g[i][t];
  }
  v.total = v.mse + config.lambda * v.mmd;
  if (!std::isfinite(v.total)) throw DataError("non-finite loss");
  return v;
}

}  // namespace tsrag
