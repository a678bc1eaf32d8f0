#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tsrag/coherer.hpp"
#include "tsrag/retrieval.hpp"

namespace tsrag {

/// Floor on the norm of the elementwise product of retrieved series.
inline constexpr double kProductNormFloor = 1e-12;

/// Scalar-to-scalar two-layer perceptron: w2 . relu(w1 * x + b1) + b2.
struct Mlp {
  std::vector<double> w1;  // hidden
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden
  double b2 = 0.0;

  std::size_t hidden() const { return w1.size(); }
  double apply(double x) const;
};

struct FusionParams {
  std::size_t d = 16;
  std::size_t h = 16;
  std::vector<double> w_q;  // d
  std::vector<double> w_k;  // d
  std::vector<double> w_v;  // d
  Mlp mlp1;                 // interaction pattern projection
  Mlp mlp2;                 // average pattern projection

  /// Uniform in +-1/sqrt(fan_in), seeded.
  static FusionParams init(std::size_t d, std::size_t h, std::uint64_t seed);
  /// Zero-valued parameters of the given shape (gradient accumulators).
  static FusionParams zeros(std::size_t d, std::size_t h);
};

/// Everything training updates: fusion parameters plus the forecasting head.
struct ModelParams {
  FusionParams fusion;
  LinearHead head;

  static ModelParams init(std::size_t context, std::size_t horizon, std::size_t d, std::size_t h,
                          std::uint64_t seed);
  ModelParams zeros_like() const;
};

/// Visits every tensor in a fixed order with a stable name.
void for_each_tensor(ModelParams& params, const std::function<void(std::string_view, std::span<double>)>& fn);
void for_each_tensor(const ModelParams& params,
                     const std::function<void(std::string_view, std::span<const double>)>& fn);

void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);
std::string encode_params(const ModelParams& params);

struct PatternSet {
  std::vector<double> p_int;
  std::vector<double> p_avg;
  std::vector<double> raw_product;
  std::vector<double> raw_mean;
};

/// Splits hits into those sharing the target's domain and the rest, keeping order.
std::pair<std::vector<Hit>, std::vector<Hit>> partition_domains(const std::string& target_domain,
                                                                std::span<const Hit> hits);

/// Normalized elementwise product of the series. Each timestep multiplies
/// its values in sorted order, so the result does not depend on list order.
std::vector<double> raw_interaction(std::span<const std::vector<double>> series);
/// Elementwise mean, summed in sorted order per timestep.
std::vector<double> raw_average(std::span<const std::vector<double>> series);

/// (p_int, raw_product)
std::pair<std::vector<double>, std::vector<double>> interaction_pattern(
    std::span<const std::vector<double>> series, const FusionParams& params);
/// (p_avg, raw_mean)
std::pair<std::vector<double>, std::vector<double>> average_pattern(
    std::span<const std::vector<double>> series, const FusionParams& params);

PatternSet extract_patterns(std::span<const std::vector<double>> series, const FusionParams& params);

struct AttentionOutput {
  std::vector<double> r_fused;         // w
  std::vector<std::vector<double>> weights;  // w x w, rows sum to 1
};

/// Target as query, average pattern as keys, interaction pattern as values,
/// per-timestep embeddings of width d; the result is projected back to a
/// series through the transpose of w_v.
AttentionOutput cross_attention(std::span<const double> t_norm, std::span<const double> p_avg,
                                std::span<const double> p_int, const FusionParams& params);

/// One training example in normalized space.
struct FusionSample {
  std::vector<double> t_norm;       // context, length w
  std::vector<double> truth;        // future, length H
  std::vector<double> raw_product;  // empty when nothing was retrieved
  std::vector<double> raw_mean;

  /// Precomputes the parameter-free patterns from normalized retrieved series.
  static FusionSample make(std::vector<double> t_norm, std::vector<double> truth,
                           std::span<const std::vector<double>> retrieved);
  bool has_retrieval() const { return !raw_product.empty(); }
};

/// Forecast for one sample. With `use_retrieval` off (or nothing retrieved)
/// the fused residual is zero and the head sees the target alone.
std::vector<double> predict(const FusionSample& sample, const ModelParams& params,
                            bool use_retrieval);

struct GradientResult {
  LossValue loss;
  ModelParams grad;
};

/// Batch loss (MSE + lambda * MMD^2 over the batch) and its exact gradient
/// with respect to every parameter, by reverse-mode differentiation.
/// Throws DataError on a non-finite loss.
GradientResult gradients(std::span<const FusionSample> batch, const ModelParams& params,
                         const LossConfig& loss, bool use_retrieval);

/// Loss only (same definition as `gradients`).
double batch_loss(std::span<const FusionSample> batch, const ModelParams& params,
                  const LossConfig& loss, bool use_retrieval);

}  // namespace tsrag
