#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsrag/retrieval.hpp"
#include "tsrag/series.hpp"

namespace tsrag {

using Matrix = std::vector<std::vector<double>>;  // list of equal-length sample vectors

/// Trainable linear map from a length-`context` input to `horizon` outputs.
struct LinearHead {
  std::size_t context = 0;
  std::size_t horizon = 0;
  std::vector<double> weights;  // horizon x context, row-major
  std::vector<double> bias;     // horizon

  LinearHead() = default;
  LinearHead(std::size_t context, std::size_t horizon);

  std::vector<double> apply(std::span<const double> input) const;
  void validate() const;
};

/// Text-model slot: the prompt goes to the command's stdin, the reply is read from stdout.
struct ExternalBackend {
  std::string command;  // run through /bin/sh -c
  std::chrono::milliseconds timeout{30000};

  /// Throws BackendError on spawn failure, timeout, non-zero exit or an unparseable reply.
  std::vector<double> forecast(const std::string& prompt, std::size_t horizon) const;
};

enum class HeadKind { LinearBaseline, External };

struct ForecastHead {
  HeadKind kind = HeadKind::LinearBaseline;
  LinearHead linear;
  ExternalBackend external;
};

/// Residual fusion: head(t_norm + r_fused), in normalized space.
std::vector<double> numerical_coherer(std::span<const double> r_fused,
                                      std::span<const double> t_norm, const LinearHead& head);
std::vector<double> numerical_coherer(std::span<const double> r_fused,
                                      std::span<const double> t_norm, const ForecastHead& head);

std::vector<double> denormalize_forecast(std::span<const double> forecast, const NormStats& stats);

struct PromptMetadata {
  std::string domain;
  std::string item_id;
  std::string freq;
};

/// Deterministic prompt with four sections: task, target summary, retrieved
/// knowledge and output format. Numbers are printed with 4 decimals.
std::string build_prompt(std::span<const double> t_norm, std::span<const double> raw_mean,
                         std::span<const double> raw_product, std::span<const Hit> hits,
                         const PromptMetadata& metadata, std::size_t horizon);

/// First `horizon` numbers found in `text`; BackendError("malformed model reply") if fewer.
std::vector<double> parse_forecast_text(const std::string& text, std::size_t horizon);

enum class MmdEstimator { Biased, Unbiased };

struct LossConfig {
  double lambda = 0.1;
  std::optional<double> bandwidth;  // unset: median heuristic
  MmdEstimator estimator = MmdEstimator::Biased;

  void validate() const;
};

/// Gaussian-kernel bandwidth: fixed when configured, else the median pairwise
/// distance over x and y (1 when that median is 0).
double kernel_bandwidth(const Matrix& x, const Matrix& y, const LossConfig& config);

/// Squared maximum mean discrepancy between two sample lists.
double mmd2(const Matrix& x, const Matrix& y, const LossConfig& config);

/// mmd2 plus its gradient with respect to every entry of `x` (including the
/// bandwidth's dependence on x under the median heuristic).
double mmd2_grad(const Matrix& x, const Matrix& y, const LossConfig& config, Matrix& grad_x);

/// Mean squared error over all entries plus lambda * mmd2(pred, truth).
double total_loss(const Matrix& pred, const Matrix& truth, const LossConfig& config);

struct LossValue {
  double total = 0.0;
  double mse = 0.0;
  double mmd = 0.0;
};

/// total_loss with its gradient with respect to `pred`.
LossValue total_loss_grad(const Matrix& pred, const Matrix& truth, const LossConfig& config,
                          Matrix& grad_pred);

}  // namespace tsrag
