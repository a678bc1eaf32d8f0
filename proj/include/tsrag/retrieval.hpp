#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tsrag/series.hpp"
#include "tsrag/tree.hpp"

namespace tsrag {

/// Regularizer of the compound similarity (cosine denominator and inverse distance).
inline constexpr double kSimilarityEps = 1e-8;

/// cos(a, b) + 1 / (euclidean(a, b) + eps). Symmetric in its arguments.
double similarity(std::span<const double> a, std::span<const double> b);

struct Query {
  std::vector<double> target;          // z-normalized, length w
  std::optional<std::string> domain;
  std::size_t k = 8;
  double rho = 0.6;
  std::size_t probes = 4;
  /// Optional admission filter; rejected windows are skipped without being scored.
  std::function<bool(const SeriesWindow&)> admit;

  void validate() const;
};

struct Hit {
  std::string window_id;
  double score = 0.0;
  std::string domain;
  std::size_t handle = 0;  // position in the tree's window table (or the scanned list)
};

struct SearchStats {
  std::size_t evaluations = 0;     // similarity computations
  std::size_t clusters_probed = 0;
};

struct Retrieval {
  std::vector<Hit> hits;           // score descending, ties by window id ascending
  std::size_t local_hits = 0;      // contributed by the domain arm
  std::size_t global_hits = 0;     // contributed by the global arm
  SearchStats stats;
};

/// Ranks every prototype of every domain, scans the members of the best
/// `probes` clusters and returns the top k of those members.
Retrieval retrieve_global(const Query& query, const SeriesTree& tree);

/// Hybrid retrieval: round(rho * k) hits from the query's domain subtree plus
/// the remainder from the global arm (excluding what the domain arm took).
/// Falls back to the global arm when the domain is unset or not indexed.
Retrieval retrieve_topk(const Query& query, const SeriesTree& tree);

/// Exact top-k by exhaustive scan; the exactness reference for the tree.
Retrieval linear_scan_oracle(const Query& query, std::span<const SeriesWindow> windows);

/// Exhaustive scan over all windows held by a tree.
Retrieval linear_scan_oracle(const Query& query, const SeriesTree& tree);

/// Number of hits the domain arm contributes: round(rho * k), halves away from zero.
std::size_t local_share(std::size_t k, double rho);

}  // namespace tsrag
