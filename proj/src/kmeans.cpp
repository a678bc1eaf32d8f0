#include "tsrag/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "tsrag/error.hpp"

namespace tsrag {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) return 0;
  const auto v = static_cast<std::size_t>(uniform() * static_cast<double>(n));
  return std::min(v, n - 1);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double kmeans_objective(std::span<const std::vector<double>> points,
                        std::span<const std::size_t> assignments,
                        std::span<const std::vector<double>> centroids) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    total += squared_distance(points[i], centroids[assignments[i]]);
  return total;
}

namespace {

// Greedy k-means++: each new center is the best of several D^2-weighted candidates.
std::vector<std::vector<double>> seed_centroids(std::span<const std::vector<double>> points,
                                                std::size_t k, Rng& rng) {
  const std::size_t n = points.size();
  std::vector<std::vector<double>> centers;
  centers.reserve(k);
  std::vector<bool> chosen(n, false);
  std::size_t first = rng.below(n);
  centers.push_back(points[first]);
  chosen[first] = true;

  std::vector<double> closest(n);
  for (std::size_t i = 0; i < n; ++i) closest[i] = squared_distance(points[i], centers[0]);

  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
  while (centers.size() < k) {
    double total = 0.0;
    for (double c : closest) total += c;
    std::size_t best = n;
    double best_potential = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < trials; ++t) {
      std::size_t cand = n;
      if (total > 0.0) {
        const double target = rng.uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          acc += closest[i];
          if (acc > target && closest[i] > 0.0) {
            cand = i;
            break;
          }
        }
        if (cand == n) {
          for (std::size_t i = n; i-- > 0;)
            if (closest[i] > 0.0) {
              cand = i;
              break;
            }
        }
      }
      if (cand == n) {
        // All remaining points coincide with a center: fall back to an unchosen index.
        std::size_t skip = rng.below(n);
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t j = (skip + i) % n;
          if (!chosen[j]) {
            cand = j;
            break;
          }
        }
      }
      double potential = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        potential += std::min(closest[i], squared_distance(points[i], points[cand]));
      if (potential < best_potential) {
        best_potential = potential;
        best = cand;
      }
    }
    centers.push_back(points[best]);
    chosen[best] = true;
    for (std::size_t i = 0; i < n; ++i)
      closest[i] = std::min(closest[i], squared_distance(points[i], centers.back()));
  }
  return centers;
}

// Nearest centroid; ties keep `current` when it is among the minima, else the lowest index.
std::size_t nearest(std::span<const double> p, const std::vector<std::vector<double>>& centroids,
                    std::size_t current) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d || (d == best_d && c == current)) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

// Gives every empty cluster the point farthest from its own centroid, never
// emptying a donor cluster.
void repair_empty(std::span<const std::vector<double>> points, std::vector<std::size_t>& assign,
                  std::vector<std::vector<double>>& centroids) {
  const std::size_t k = centroids.size();
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t a : assign) ++counts[a];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    std::size_t far = points.size();
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (counts[assign[i]] <= 1) continue;
      const double d = squared_distance(points[i], centroids[assign[i]]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    --counts[assign[far]];
    assign[far] = c;
    counts[c] = 1;
    centroids[c] = points[far];
  }
}

void update_centroids(std::span<const std::vector<double>> points,
                      std::span<const std::size_t> assign,
                      std::vector<std::vector<double>>& centroids) {
  const std::size_t dim = points[0].size();
  std::vector<std::vector<double>> sums(centroids.size(), std::vector<double>(dim, 0.0));
  std::vector<std::size_t> counts(centroids.size(), 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& s = sums[assign[i]];
    for (std::size_t j = 0; j < dim; ++j) s[j] += points[i][j];
    ++counts[assign[i]];
  }
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    if (counts[c] == 0) continue;
    const double n = static_cast<double>(counts[c]);
    for (std::size_t j = 0; j < dim; ++j) centroids[c][j] = sums[c][j] / n;
  }
}

}  // namespace

KMeansResult kmeans(std::span<const std::vector<double>> points, std::size_t clusters,
                    const KMeansOptions& options) {
  if (points.empty()) throw DataError("kmeans: empty input");
  if (clusters == 0) throw ConfigError("kmeans: cluster count must be positive");
  if (clusters > points.size())
    throw DataError("kmeans: " + std::to_string(clusters) + " clusters requested for " +
                    std::to_string(points.size()) + " points");
  const std::size_t dim = points[0].size();
  for (const auto& p : points)
    if (p.size() != dim) throw DataError("kmeans: points differ in length");

  Rng rng(options.seed);
  KMeansResult res;
  res.centroids = seed_centroids(points, clusters, rng);
  res.assignments.assign(points.size(), clusters);
  for (std::size_t i = 0; i < points.size(); ++i)
    res.assignments[i] = nearest(points[i], res.centroids, clusters);
  repair_empty(points, res.assignments, res.centroids);

  const std::size_t iters = std::max<std::size_t>(options.max_iters, 1);
  std::vector<std::size_t> accepted_assign;
  std::vector<std::vector<double>> accepted_centroids;
  for (std::size_t it = 0; it < iters; ++it) {
    update_centroids(points, res.assignments, res.centroids);
    const double obj = kmeans_objective(points, res.assignments, res.centroids);
    if (!res.objective_history.empty() && obj > res.objective_history.back()) {
      // Rounding in the mean pushed the objective up: keep the previous state.
      res.assignments = std::move(accepted_assign);
      res.centroids = std::move(accepted_centroids);
      break;
    }
    res.objective_history.push_back(obj);
    if (res.objective_history.size() >= 2) {
      const double before = res.objective_history[res.objective_history.size() - 2];
      if (before - obj <= options.tol * before) break;
    }
    if (obj == 0.0 || it + 1 == iters) break;

    auto next = res.assignments;
    for (std::size_t i = 0; i < points.size(); ++i)
      next[i] = nearest(points[i], res.centroids, res.assignments[i]);
    if (next == res.assignments) break;
    accepted_assign = res.assignments;
    accepted_centroids = res.centroids;
    res.assignments = std::move(next);
    repair_empty(points, res.assignments, res.centroids);
  }
  return res;
}

}  // namespace tsrag
