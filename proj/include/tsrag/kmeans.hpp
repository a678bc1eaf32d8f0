#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace tsrag {

struct KMeansOptions {
  std::size_t max_iters = 100;
  double tol = 1e-6;  // relative objective improvement below which Lloyd stops
  std::uint64_t seed = 0;
};

struct KMeansResult {
  std::vector<std::size_t> assignments;
  std::vector<std::vector<double>> centroids;
  std::vector<double> objective_history;  // one entry per completed Lloyd iteration

  double objective() const { return objective_history.back(); }
};

double squared_distance(std::span<const double> a, std::span<const double> b);

/// Lloyd's algorithm from greedy k-means++ seeding. Empty clusters are
/// repaired by moving the point farthest from its centroid. The objective
/// history is non-increasing; an iteration that would raise the objective
/// (floating-point noise at convergence) is rolled back and ends the run.
KMeansResult kmeans(std::span<const std::vector<double>> points, std::size_t clusters,
                    const KMeansOptions& options = {});

/// Sum of squared distances of each point to the centroid it is assigned to.
double kmeans_objective(std::span<const std::vector<double>> points,
                        std::span<const std::size_t> assignments,
                        std::span<const std::vector<double>> centroids);

/// Seeded generator with platform-independent draws. std::mt19937_64 output
/// is fixed by the standard; the distribution adaptors are not, so the
/// conversions to reals live here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::size_t below(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tsrag
