#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tsrag/kmeans.hpp"
#include "tsrag/series.hpp"

namespace tsrag {

/// Windows referenced by dense handles, in insertion order.
class WindowTable {
 public:
  /// Appends a window; throws DataError on a duplicate id.
  std::size_t add(SeriesWindow window);

  const SeriesWindow& operator[](std::size_t handle) const { return windows_[handle]; }
  const std::string& id(std::size_t handle) const { return ids_[handle]; }
  std::optional<std::size_t> find(const std::string& id) const;
  std::size_t size() const { return windows_.size(); }

 private:
  std::vector<SeriesWindow> windows_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ClusterNode {
  std::vector<double> centroid;
  std::size_t prototype = 0;          // window handle
  std::vector<std::size_t> members;   // window handles, ascending
};

struct DomainNode {
  std::vector<ClusterNode> clusters;
};

struct TreeOptions {
  std::size_t cap = 256;
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
  double tol = 1e-6;
};

/// Index of the member closest (squared Euclidean) to `centroid`; ties go to
/// the lexicographically smallest id.
std::size_t select_prototype(std::span<const std::vector<double>> members,
                             std::span<const std::string> ids, std::span<const double> centroid);

/// Domain-partitioned prototype index. Each domain is clustered with k-means
/// into ceil(size / cap) clusters; oversize clusters are split until every
/// cluster holds at most `cap` windows. Values are indexed as given, so
/// callers z-normalize beforehand when retrieving by shape.
class SeriesTree {
 public:
  SeriesTree(std::size_t window_size, TreeOptions options);

  static SeriesTree build(std::vector<SeriesWindow> windows, TreeOptions options);

  /// Adds a window to the cluster of its nearest prototype within its domain,
  /// creating the domain on first sight, and splits the cluster on overflow.
  void insert(SeriesWindow window);

  /// Re-partitions one oversize cluster of `domain` with k-means into
  /// ceil(size / cap) clusters; sibling clusters are left untouched.
  void local_recluster(const std::string& domain, std::size_t cluster);

  std::size_t window_size() const { return window_size_; }
  const TreeOptions& options() const { return options_; }
  const std::map<std::string, DomainNode>& domains() const { return domains_; }
  const WindowTable& windows() const { return windows_; }
  std::size_t size() const { return windows_.size(); }
  std::size_t cluster_count() const;

  /// Human-readable descriptions of every broken invariant; empty when sound.
  std::vector<std::string> check_invariants() const;

  void write(std::ostream& out) const;
  static SeriesTree read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static SeriesTree load(const std::filesystem::path& path);

 private:
  std::size_t add_window(SeriesWindow window);
  ClusterNode make_cluster(std::vector<std::size_t> members, std::vector<double> centroid) const;
  void reselect_prototype(ClusterNode& cluster) const;
  void split_cluster(const std::string& domain, std::size_t cluster);
  std::vector<ClusterNode> cluster_members(const std::string& domain,
                                           const std::vector<std::size_t>& members,
                                           std::size_t count, std::uint64_t seed) const;

  std::size_t window_size_;
  TreeOptions options_;
  WindowTable windows_;
  std::map<std::string, DomainNode> domains_;
};

/// Reader-writer wrapper: many concurrent readers or one writer.
class SharedTree {
 public:
  explicit SharedTree(SeriesTree tree) : tree_(std::move(tree)) {}

  template <class F>
  auto read(F&& f) const {
    std::shared_lock lock(mu_);
    return f(static_cast<const SeriesTree&>(tree_));
  }

  template <class F>
  auto write(F&& f) {
    std::unique_lock lock(mu_);
    return f(tree_);
  }

 private:
  mutable std::shared_mutex mu_;
  SeriesTree tree_;
};

}  // namespace tsrag
