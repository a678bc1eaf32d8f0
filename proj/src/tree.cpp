#include "tsrag/tree.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "tsrag/error.hpp"
#include "tsrag/format.hpp"

namespace tsrag {
namespace {

constexpr const char* kTreeMagic = "crbtree v1";

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull + (b << 6) + (b >> 2);
  z ^= b;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

std::string number_array(std::span<const double> v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += shortest(v[i]);
  }
  return s + "]";
}

std::vector<double> read_reals(const nlohmann::json& arr) {
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& v : arr) out.push_back(v.get<double>());
  return out;
}

}  // namespace

std::size_t WindowTable::add(SeriesWindow window) {
  std::string id = window.id();
  if (index_.count(id)) throw DataError("duplicate window id '" + id + "'");
  const std::size_t handle = windows_.size();
  index_.emplace(id, handle);
  ids_.push_back(std::move(id));
  windows_.push_back(std::move(window));
  return handle;
}

std::optional<std::size_t> WindowTable::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t select_prototype(std::span<const std::vector<double>> members,
                             std::span<const std::string> ids, std::span<const double> centroid) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < members.size(); ++i) {
    const double d = squared_distance(members[i], centroid);
    if (d < best_d || (d == best_d && ids[i] < ids[best])) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

SeriesTree::SeriesTree(std::size_t window_size, TreeOptions options)
    : window_size_(window_size), options_(options) {
  if (window_size_ == 0) throw ConfigError("tree window size must be positive");
  if (options_.cap == 0) throw ConfigError("cap must be at least 1");
}

std::size_t SeriesTree::add_window(SeriesWindow window) {
  if (window.values.size() != window_size_)
    throw DataError("window " + window.id() + " has length " +
                    std::to_string(window.values.size()) + ", tree expects " +
                    std::to_string(window_size_));
  if (window.domain.empty()) throw DataError("window " + window.id() + " has no domain");
  return windows_.add(std::move(window));
}

std::size_t SeriesTree::cluster_count() const {
  std::size_t n = 0;
  for (const auto& [name, node] : domains_) n += node.clusters.size();
  return n;
}

void SeriesTree::reselect_prototype(ClusterNode& cluster) const {
  std::size_t best = cluster.members.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t h : cluster.members) {
    const double d = squared_distance(windows_[h].values, cluster.centroid);
    if (d < best_d || (d == best_d && windows_.id(h) < windows_.id(best))) {
      best_d = d;
      best = h;
    }
  }
  cluster.prototype = best;
}

ClusterNode SeriesTree::make_cluster(std::vector<std::size_t> members,
                                     std::vector<double> centroid) const {
  ClusterNode c;
  c.members = std::move(members);
  c.centroid = std::move(centroid);
  reselect_prototype(c);
  return c;
}

std::vector<ClusterNode> SeriesTree::cluster_members(const std::string& domain,
                                                     const std::vector<std::size_t>& members,
                                                     std::size_t count,
                                                     std::uint64_t salt) const {
  std::vector<std::vector<double>> points;
  points.reserve(members.size());
  for (std::size_t h : members) points.push_back(windows_[h].values);
  KMeansOptions km;
  km.max_iters = options_.max_iters;
  km.tol = options_.tol;
  km.seed = mix(mix(options_.seed, fnv1a(domain)), salt);
  auto res = kmeans(points, count, km);

  std::vector<std::vector<std::size_t>> groups(count);
  for (std::size_t i = 0; i < members.size(); ++i) groups[res.assignments[i]].push_back(members[i]);
  std::vector<ClusterNode> out;
  out.reserve(count);
  for (std::size_t c = 0; c < count; ++c)
    out.push_back(make_cluster(std::move(groups[c]), std::move(res.centroids[c])));
  return out;
}

void SeriesTree::split_cluster(const std::string& domain, std::size_t cluster) {
  auto& clusters = domains_.at(domain).clusters;
  const auto members = clusters[cluster].members;
  const std::uint64_t salt = mix(members.size(), fnv1a(windows_.id(members.front())));
  auto parts = cluster_members(domain, members, ceil_div(members.size(), options_.cap), salt);
  clusters[cluster] = std::move(parts[0]);
  for (std::size_t i = 1; i < parts.size(); ++i) clusters.push_back(std::move(parts[i]));
}

void SeriesTree::local_recluster(const std::string& domain, std::size_t cluster) {
  auto it = domains_.find(domain);
  if (it == domains_.end()) throw DataError("unknown domain '" + domain + "'");
  if (cluster >= it->second.clusters.size()) throw DataError("cluster index out of range");
  if (it->second.clusters[cluster].members.size() <= options_.cap)
    throw ConfigError("local_recluster requires a cluster larger than cap");

  std::vector<std::size_t> pending{cluster};
  while (!pending.empty()) {
    const std::size_t idx = pending.back();
    pending.pop_back();
    auto& clusters = it->second.clusters;
    if (clusters[idx].members.size() <= options_.cap) continue;
    const std::size_t before = clusters.size();
    split_cluster(domain, idx);
    pending.push_back(idx);
    for (std::size_t i = before; i < clusters.size(); ++i) pending.push_back(i);
  }
}

SeriesTree SeriesTree::build(std::vector<SeriesWindow> windows, TreeOptions options) {
  if (windows.empty()) throw DataError("cannot build a tree from zero windows");
  SeriesTree tree(windows.front().values.size(), options);
  std::map<std::string, std::vector<std::size_t>> groups;
  for (auto& w : windows) {
    std::string domain = w.domain;
    groups[domain].push_back(tree.add_window(std::move(w)));
  }
  for (auto& [domain, members] : groups) {
    const std::size_t count = ceil_div(members.size(), options.cap);
    tree.domains_[domain].clusters = tree.cluster_members(domain, members, count, 0);
    for (std::size_t i = 0; i < tree.domains_[domain].clusters.size(); ++i)
      if (tree.domains_[domain].clusters[i].members.size() > options.cap)
        tree.local_recluster(domain, i);
  }
  return tree;
}

void SeriesTree::insert(SeriesWindow window) {
  const std::string domain = window.domain;
  const std::size_t h = add_window(std::move(window));
  const auto& x = windows_[h].values;

  auto it = domains_.find(domain);
  if (it == domains_.end()) {
    domains_[domain].clusters.push_back(make_cluster({h}, x));
    return;
  }
  auto& clusters = it->second.clusters;
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    const double d = squared_distance(x, windows_[clusters[c].prototype].values);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  auto& cluster = clusters[best];
  cluster.members.push_back(h);
  const double n = static_cast<double>(cluster.members.size());
  for (std::size_t j = 0; j < window_size_; ++j)
    cluster.centroid[j] += (x[j] - cluster.centroid[j]) / n;
  reselect_prototype(cluster);
  if (cluster.members.size() > options_.cap) local_recluster(domain, best);
}

std::vector<std::string> SeriesTree::check_invariants() const {
  std::vector<std::string> problems;
  std::vector<int> seen(windows_.size(), 0);
  for (const auto& [name, node] : domains_) {
    if (node.clusters.empty()) problems.push_back("domain " + name + " has no clusters");
    for (std::size_t c = 0; c < node.clusters.size(); ++c) {
      const auto& cl = node.clusters[c];
      const std::string where = name + "[" + std::to_string(c) + "]";
      if (cl.members.empty() || cl.members.size() > options_.cap)
        problems.push_back(where + " has " + std::to_string(cl.members.size()) + " members");
      if (cl.members.empty()) continue;
      bool proto_member = false;
      const double proto_d = squared_distance(windows_[cl.prototype].values, cl.centroid);
      for (std::size_t h : cl.members) {
        if (h >= windows_.size()) {
          problems.push_back(where + " references an unknown window");
          continue;
        }
        ++seen[h];
        if (windows_[h].domain != name)
          problems.push_back(where + " holds " + windows_.id(h) + " from another domain");
        if (h == cl.prototype) proto_member = true;
        const double d = squared_distance(windows_[h].values, cl.centroid);
        if (d < proto_d || (d == proto_d && windows_.id(h) < windows_.id(cl.prototype)))
          problems.push_back(where + " prototype is not the closest member to the centroid");
      }
      if (!proto_member) problems.push_back(where + " prototype is not a member");
    }
  }
  for (std::size_t h = 0; h < seen.size(); ++h)
    if (seen[h] != 1)
      problems.push_back("window " + windows_.id(h) + " indexed " + std::to_string(seen[h]) +
                         " times");
  return problems;
}

void SeriesTree::write(std::ostream& out) const {
  out << kTreeMagic << '\n';
  out << "{\"window\":" << window_size_ << ",\"cap\":" << options_.cap
      << ",\"seed\":" << options_.seed << ",\"max_iters\":" << options_.max_iters
      << ",\"tol\":" << shortest(options_.tol) << ",\"windows\":" << windows_.size()
      << ",\"domains\":" << domains_.size() << "}\n";
  for (std::size_t h = 0; h < windows_.size(); ++h) {
    const auto& w = windows_[h];
    out << "{\"domain\":" << json_quote(w.domain) << ",\"parent\":" << json_quote(w.parent_id)
        << ",\"channel\":" << w.channel << ",\"offset\":" << w.offset
        << ",\"values\":" << number_array(w.values) << "}\n";
  }
  for (const auto& [name, node] : domains_) {
    out << "{\"domain\":" << json_quote(name) << ",\"clusters\":" << node.clusters.size() << "}\n";
    for (const auto& cl : node.clusters) {
      out << "{\"prototype\":" << cl.prototype << ",\"members\":[";
      for (std::size_t i = 0; i < cl.members.size(); ++i) out << (i ? "," : "") << cl.members[i];
      out << "],\"centroid\":" << number_array(cl.centroid) << "}\n";
    }
  }
}

SeriesTree SeriesTree::read(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> nlohmann::json {
    if (!std::getline(in, line)) throw DataError("tree file truncated after line " + std::to_string(lineno));
    ++lineno;
    try {
      return nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("tree file line " + std::to_string(lineno) + ": " + e.what());
    }
  };
  if (!std::getline(in, line) || line != kTreeMagic)
    throw DataError("not a tree file (expected header '" + std::string(kTreeMagic) + "')");
  ++lineno;
  try {
    auto header = next();
    TreeOptions opts;
    opts.cap = header.at("cap").get<std::size_t>();
    opts.seed = header.at("seed").get<std::uint64_t>();
    opts.max_iters = header.at("max_iters").get<std::size_t>();
    opts.tol = header.at("tol").get<double>();
    SeriesTree tree(header.at("window").get<std::size_t>(), opts);
    const auto nwin = header.at("windows").get<std::size_t>();
    const auto ndom = header.at("domains").get<std::size_t>();
    for (std::size_t i = 0; i < nwin; ++i) {
      auto j = next();
      SeriesWindow w;
      w.domain = j.at("domain").get<std::string>();
      w.parent_id = j.at("parent").get<std::string>();
      w.channel = j.at("channel").get<std::size_t>();
      w.offset = j.at("offset").get<std::size_t>();
      w.values = read_reals(j.at("values"));
      tree.add_window(std::move(w));
    }
    for (std::size_t d = 0; d < ndom; ++d) {
      auto j = next();
      auto& node = tree.domains_[j.at("domain").get<std::string>()];
      const auto nclusters = j.at("clusters").get<std::size_t>();
      for (std::size_t c = 0; c < nclusters; ++c) {
        auto cj = next();
        ClusterNode cl;
        cl.prototype = cj.at("prototype").get<std::size_t>();
        cl.members = cj.at("members").get<std::vector<std::size_t>>();
        cl.centroid = read_reals(cj.at("centroid"));
        node.clusters.push_back(std::move(cl));
      }
    }
    auto problems = tree.check_invariants();
    if (!problems.empty()) throw DataError("tree file inconsistent: " + problems.front());
    return tree;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("tree file line " + std::to_string(lineno) + ": " + e.what());
  }
}

void SeriesTree::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open tree for writing: " + path.string());
  write(out);
  out.flush();
  if (!out) throw DataError("write failed: " + path.string());
}

SeriesTree SeriesTree::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tree: " + path.string());
  try {
    return read(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace tsrag
