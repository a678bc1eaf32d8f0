#include "tsrag/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "tsrag/error.hpp"

namespace tsrag {
namespace {

bool hit_before(const Hit& a, const Hit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.window_id < b.window_id;
}

// Keeps the best `k` hits seen so far.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) {}

  void offer(Hit hit) {
    if (k_ == 0) return;
    if (hits_.size() == k_ && !hit_before(hit, hits_.front())) return;
    hits_.push_back(std::move(hit));
    std::push_heap(hits_.begin(), hits_.end(), hit_before);
    if (hits_.size() > k_) {
      std::pop_heap(hits_.begin(), hits_.end(), hit_before);
      hits_.pop_back();
    }
  }

  std::vector<Hit> take() {
    std::sort(hits_.begin(), hits_.end(), hit_before);
    return std::move(hits_);
  }

 private:
  std::size_t k_;
  std::vector<Hit> hits_;  // heap with the worst kept hit on top
};

struct ClusterRef {
  const std::string* domain;
  const ClusterNode* cluster;
  double score;
};

// Scores prototypes, probes the best clusters and collects the top `k` members.
std::vector<Hit> probe_search(const Query& q, const SeriesTree& tree,
                              std::span<const std::pair<const std::string*, const DomainNode*>> nodes,
                              std::size_t k, const std::unordered_set<std::size_t>& excluded,
                              SearchStats& stats) {
  const auto& table = tree.windows();
  std::vector<ClusterRef> refs;
  for (const auto& [name, node] : nodes) {
    for (const auto& cl : node->clusters) {
      refs.push_back({name, &cl, similarity(q.target, table[cl.prototype].values)});
      ++stats.evaluations;
    }
  }
  std::stable_sort(refs.begin(), refs.end(), [&](const ClusterRef& a, const ClusterRef& b) {
    if (a.score != b.score) return a.score > b.score;
    return table.id(a.cluster->prototype) < table.id(b.cluster->prototype);
  });
  const std::size_t probes = std::min(q.probes, refs.size());
  TopK top(k);
  for (std::size_t p = 0; p < probes; ++p) {
    const auto& ref = refs[p];
    ++stats.clusters_probed;
    for (std::size_t h : ref.cluster->members) {
      if (excluded.count(h)) continue;
      const auto& w = table[h];
      if (q.admit && !q.admit(w)) continue;
      double score = ref.score;
      if (h != ref.cluster->prototype) {
        score = similarity(q.target, w.values);
        ++stats.evaluations;
      }
      top.offer({table.id(h), score, w.domain, h});
    }
  }
  return top.take();
}

void check_target(const Query& q, std::size_t window) {
  q.validate();
  if (q.target.size() != window)
    throw DataError("query length " + std::to_string(q.target.size()) +
                    " does not match window size " + std::to_string(window));
}

}  // namespace

double similarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0, dd = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
    const double d = a[i] - b[i];
    dd += d * d;
  }
  const double cos = dot / (std::sqrt(na) * std::sqrt(nb) + kSimilarityEps);
  return cos + 1.0 / (std::sqrt(dd) + kSimilarityEps);
}

void Query::validate() const {
  if (k < 1) throw ConfigError("k must be at least 1");
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in [0, 1]");
  if (probes < 1) throw ConfigError("probes must be at least 1");
  if (target.empty()) throw DataError("query target is empty");
}

std::size_t local_share(std::size_t k, double rho) {
  return static_cast<std::size_t>(std::lround(rho * static_cast<double>(k)));
}

Retrieval retrieve_global(const Query& query, const SeriesTree& tree) {
  check_target(query, tree.window_size());
  if (tree.size() == 0) throw DataError("retrieval over an empty tree");
  std::vector<std::pair<const std::string*, const DomainNode*>> nodes;
  for (const auto& [name, node] : tree.domains()) nodes.emplace_back(&name, &node);
  Retrieval r;
  r.hits = probe_search(query, tree, nodes, query.k, {}, r.stats);
  r.global_hits = r.hits.size();
  return r;
}

Retrieval retrieve_topk(const Query& query, const SeriesTree& tree) {
  check_target(query, tree.window_size());
  if (tree.size() == 0) throw DataError("retrieval over an empty tree");
  const auto it = query.domain ? tree.domains().find(*query.domain) : tree.domains().end();
  if (it == tree.domains().end()) return retrieve_global(query, tree);

  Retrieval r;
  const std::size_t k_local = local_share(query.k, query.rho);
  std::vector<std::pair<const std::string*, const DomainNode*>> local{{&it->first, &it->second}};
  auto local_hits = probe_search(query, tree, local, k_local, {}, r.stats);

  std::unordered_set<std::size_t> taken;
  for (const auto& h : local_hits) taken.insert(h.handle);
  std::vector<std::pair<const std::string*, const DomainNode*>> all;
  for (const auto& [name, node] : tree.domains()) all.emplace_back(&name, &node);
  auto global_hits = probe_search(query, tree, all, query.k - k_local, taken, r.stats);

  r.local_hits = local_hits.size();
  r.global_hits = global_hits.size();
  r.hits = std::move(local_hits);
  r.hits.insert(r.hits.end(), std::make_move_iterator(global_hits.begin()),
                std::make_move_iterator(global_hits.end()));
  std::sort(r.hits.begin(), r.hits.end(), hit_before);
  return r;
}

Retrieval linear_scan_oracle(const Query& query, std::span<const SeriesWindow> windows) {
  query.validate();
  if (windows.empty()) throw DataError("oracle over an empty window set");
  Retrieval r;
  TopK top(query.k);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    if (w.values.size() != query.target.size())
      throw DataError("window " + w.id() + " length does not match the query");
    if (query.admit && !query.admit(w)) continue;
    ++r.stats.evaluations;
    top.offer({w.id(), similarity(query.target, w.values), w.domain, i});
  }
  r.hits = top.take();
  r.global_hits = r.hits.size();
  return r;
}

Retrieval linear_scan_oracle(const Query& query, const SeriesTree& tree) {
  check_target(query, tree.window_size());
  if (tree.size() == 0) throw DataError("oracle over an empty tree");
  const auto& table = tree.windows();
  Retrieval r;
  TopK top(query.k);
  for (std::size_t h = 0; h < table.size(); ++h) {
    const auto& w = table[h];
    if (query.admit && !query.admit(w)) continue;
    ++r.stats.evaluations;
    top.offer({table.id(h), similarity(query.target, w.values), w.domain, h});
  }
  r.hits = top.take();
  r.global_hits = r.hits.size();
  return r;
}

}  // namespace tsrag
