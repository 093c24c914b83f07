#pragma once

// Agent topologies and feature allocations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dagagg/error.hpp"
#include "dagagg/rng.hpp"

namespace dagagg {

using NodeId = std::size_t;
using Path = std::vector<NodeId>;

enum class TreeDirection { top_down, bottom_up };

inline std::string to_string(TreeDirection d) { return d == TreeDirection::top_down ? "top_down" : "bottom_up"; }

inline TreeDirection tree_direction_from_string(const std::string& s) {
  if (s == "top_down") return TreeDirection::top_down;
  if (s == "bottom_up") return TreeDirection::bottom_up;
  throw InvalidArgument("unknown tree direction '" + s + "'");
}

/// Immutable DAG of agents.
///
/// Depth follows the root-is-1 convention: depth(v) = 1 + max depth of its
/// parents, so a chain of n agents has depth n. subtree_size(v) counts the
/// agents whose predictions can reach v, v included; on a bottom-up tree this
/// is the size of the tree subtree rooted at v.
class Dag {
 public:
  Dag() = default;

  static Dag from_parents(std::vector<std::vector<NodeId>> parents, std::string generator = "explicit",
                          std::uint64_t seed = 0) {
    Dag g;
    g.generator_ = std::move(generator);
    g.seed_ = seed;
    const std::size_t n = parents.size();
    if (n == 0) throw InvalidArgument("a DAG needs at least one node");
    for (std::size_t v = 0; v < n; ++v) {
      auto& ps = parents[v];
      std::sort(ps.begin(), ps.end());
      ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
      for (NodeId p : ps) {
        if (p >= n) throw InvalidArgument("parent id " + std::to_string(p) + " out of range");
        if (p == v) throw InvalidArgument("self loop at node " + std::to_string(v));
      }
    }
    g.parents_ = std::move(parents);
    g.children_.assign(n, {});
    for (std::size_t v = 0; v < n; ++v)
      for (NodeId p : g.parents_[v]) g.children_[p].push_back(v);

    // Kahn's algorithm; ties go to the smallest id.
    std::vector<std::size_t> indegree(n);
    for (std::size_t v = 0; v < n; ++v) indegree[v] = g.parents_[v].size();
    std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
    for (std::size_t v = 0; v < n; ++v)
      if (indegree[v] == 0) ready.push(v);
    while (!ready.empty()) {
      const NodeId v = ready.top();
      ready.pop();
      g.topo_order_.push_back(v);
      for (NodeId c : g.children_[v])
        if (--indegree[c] == 0) ready.push(c);
    }
    if (g.topo_order_.size() != n) throw InvalidArgument("graph contains a cycle");

    g.depth_.assign(n, 1);
    for (NodeId v : g.topo_order_)
      for (NodeId p : g.parents_[v]) g.depth_[v] = std::max(g.depth_[v], g.depth_[p] + 1);

    std::vector<std::vector<char>> upstream(n, std::vector<char>(n, 0));
    for (NodeId v : g.topo_order_) {
      upstream[v][v] = 1;
      for (NodeId p : g.parents_[v])
        for (std::size_t u = 0; u < n; ++u) upstream[v][u] |= upstream[p][u];
    }
    g.subtree_size_.resize(n);
    for (std::size_t v = 0; v < n; ++v)
      g.subtree_size_[v] = static_cast<std::size_t>(std::count(upstream[v].begin(), upstream[v].end(), 1));
    return g;
  }

  std::size_t node_count() const { return parents_.size(); }
  const std::vector<NodeId>& parents(NodeId v) const { return parents_.at(v); }
  const std::vector<NodeId>& children(NodeId v) const { return children_.at(v); }
  const std::vector<NodeId>& topo_order() const { return topo_order_; }
  std::size_t depth(NodeId v) const { return depth_.at(v); }
  std::size_t max_depth() const { return *std::max_element(depth_.begin(), depth_.end()); }
  std::size_t subtree_size(NodeId v) const { return subtree_size_.at(v); }
  const std::string& generator() const { return generator_; }
  std::uint64_t seed() const { return seed_; }

  std::vector<NodeId> roots() const {
    std::vector<NodeId> r;
    for (std::size_t v = 0; v < node_count(); ++v)
      if (parents_[v].empty()) r.push_back(v);
    return r;
  }

 private:
  std::vector<std::vector<NodeId>> parents_;
  std::vector<std::vector<NodeId>> children_;
  std::vector<NodeId> topo_order_;
  std::vector<std::size_t> depth_;
  std::vector<std::size_t> subtree_size_;
  std::string generator_;
  std::uint64_t seed_ = 0;
};

inline Dag build_chain(std::size_t n) {
  if (n == 0) throw InvalidArgument("chain needs n >= 1");
  std::vector<std::vector<NodeId>> parents(n);
  for (std::size_t i = 1; i < n; ++i) parents[i] = {i - 1};
  return Dag::from_parents(std::move(parents), "chain");
}

/// Uniform random recursive tree: node i attaches to a uniform node in [0, i).
/// Returns the tree parent of every node (node 0 has none).
inline std::vector<std::optional<NodeId>> random_recursive_tree(std::size_t n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, Stream::topology));
  std::vector<std::optional<NodeId>> tree_parent(n);
  for (std::size_t i = 1; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    tree_parent[i] = pick(rng);
  }
  return tree_parent;
}

inline Dag build_random_tree(std::size_t n, TreeDirection direction, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("tree needs n >= 1");
  const auto tree_parent = random_recursive_tree(n, seed);
  std::vector<std::vector<NodeId>> parents(n);
  for (std::size_t i = 1; i < n; ++i) {
    if (direction == TreeDirection::top_down) {
      parents[i].push_back(*tree_parent[i]);
    } else {
      parents[*tree_parent[i]].push_back(i);
    }
  }
  return Dag::from_parents(std::move(parents), "tree_" + to_string(direction), seed);
}

/// Spokes 0..spokes-1 are roots; node `spokes` is the hub.
inline Dag build_hub_and_spokes(std::size_t spokes) {
  if (spokes == 0) throw InvalidArgument("hub_and_spokes needs spokes >= 1");
  std::vector<std::vector<NodeId>> parents(spokes + 1);
  for (std::size_t s = 0; s < spokes; ++s) parents[spokes].push_back(s);
  return Dag::from_parents(std::move(parents), "hub_and_spokes");
}

/// Path 0 -> 1 -> ... -> n-1 plus every forward shortcut: node i receives the
/// predictions of all earlier nodes. Depth is still n.
inline Dag build_transitive_path(std::size_t n) {
  if (n == 0) throw InvalidArgument("transitive path needs n >= 1");
  std::vector<std::vector<NodeId>> parents(n);
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) parents[i].push_back(j);
  return Dag::from_parents(std::move(parents), "transitive_path");
}

/// Each forward pair i < j becomes an edge i -> j with probability edge_prob.
inline Dag build_random_dag(std::size_t n, double edge_prob, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("random DAG needs n >= 1");
  if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) throw InvalidArgument("edge probability must lie in [0, 1]");
  Rng rng(derive_seed(seed, Stream::topology));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<NodeId>> parents(n);
  for (std::size_t j = 1; j < n; ++j)
    for (std::size_t i = 0; i < j; ++i)
      if (unit(rng) < edge_prob) parents[j].push_back(i);
  return Dag::from_parents(std::move(parents), "random_dag", seed);
}

/// A maximum-length directed path; ties go to the smallest node id, both for
/// the endpoint and for each predecessor.
inline Path longest_path(const Dag& dag) {
  const std::size_t n = dag.node_count();
  std::vector<std::size_t> length(n, 1);
  std::vector<std::optional<NodeId>> prev(n);
  for (NodeId v : dag.topo_order()) {
    for (NodeId p : dag.parents(v)) {  // parents are sorted ascending
      if (length[p] + 1 > length[v]) {
        length[v] = length[p] + 1;
        prev[v] = p;
      }
    }
  }
  NodeId end = 0;
  for (NodeId v = 1; v < n; ++v)
    if (length[v] > length[end]) end = v;
  Path path{end};
  while (prev[path.back()]) path.push_back(*prev[path.back()]);
  std::reverse(path.begin(), path.end());
  return path;
}

struct FeatureAssignment {
  std::size_t d = 0;
  std::vector<std::vector<std::size_t>> sets;  // sorted, duplicate-free
  std::string generator = "explicit";
  std::uint64_t seed = 0;

  std::size_t agent_count() const { return sets.size(); }

  void validate() const {
    for (std::size_t a = 0; a < sets.size(); ++a) {
      const auto& s = sets[a];
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] >= d) throw InvalidArgument("agent " + std::to_string(a) + " has feature out of range");
        if (i > 0 && s[i] <= s[i - 1]) throw InvalidArgument("agent " + std::to_string(a) + " feature list not sorted/unique");
      }
    }
  }
};

inline FeatureAssignment random_feature_assignment(const Dag& dag, std::size_t d, double p, std::uint64_t seed) {
  if (!(p > 0.0 && p <= 1.0)) throw InvalidArgument("feature fraction p must lie in (0, 1]");
  if (d == 0) throw InvalidArgument("d must be positive");
  Rng rng(derive_seed(seed, Stream::assignment));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  FeatureAssignment a;
  a.d = d;
  a.generator = "random";
  a.seed = seed;
  a.sets.resize(dag.node_count());
  for (std::size_t agent = 0; agent < dag.node_count(); ++agent)
    for (std::size_t f = 0; f < d; ++f)
      if (unit(rng) < p) a.sets[agent].push_back(f);
  return a;
}

/// Agent j sees the single feature j mod k.
inline FeatureAssignment cyclic_assignment(std::size_t path_length, std::size_t k) {
  if (path_length == 0 || k == 0) throw InvalidArgument("cyclic_assignment needs positive length and k");
  FeatureAssignment a;
  a.d = k;
  a.generator = "cyclic";
  a.sets.resize(path_length);
  for (std::size_t j = 0; j < path_length; ++j) a.sets[j] = {j % k};
  return a;
}

struct CoverageReport {
  bool covered = true;
  std::optional<std::size_t> first_failing_window;
  std::vector<std::size_t> missing_features;  // of the first failing window
};

/// Does every contiguous window of `window` agents along `path` see all d
/// features between them?
inline CoverageReport coverage_window_check(const FeatureAssignment& assignment, const Path& path,
                                            std::size_t window) {
  if (window == 0 || window > path.size()) throw InvalidArgument("window must be in [1, path length]");
  std::vector<std::size_t> count(assignment.d, 0);
  auto add = [&](NodeId v, int sign) {
    for (std::size_t f : assignment.sets.at(v)) count[f] = static_cast<std::size_t>(static_cast<long>(count[f]) + sign);
  };
  CoverageReport report;
  for (std::size_t i = 0; i < window; ++i) add(path[i], +1);
  for (std::size_t start = 0;; ++start) {
    for (std::size_t f = 0; f < assignment.d; ++f)
      if (count[f] == 0) report.missing_features.push_back(f);
    if (!report.missing_features.empty()) {
      report.covered = false;
      report.first_failing_window = start;
      return report;
    }
    if (start + window >= path.size()) break;
    add(path[start], -1);
    add(path[start + window], +1);
  }
  return report;
}

/// Smallest M with M >= (ln(N d / M) + ln(1/delta)) / (-ln(1 - p)), the
/// window length at which every length-M window of an N-agent path covers all
/// d features with probability at least 1 - delta under random allocation.
inline std::size_t required_window_length(std::size_t path_length, std::size_t d, double p, double delta) {
  if (!(p > 0.0 && p <= 1.0)) throw InvalidArgument("p must lie in (0, 1]");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
  if (p == 1.0) return 1;
  const double denom = -std::log1p(-p);
  for (std::size_t m = 1;; ++m) {
    const double rhs = (std::log(static_cast<double>(path_length * d) / static_cast<double>(m)) + std::log(1.0 / delta)) / denom;
    if (static_cast<double>(m) >= rhs) return m;
  }
}

// JSON -------------------------------------------------------------------

inline nlohmann::json to_json(const Dag& dag) {
  nlohmann::json parents = nlohmann::json::array();
  for (std::size_t v = 0; v < dag.node_count(); ++v) parents.push_back(dag.parents(v));
  return {{"generator", dag.generator()}, {"seed", dag.seed()}, {"nodes", dag.node_count()}, {"parents", parents}};
}

inline Dag dag_from_json(const nlohmann::json& j) {
  auto parents = j.at("parents").get<std::vector<std::vector<NodeId>>>();
  if (j.contains("nodes") && j.at("nodes").get<std::size_t>() != parents.size())
    throw InvalidArgument("node count does not match parent lists");
  return Dag::from_parents(std::move(parents), j.value("generator", std::string("explicit")),
                           j.value("seed", std::uint64_t{0}));
}

inline nlohmann::json to_json(const FeatureAssignment& a) {
  return {{"generator", a.generator}, {"seed", a.seed}, {"d", a.d}, {"sets", a.sets}};
}

inline FeatureAssignment assignment_from_json(const nlohmann::json& j) {
  FeatureAssignment a;
  a.d = j.at("d").get<std::size_t>();
  a.sets = j.at("sets").get<std::vector<std::vector<std::size_t>>>();
  a.generator = j.value("generator", std::string("explicit"));
  a.seed = j.value("seed", std::uint64_t{0});
  a.validate();
  return a;
}

}  // namespace dagagg
