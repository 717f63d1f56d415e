// Copyright (c) 2026 The unspeech-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "unspeech/common.hpp"
#include "unspeech/partition_metrics.hpp"

namespace unspeech {

struct ClusteringConfig {
  std::size_t min_cluster_size = 5;
  std::size_t min_samples = 3;

  void validate() const {
    if (min_cluster_size < 2) throw InvalidArgument("min_cluster_size must be >= 2");
    if (min_samples < 1) throw InvalidArgument("min_samples must be >= 1");
  }
};

struct WeightedEdge {
  std::size_t a = 0, b = 0;
  double weight = 0.0;
};

/// Dense matrix of pairwise Euclidean distances.
class DistanceMatrix {
 public:
  explicit DistanceMatrix(const std::vector<std::vector<double>>& points) : n_(points.size()), d_(n_ * n_, 0.0) {
    for (std::size_t i = 0; i < n_; ++i) {
      if (points[i].size() != points[0].size()) throw ShapeError("points have different dimensions");
      for (std::size_t j = i + 1; j < n_; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < points[i].size(); ++k) {
          const double diff = points[i][k] - points[j][k];
          s += diff * diff;
        }
        d_[i * n_ + j] = d_[j * n_ + i] = std::sqrt(s);
      }
    }
  }
  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }

 private:
  std::size_t n_;
  std::vector<double> d_;
};

/// Distance from each point to its min_samples-th nearest neighbour, the
/// point itself counting as the first.
inline std::vector<double> core_distances(const DistanceMatrix& d, std::size_t min_samples) {
  const std::size_t n = d.size();
  std::vector<double> core(n, 0.0), row(n);
  if (n == 0) return core;
  const std::size_t k = std::min(min_samples, n) - 1;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) row[j] = d(i, j);
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end());
    core[i] = row[k];
  }
  return core;
}

inline double mutual_reachability(const DistanceMatrix& d, const std::vector<double>& core, std::size_t i,
                                  std::size_t j) {
  return std::max({core[i], core[j], d(i, j)});
}

/// Prim's algorithm over the implicit complete mutual-reachability graph.
inline std::vector<WeightedEdge> mutual_reachability_mst(const DistanceMatrix& d, const std::vector<double>& core) {
  const std::size_t n = d.size();
  std::vector<WeightedEdge> edges;
  if (n < 2) return edges;
  std::vector<bool> in_tree(n, false);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> from(n, 0);
  std::size_t cur = 0;
  in_tree[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t next = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      const double w = mutual_reachability(d, core, cur, j);
      if (w < best[j]) {
        best[j] = w;
        from[j] = cur;
      }
      if (next == n || best[j] < best[next]) next = j;
    }
    in_tree[next] = true;
    edges.push_back({from[next], next, best[next]});
    cur = next;
  }
  return edges;
}

/// One row of the condensed cluster tree: `child` (a point id < n, or a
/// cluster label >= n) leaves `parent` at density `lambda`.
struct CondensedEdge {
  std::size_t parent = 0;
  std::size_t child = 0;
  double lambda = 0.0;
  std::size_t child_size = 0;
};

struct HdbscanResult {
  std::vector<int> labels;  // cluster id >= 0 or kOutlier
  std::size_t num_clusters = 0;
  std::vector<WeightedEdge> mst;
  std::vector<CondensedEdge> condensed;
  std::map<std::size_t, double> stability;  // per condensed cluster label

  std::size_t num_outliers() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kOutlier));
  }
};

namespace detail {

struct LinkageNode {
  std::size_t left, right;
  double distance;
  std::size_t size;
};

/// Single-linkage merge tree from MST edges; node n + i is the i-th merge.
inline std::vector<LinkageNode> single_linkage(std::size_t n, std::vector<WeightedEdge> mst) {
  std::stable_sort(mst.begin(), mst.end(), [](const auto& x, const auto& y) { return x.weight < y.weight; });
  std::vector<std::size_t> parent(2 * n - 1), size(2 * n - 1, 1);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<LinkageNode> nodes;
  nodes.reserve(n - 1);
  for (const auto& e : mst) {
    const std::size_t ra = find(e.a), rb = find(e.b);
    const std::size_t id = n + nodes.size();
    nodes.push_back({ra, rb, e.weight, size[ra] + size[rb]});
    parent[ra] = parent[rb] = id;
    size[id] = size[ra] + size[rb];
  }
  return nodes;
}

inline std::vector<CondensedEdge> condense(std::size_t n, const std::vector<LinkageNode>& tree,
                                           std::size_t min_cluster_size) {
  const std::size_t root = 2 * n - 2;
  auto node_size = [&](std::size_t x) { return x < n ? std::size_t{1} : tree[x - n].size; };
  auto leaves = [&](std::size_t x) {
    std::vector<std::size_t> out, stack{x};
    while (!stack.empty()) {
      const std::size_t y = stack.back();
      stack.pop_back();
      if (y < n) {
        out.push_back(y);
      } else {
        stack.push_back(tree[y - n].right);
        stack.push_back(tree[y - n].left);
      }
    }
    return out;
  };

  std::vector<std::size_t> relabel(2 * n - 1, 0);
  relabel[root] = n;
  std::size_t next_label = n + 1;
  std::vector<CondensedEdge> out;
  std::deque<std::size_t> queue{root};
  while (!queue.empty()) {
    const std::size_t node = queue.front();
    queue.pop_front();
    if (node < n) continue;
    const auto& link = tree[node - n];
    const double lambda = link.distance > 0.0 ? 1.0 / link.distance : std::numeric_limits<double>::infinity();
    const std::size_t ls = node_size(link.left), rs = node_size(link.right);
    const std::size_t label = relabel[node];
    auto fall_out = [&](std::size_t sub) {
      for (std::size_t p : leaves(sub)) out.push_back({label, p, lambda, 1});
    };
    if (ls >= min_cluster_size && rs >= min_cluster_size) {
      relabel[link.left] = next_label++;
      out.push_back({label, relabel[link.left], lambda, ls});
      relabel[link.right] = next_label++;
      out.push_back({label, relabel[link.right], lambda, rs});
      queue.push_back(link.left);
      queue.push_back(link.right);
    } else if (ls < min_cluster_size && rs < min_cluster_size) {
      fall_out(link.left);
      fall_out(link.right);
    } else if (ls < min_cluster_size) {
      relabel[link.right] = label;
      fall_out(link.left);
      queue.push_back(link.right);
    } else {
      relabel[link.left] = label;
      fall_out(link.right);
      queue.push_back(link.left);
    }
  }
  return out;
}

}  // namespace detail

/// Density-based hierarchical clustering with excess-of-mass cluster
/// selection. Points are compared by Euclidean distance.
inline HdbscanResult cluster_hdbscan(const std::vector<std::vector<double>>& points, const ClusteringConfig& cfg) {
  cfg.validate();
  const std::size_t n = points.size();
  HdbscanResult res;
  res.labels.assign(n, kOutlier);
  if (n < cfg.min_cluster_size || n < 2) return res;

  const DistanceMatrix d(points);
  const auto core = core_distances(d, cfg.min_samples);
  res.mst = mutual_reachability_mst(d, core);
  const auto tree = detail::single_linkage(n, res.mst);
  res.condensed = detail::condense(n, tree, cfg.min_cluster_size);

  // Stability: sum over members of (lambda at which they leave - birth lambda).
  const std::size_t root = n;
  std::map<std::size_t, double> birth{{root, 0.0}};
  for (const auto& e : res.condensed)
    if (e.child_size > 1) birth[e.child] = e.lambda;
  for (const auto& [c, b] : birth) res.stability[c] = 0.0;
  for (const auto& e : res.condensed) {
    const double b = birth[e.parent];
    const double span = (std::isinf(e.lambda) && std::isinf(b)) ? 0.0 : e.lambda - b;
    res.stability[e.parent] += span * static_cast<double>(e.child_size);
  }

  std::map<std::size_t, std::vector<std::size_t>> children;
  for (const auto& e : res.condensed)
    if (e.child_size > 1) children[e.parent].push_back(e.child);

  // Excess of mass, bottom-up: children carry larger labels than parents.
  // The root is never selected, so a lone cluster spanning everything is noise.
  std::map<std::size_t, bool> selected;
  auto stability = res.stability;
  for (auto it = stability.rbegin(); it != stability.rend(); ++it) {
    const std::size_t node = it->first;
    if (node == root) continue;
    double subtree = 0.0;
    for (std::size_t c : children[node]) subtree += stability[c];
    if (subtree > stability[node]) {
      selected[node] = false;
      stability[node] = subtree;
    } else {
      selected[node] = true;
      std::vector<std::size_t> stack(children[node]);
      while (!stack.empty()) {
        const std::size_t s = stack.back();
        stack.pop_back();
        selected[s] = false;
        for (std::size_t c : children[s]) stack.push_back(c);
      }
    }
  }

  // Each point belongs to the selected cluster found by walking up the
  // condensed tree, or is an outlier if it reaches the root first.
  std::map<std::size_t, std::size_t> up;
  for (const auto& e : res.condensed) up[e.child] = e.parent;
  std::map<std::size_t, int> cluster_id;
  for (const auto& [node, sel] : selected)
    if (sel) cluster_id[node] = static_cast<int>(cluster_id.size());
  res.num_clusters = cluster_id.size();
  for (std::size_t p = 0; p < n; ++p) {
    std::size_t c = up.at(p);
    while (c != root && !cluster_id.contains(c)) c = up.at(c);
    res.labels[p] = c == root ? kOutlier : cluster_id.at(c);
  }
  return res;
}

inline std::vector<std::vector<double>> unit_normalized(const std::vector<std::vector<float>>& vectors) {
  std::vector<std::vector<double>> out;
  out.reserve(vectors.size());
  for (const auto& v : vectors) {
    std::vector<double> x(v.begin(), v.end());
    double norm = 0.0;
    for (double a : x) norm += a * a;
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) throw InvalidArgument("cannot normalize a zero embedding");
    for (double& a : x) a /= norm;
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace unspeech
