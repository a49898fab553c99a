#pragma once

// Fixtures and independent oracles shared by the unit tests. The oracles
// recompute quantities from first principles (raw coordinates, edge lists,
// explicit enumeration) rather than calling the code under test.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <queue>
#include <string>
#include <tuple>
#include <vector>

#include "pragnav/world.hpp"

namespace testing_support {

using namespace pragnav;

struct NodeSpec {
  double x;
  double y;
  std::vector<std::string> landmarks;
};

inline World make_world(const std::vector<NodeSpec>& specs, std::vector<std::pair<NodeId, NodeId>> edges,
                        std::uint64_t seed = 0) {
  std::vector<Node> nodes;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    nodes.push_back(Node{static_cast<NodeId>(i), specs[i].x, specs[i].y, specs[i].landmarks});
  }
  return World(seed, std::move(nodes), std::move(edges));
}

/// Nodes 0..n-1 on the x axis at unit spacing, node i labeled with catalog word i.
inline World line_world(std::size_t n) {
  const auto catalog = landmark_catalog(static_cast<std::uint32_t>(std::max<std::size_t>(n, 1)));
  std::vector<NodeSpec> specs;
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (std::size_t i = 0; i < n; ++i) {
    specs.push_back({static_cast<double>(i), 0.0, {catalog[i]}});
    if (i > 0) edges.emplace_back(static_cast<NodeId>(i - 1), static_cast<NodeId>(i));
  }
  return make_world(specs, edges);
}

/// Five nodes with a cycle and repeated landmarks, so clauses can be ambiguous.
///
///   2(sofa) ---- 4(oven, lamp)
///     |            |
///   0(oven) ---- 1(sofa)
///     |
///   3(door)   (3 sits to the west of 0)
inline World fork_world() {
  return make_world({{0.0, 0.0, {"oven"}},
                     {1.0, 0.0, {"sofa"}},
                     {0.0, 1.0, {"sofa"}},
                     {-1.0, 0.0, {"door"}},
                     {1.0, 1.0, {"lamp", "oven"}}},
                    {{0, 1}, {0, 2}, {0, 3}, {1, 4}, {2, 4}});
}

inline bool bfs_connected(const World& w) {
  const std::size_t n = w.node_count();
  std::vector<std::vector<NodeId>> adj(n);
  for (auto [a, b] : w.edges()) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<bool> seen(n, false);
  std::queue<NodeId> q;
  q.push(0);
  seen[0] = true;
  std::size_t count = 1;
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop();
    for (NodeId v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++count;
        q.push(v);
      }
    }
  }
  return count == n;
}

/// All-pairs shortest paths from raw coordinates and the edge list.
inline std::vector<std::vector<double>> floyd_warshall(const World& w) {
  const std::size_t n = w.node_count();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, inf));
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0.0;
  for (auto [a, b] : w.edges()) {
    const auto& p = w.nodes()[a];
    const auto& q = w.nodes()[b];
    const double len = std::sqrt((p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y));
    d[a][b] = std::min(d[a][b], len);
    d[b][a] = std::min(d[b][a], len);
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
    }
  }
  return d;
}

/// Minimum over every monotone alignment path, enumerated explicitly. Costs
/// are accumulated front to back along each path.
inline double brute_force_dtw(const World& w, const std::vector<NodeId>& p, const std::vector<NodeId>& q) {
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double acc) {
    acc = acc + w.geodesic_distance(p[i], q[j]);
    if (i + 1 == p.size() && j + 1 == q.size()) {
      best = std::min(best, acc);
      return;
    }
    if (i + 1 < p.size()) walk(i + 1, j, acc);
    if (j + 1 < q.size()) walk(i, j + 1, acc);
    if (i + 1 < p.size() && j + 1 < q.size()) walk(i + 1, j + 1, acc);
  };
  walk(0, 0, 0.0);
  return best;
}

/// Every walk from `start` with at most `max_moves` moves.
inline std::vector<std::vector<NodeId>> enumerate_walks(const World& w, NodeId start, std::size_t max_moves) {
  std::vector<std::vector<NodeId>> out;
  std::vector<NodeId> path{start};
  std::function<void()> rec = [&] {
    out.push_back(path);
    if (path.size() > max_moves) return;
    for (const auto& nb : w.neighbors(path.back())) {
      path.push_back(nb.node);
      rec();
      path.pop_back();
    }
  };
  rec();
  return out;
}

/// Every token sequence over ids [0, vocab) with length 1..max_len.
inline std::vector<std::vector<std::uint32_t>> enumerate_sequences(std::uint32_t vocab, std::size_t max_len) {
  std::vector<std::vector<std::uint32_t>> out;
  std::vector<std::uint32_t> cur;
  std::function<void()> rec = [&] {
    if (!cur.empty()) out.push_back(cur);
    if (cur.size() == max_len) return;
    for (std::uint32_t t = 0; t < vocab; ++t) {
      cur.push_back(t);
      rec();
      cur.pop_back();
    }
  };
  rec();
  return out;
}

}  // namespace testing_support
