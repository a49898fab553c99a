#include "pragnav/world.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <queue>
#include <tuple>

#include "pragnav/error.hpp"
#include "pragnav/rng.hpp"

namespace pragnav {

namespace {

constexpr double kMinSeparation = 0.45;
constexpr double kLinkRadius = 1.6;
constexpr std::size_t kMaxDegree = 5;
constexpr int kPlacementAttempts = 64;

const char* const kCatalog[] = {
    "oven",   "stairs", "sofa",   "door",  "table",    "bed",     "sink",   "lamp",
    "plant",  "window", "piano",  "mirror", "desk",    "shelf",   "rug",    "fireplace",
    "bathtub", "closet", "painting", "clock", "chair", "fridge", "television", "vase",
};

}  // namespace

int sector_of(double dx, double dy) {
  double angle = std::atan2(dy, dx);
  if (angle < 0.0) angle += 2.0 * std::numbers::pi;
  int s = static_cast<int>(std::floor(angle / (std::numbers::pi / 4.0)));
  return ((s % kSectorCount) + kSectorCount) % kSectorCount;
}

std::vector<std::string> landmark_catalog(std::uint32_t size) {
  std::vector<std::string> out;
  out.reserve(size);
  constexpr std::size_t kNamed = std::size(kCatalog);
  for (std::uint32_t i = 0; i < size; ++i) {
    out.emplace_back(i < kNamed ? std::string(kCatalog[i]) : "landmark" + std::to_string(i + 1));
  }
  return out;
}

World World::generate(const WorldParams& params) {
  if (params.node_count < 2) fail(ErrorCode::kInvalidArgument, "generate_world: node_count must be >= 2");
  if (params.catalog_size < 1) fail(ErrorCode::kInvalidArgument, "generate_world: empty landmark catalog");

  Rng rng(derive_seed(params.seed, 0x776f726cULL));
  const std::size_t n = params.node_count;
  const double side = std::sqrt(static_cast<double>(n));

  std::vector<Node> nodes;
  nodes.reserve(n);
  std::vector<std::array<bool, kSectorCount>> used;  // occupied sectors per node
  std::vector<std::size_t> degree;
  std::vector<std::pair<NodeId, NodeId>> edges;

  auto sector_between = [&](std::size_t from, double x, double y) {
    return sector_of(x - nodes[from].x, y - nodes[from].y);
  };
  auto add_edge = [&](std::size_t a, std::size_t b) {
    used[a][sector_between(a, nodes[b].x, nodes[b].y)] = true;
    used[b][sector_between(b, nodes[a].x, nodes[a].y)] = true;
    ++degree[a];
    ++degree[b];
    edges.emplace_back(static_cast<NodeId>(std::min(a, b)), static_cast<NodeId>(std::max(a, b)));
  };
  auto push_node = [&](double x, double y) {
    nodes.push_back(Node{static_cast<NodeId>(nodes.size()), x, y, {}});
    used.push_back({});
    degree.push_back(0);
  };

  push_node(uniform01(rng) * side, uniform01(rng) * side);

  // Grow a spanning tree: each new node links to the nearest existing node whose
  // sector toward it is still free, so no node ever has two neighbors in one sector.
  for (std::size_t i = 1; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const double x = uniform01(rng) * side;
      const double y = uniform01(rng) * side;
      std::vector<std::pair<double, std::size_t>> by_distance;
      bool too_close = false;
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        const double d = std::hypot(x - nodes[j].x, y - nodes[j].y);
        if (d < kMinSeparation) too_close = true;
        by_distance.emplace_back(d, j);
      }
      if (too_close) continue;
      std::sort(by_distance.begin(), by_distance.end());
      for (auto [d, j] : by_distance) {
        if (degree[j] >= kMaxDegree || used[j][sector_between(j, x, y)]) continue;
        push_node(x, y);
        add_edge(j, i);
        placed = true;
        break;
      }
    }
    if (placed) continue;
    // Repair: attach next to an existing node through one of its free sectors.
    std::vector<std::pair<std::size_t, int>> slots;
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      if (degree[j] >= kMaxDegree) continue;
      for (int s = 0; s < kSectorCount; ++s) {
        if (!used[j][s]) slots.emplace_back(j, s);
      }
    }
    while (!placed && !slots.empty()) {
      const std::size_t pick = uniform_index(rng, slots.size());
      auto [j, s] = slots[pick];
      slots.erase(slots.begin() + static_cast<std::ptrdiff_t>(pick));
      const double angle = (s + 0.5) * std::numbers::pi / 4.0;
      const double x = nodes[j].x + 0.8 * std::cos(angle);
      const double y = nodes[j].y + 0.8 * std::sin(angle);
      bool clash = false;
      for (const auto& other : nodes) clash = clash || std::hypot(x - other.x, y - other.y) < 1e-6;
      if (clash) continue;
      push_node(x, y);
      add_edge(j, i);
      placed = true;
    }
    if (!placed) fail(ErrorCode::kInfeasible, "generate_world: could not place node");
  }

  // Densify with short edges wherever both endpoint sectors are free.
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const double d = std::hypot(nodes[a].x - nodes[b].x, nodes[a].y - nodes[b].y);
      if (d <= kLinkRadius) pairs.emplace_back(d, a, b);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  for (auto [d, a, b] : pairs) {
    const auto key = std::make_pair(static_cast<NodeId>(a), static_cast<NodeId>(b));
    if (std::find(edges.begin(), edges.end(), key) != edges.end()) continue;
    if (degree[a] >= kMaxDegree || degree[b] >= kMaxDegree) continue;
    if (used[a][sector_between(a, nodes[b].x, nodes[b].y)]) continue;
    if (used[b][sector_between(b, nodes[a].x, nodes[a].y)]) continue;
    add_edge(a, b);
  }

  const auto catalog = landmark_catalog(params.catalog_size);
  for (auto& node : nodes) {
    std::size_t count = (catalog.size() >= 2 && uniform01(rng) < 0.4) ? 2 : 1;
    std::vector<std::size_t> pool(catalog.size());
    for (std::size_t k = 0; k < pool.size(); ++k) pool[k] = k;
    std::vector<std::size_t> chosen;
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t pick = uniform_index(rng, pool.size());
      chosen.push_back(pool[pick]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    std::sort(chosen.begin(), chosen.end());
    for (auto k : chosen) node.landmarks.push_back(catalog[k]);
  }

  std::sort(edges.begin(), edges.end());
  return World(params.seed, std::move(nodes), std::move(edges));
}

World::World(std::uint64_t seed, std::vector<Node> nodes, std::vector<std::pair<NodeId, NodeId>> edges)
    : seed_(seed), nodes_(std::move(nodes)), edges_(std::move(edges)) {
  const std::size_t n = nodes_.size();
  if (n < 2) fail(ErrorCode::kInvalidArgument, "world: fewer than two nodes");
  for (std::size_t i = 0; i < n; ++i) {
    if (nodes_[i].id != i) fail(ErrorCode::kInvalidArgument, "world: node ids must be 0..n-1 in order");
    if (nodes_[i].landmarks.empty()) fail(ErrorCode::kInvalidArgument, "world: node without landmark");
  }
  adjacency_.assign(n, {});
  double total_length = 0.0;
  for (auto [a, b] : edges_) {
    if (a >= n || b >= n || a == b) fail(ErrorCode::kInvalidArgument, "world: bad edge endpoint");
    const double len = std::hypot(nodes_[a].x - nodes_[b].x, nodes_[a].y - nodes_[b].y);
    if (!(len > 0.0)) fail(ErrorCode::kInvalidArgument, "world: zero-length edge");
    const int s_ab = sector_of(nodes_[b].x - nodes_[a].x, nodes_[b].y - nodes_[a].y);
    const int s_ba = sector_of(nodes_[a].x - nodes_[b].x, nodes_[a].y - nodes_[b].y);
    for (const auto& nb : adjacency_[a]) {
      if (nb.node == b) fail(ErrorCode::kInvalidArgument, "world: duplicate edge");
      if (nb.sector == s_ab) fail(ErrorCode::kInvalidArgument, "world: two neighbors share a sector");
    }
    for (const auto& nb : adjacency_[b]) {
      if (nb.sector == s_ba) fail(ErrorCode::kInvalidArgument, "world: two neighbors share a sector");
    }
    adjacency_[a].push_back({b, s_ab, len});
    adjacency_[b].push_back({a, s_ba, len});
    total_length += len;
  }
  if (edges_.empty()) fail(ErrorCode::kInvalidArgument, "world: no edges");
  mean_edge_length_ = total_length / static_cast<double>(edges_.size());
  for (auto& adj : adjacency_) {
    std::sort(adj.begin(), adj.end(), [](const Neighbor& l, const Neighbor& r) { return l.sector < r.sector; });
  }

  // All-pairs shortest paths by Dijkstra from every source.
  const double inf = std::numeric_limits<double>::infinity();
  distances_.assign(n * n, inf);
  using Entry = std::pair<double, NodeId>;
  for (NodeId src = 0; src < n; ++src) {
    double* dist = distances_.data() + static_cast<std::size_t>(src) * n;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
    dist[src] = 0.0;
    queue.emplace(0.0, src);
    while (!queue.empty()) {
      auto [d, u] = queue.top();
      queue.pop();
      if (d > dist[u]) continue;
      for (const auto& nb : adjacency_[u]) {
        const double nd = d + nb.length;
        if (nd < dist[nb.node]) {
          dist[nb.node] = nd;
          queue.emplace(nd, nb.node);
        }
      }
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (dist[v] == inf) fail(ErrorCode::kInvalidArgument, "world: graph is not connected");
    }
  }
}

const Node& World::node(NodeId id) const {
  if (!contains(id)) fail(ErrorCode::kNotFound, "unknown node id " + std::to_string(id));
  return nodes_[id];
}

std::span<const Neighbor> World::neighbors(NodeId id) const {
  if (!contains(id)) fail(ErrorCode::kNotFound, "unknown node id " + std::to_string(id));
  return adjacency_[id];
}

std::optional<NodeId> World::neighbor_in_sector(NodeId id, int sector) const {
  for (const auto& nb : neighbors(id)) {
    if (nb.sector == sector) return nb.node;
  }
  return std::nullopt;
}

bool World::adjacent(NodeId a, NodeId b) const {
  for (const auto& nb : neighbors(a)) {
    if (nb.node == b) return true;
  }
  return false;
}

double World::edge_length(NodeId a, NodeId b) const {
  for (const auto& nb : neighbors(a)) {
    if (nb.node == b) return nb.length;
  }
  fail(ErrorCode::kInvalidArgument, "edge_length: nodes are not adjacent");
}

double World::geodesic_distance(NodeId a, NodeId b) const {
  if (!contains(a) || !contains(b)) fail(ErrorCode::kNotFound, "geodesic_distance: unknown node");
  return distances_[static_cast<std::size_t>(a) * nodes_.size() + b];
}

Observation observe(const World& world, NodeId node) {
  Observation obs;
  obs.at = node;
  for (const auto& nb : world.neighbors(node)) {
    obs.visible.push_back({nb.sector, world.node(nb.node).landmarks});
  }
  obs.degree = obs.visible.size();
  return obs;
}

std::optional<NodeId> step(const World& world, NodeId node, Action action) {
  if (!world.contains(node)) fail(ErrorCode::kNotFound, "step: unknown node");
  if (action.is_stop()) return std::nullopt;
  if (auto next = world.neighbor_in_sector(node, action.sector)) return next;
  fail(ErrorCode::kInvalidArgument, "step: no neighbor in sector " + std::to_string(action.sector));
}

std::vector<NodeId> Trajectory::nodes() const {
  std::vector<NodeId> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.node);
  return out;
}

Trajectory make_trajectory(const World& world, std::span<const NodeId> path, bool terminal) {
  if (path.empty()) fail(ErrorCode::kInvalidArgument, "make_trajectory: empty path");
  Trajectory e;
  e.start = path.front();
  e.terminal = terminal;
  for (std::size_t i = 0; i < path.size(); ++i) {
    Step s;
    s.node = path[i];
    s.observation = observe(world, path[i]);
    if (i + 1 < path.size()) {
      const auto& from = world.node(path[i]);
      const auto& to = world.node(path[i + 1]);
      if (!world.adjacent(path[i], path[i + 1])) {
        fail(ErrorCode::kInvalidArgument, "make_trajectory: consecutive nodes are not adjacent");
      }
      s.action = Action::move(sector_of(to.x - from.x, to.y - from.y));
    } else if (terminal) {
      s.action = Action::stop();
    }
    e.steps.push_back(std::move(s));
  }
  return e;
}

void validate_trajectory(const World& world, const Trajectory& e) {
  if (e.steps.empty()) fail(ErrorCode::kInvalidArgument, "trajectory: no steps");
  if (e.steps.front().node != e.start) fail(ErrorCode::kInvalidArgument, "trajectory: start mismatch");
  for (std::size_t i = 0; i < e.steps.size(); ++i) {
    const auto& s = e.steps[i];
    if (!world.contains(s.node)) fail(ErrorCode::kInvalidArgument, "trajectory: unknown node");
    const bool last = i + 1 == e.steps.size();
    if (!last) {
      if (!s.action || s.action->is_stop()) fail(ErrorCode::kInvalidArgument, "trajectory: early stop");
      auto next = world.neighbor_in_sector(s.node, s.action->sector);
      if (!next || *next != e.steps[i + 1].node) {
        fail(ErrorCode::kInvalidArgument, "trajectory: move does not reach the next node");
      }
    } else if (e.terminal != (s.action && s.action->is_stop())) {
      fail(ErrorCode::kInvalidArgument, "trajectory: terminal flag disagrees with last action");
    }
  }
}

std::vector<int> headings(const Trajectory& e) {
  std::vector<int> out;
  out.reserve(e.steps.size());
  int heading = kInitialHeading;
  for (const auto& s : e.steps) {
    out.push_back(heading);
    if (s.action && !s.action->is_stop()) heading = s.action->sector;
  }
  return out;
}

double path_length(const World& world, std::span<const NodeId> path) {
  double total = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) total += world.edge_length(path[i - 1], path[i]);
  return total;
}

namespace {

bool find_simple_path(const World& world, std::vector<NodeId>& path, std::vector<bool>& visited,
                      std::size_t min_len, std::size_t max_len, std::size_t& budget) {
  if (path.size() >= min_len) return true;
  if (path.size() >= max_len || budget == 0) return false;
  for (const auto& nb : world.neighbors(path.back())) {
    if (visited[nb.node]) continue;
    if (--budget == 0) return false;
    visited[nb.node] = true;
    path.push_back(nb.node);
    if (find_simple_path(world, path, visited, min_len, max_len, budget)) return true;
    path.pop_back();
    visited[nb.node] = false;
  }
  return false;
}

}  // namespace

Task sample_task(const World& world, const TaskBounds& bounds, std::uint64_t seed, std::string task_id,
                 std::string world_id) {
  if (bounds.min_len < 1 || bounds.min_len > bounds.max_len || bounds.min_len > world.node_count()) {
    fail(ErrorCode::kInfeasible, "sample_task: infeasible bounds");
  }
  Rng rng(derive_seed(seed, 0x7461736bULL));
  const std::size_t n = world.node_count();
  const std::size_t upper = std::min(bounds.max_len, n);

  std::vector<NodeId> path;
  for (int attempt = 0; attempt < 256; ++attempt) {
    const std::size_t target = bounds.min_len + uniform_index(rng, upper - bounds.min_len + 1);
    path.assign(1, static_cast<NodeId>(uniform_index(rng, n)));
    std::vector<bool> visited(n, false);
    visited[path[0]] = true;
    while (path.size() < target) {
      // Prefer moves that take the walk farther from its start, like a goal-directed route.
      std::vector<NodeId> onward, any;
      const double here = world.geodesic_distance(path.front(), path.back());
      for (const auto& nb : world.neighbors(path.back())) {
        if (visited[nb.node]) continue;
        any.push_back(nb.node);
        if (world.geodesic_distance(path.front(), nb.node) > here) onward.push_back(nb.node);
      }
      const auto& pool = onward.empty() ? any : onward;
      if (pool.empty()) break;
      const NodeId next = pool[uniform_index(rng, pool.size())];
      visited[next] = true;
      path.push_back(next);
    }
    if (path.size() == target) break;
    path.clear();
  }

  if (path.empty()) {
    // Bounded exhaustive search before declaring the bounds infeasible.
    std::size_t budget = 1'000'000;
    for (NodeId start = 0; start < n && path.empty(); ++start) {
      std::vector<NodeId> candidate{start};
      std::vector<bool> visited(n, false);
      visited[start] = true;
      if (find_simple_path(world, candidate, visited, bounds.min_len, upper, budget)) path = candidate;
      if (budget == 0) break;
    }
    if (path.empty()) fail(ErrorCode::kInfeasible, "sample_task: no simple path within bounds");
  }

  Task task;
  task.id = std::move(task_id);
  task.world_id = std::move(world_id);
  task.intended = make_trajectory(world, path, true);
  return task;
}

}  // namespace pragnav
