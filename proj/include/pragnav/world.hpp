#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pragnav {

using NodeId = std::uint32_t;

inline constexpr int kSectorCount = 8;

/// Sector index (0..7, counter-clockwise from +x, 45 degrees each) of the
/// direction (dx, dy).
int sector_of(double dx, double dy);

/// Relative sector of `sector` seen from `heading`; 0 is straight ahead,
/// 2 is a left turn, 6 a right turn.
inline int relative_sector(int sector, int heading) {
  return ((sector - heading) % kSectorCount + kSectorCount) % kSectorCount;
}

/// Heading an agent has before its first move.
inline constexpr int kInitialHeading = 0;

struct Node {
  NodeId id = 0;
  double x = 0.0;
  double y = 0.0;
  std::vector<std::string> landmarks;
};

struct Neighbor {
  NodeId node = 0;
  int sector = 0;
  double length = 0.0;
};

struct WorldParams {
  std::uint32_t node_count = 40;
  std::uint32_t catalog_size = 12;
  std::uint64_t seed = 0;
};

/// The first `size` landmark symbols of the fixed catalog.
std::vector<std::string> landmark_catalog(std::uint32_t size);

/// Immutable navigation graph. Construction validates every invariant and
/// precomputes all-pairs geodesic distances.
class World {
 public:
  static World generate(const WorldParams& params);

  World(std::uint64_t seed, std::vector<Node> nodes, std::vector<std::pair<NodeId, NodeId>> edges);

  std::uint64_t seed() const { return seed_; }
  std::size_t node_count() const { return nodes_.size(); }
  bool contains(NodeId id) const { return id < nodes_.size(); }
  const Node& node(NodeId id) const;
  std::span<const Node> nodes() const { return nodes_; }
  const std::vector<std::pair<NodeId, NodeId>>& edges() const { return edges_; }

  /// Neighbors of `id` ordered by sector.
  std::span<const Neighbor> neighbors(NodeId id) const;
  std::optional<NodeId> neighbor_in_sector(NodeId id, int sector) const;
  bool adjacent(NodeId a, NodeId b) const;
  double edge_length(NodeId a, NodeId b) const;
  double geodesic_distance(NodeId a, NodeId b) const;
  double mean_edge_length() const { return mean_edge_length_; }

 private:
  std::uint64_t seed_;
  std::vector<Node> nodes_;
  std::vector<std::pair<NodeId, NodeId>> edges_;
  std::vector<std::vector<Neighbor>> adjacency_;
  std::vector<double> distances_;
  double mean_edge_length_ = 0.0;
};

struct SectorView {
  int sector = 0;
  std::vector<std::string> landmarks;
  auto operator<=>(const SectorView&) const = default;
};

struct Observation {
  NodeId at = 0;
  std::vector<SectorView> visible;
  std::size_t degree = 0;
  bool operator==(const Observation&) const = default;
};

Observation observe(const World& world, NodeId node);

struct Action {
  enum class Kind : std::uint8_t { kMove, kStop };
  Kind kind = Kind::kStop;
  int sector = 0;

  static Action move(int sector) { return {Kind::kMove, sector}; }
  static Action stop() { return {Kind::kStop, 0}; }
  bool is_stop() const { return kind == Kind::kStop; }
  bool operator==(const Action&) const = default;
};

/// Applies `action` at `node`. Returns the successor node, or nullopt when the
/// action is Stop (the episode is terminal). Throws on a move into an empty sector.
std::optional<NodeId> step(const World& world, NodeId node, Action action);

struct Step {
  NodeId node = 0;
  Observation observation;
  std::optional<Action> action;  // empty only on the last step of a non-terminal trajectory
  bool operator==(const Step&) const = default;
};

struct Trajectory {
  NodeId start = 0;
  std::vector<Step> steps;
  bool terminal = false;

  std::vector<NodeId> nodes() const;
  std::size_t move_count() const { return steps.empty() ? 0 : steps.size() - 1; }
  NodeId final_node() const { return steps.back().node; }
  bool operator==(const Trajectory&) const = default;
};

/// Builds a trajectory along `path`; every consecutive pair must be adjacent.
Trajectory make_trajectory(const World& world, std::span<const NodeId> path, bool terminal = true);

/// Throws kInvalidArgument unless `e` satisfies the trajectory invariants in `world`.
void validate_trajectory(const World& world, const Trajectory& e);

/// Heading after each move of `e`; element i is the heading when deciding at step i.
std::vector<int> headings(const Trajectory& e);

double path_length(const World& world, std::span<const NodeId> path);

struct Task {
  std::string id;
  std::string world_id;
  Trajectory intended;
};

struct TaskBounds {
  std::size_t min_len = 4;
  std::size_t max_len = 7;
};

/// Samples a simple path whose node count lies in `bounds`, ending with Stop.
Task sample_task(const World& world, const TaskBounds& bounds, std::uint64_t seed,
                 std::string task_id = {}, std::string world_id = {});

}  // namespace pragnav
