#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pragnav/language.hpp"

namespace pragnav {

struct ListenerConfig {
  double learning_rate = 0.5;
  std::size_t epochs = 6;
  double l2 = 1e-4;
  double init_scale = 0.5;
  std::optional<std::size_t> max_steps;  // default: 2 * clauses + 5
  bool operator==(const ListenerConfig&) const = default;
};

struct ListenerExample {
  std::shared_ptr<const World> world;
  Instruction instruction;
  Trajectory intended;
};

/// Log-linear policy over {Move(sector), Stop}. Each action is scored from the
/// clause under the cursor (direction word x relative sector, landmark match),
/// whether the clauses are used up, and the node degree. The cursor advances
/// by one clause per move.
class ListenerModel final : public Follower {
 public:
  ListenerModel(Vocabulary vocab, ListenerConfig config, std::vector<double> weights, std::string name = "listener");

  static std::size_t parameter_count(const Vocabulary& vocab);

  std::string name() const override { return name_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const ListenerConfig& config() const { return config_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t max_steps(std::size_t clause_count) const;

  /// pi(a | u, history) at a decision point after `moves` moves. Moves are
  /// listed in sector order, Stop last.
  std::vector<std::pair<Action, double>> action_distribution(const World& world, std::span<const Clause> clauses,
                                                             std::size_t moves, NodeId at, int heading) const;

  Trajectory follow(const World& world, const Instruction& u, NodeId start, std::uint64_t seed) const override;
  bool supports_exact() const override { return true; }
  double exact_probability(const World& world, const Instruction& u, const Trajectory& e) const override;

  bool operator==(const ListenerModel& o) const {
    return vocab_ == o.vocab_ && config_ == o.config_ && weights_ == o.weights_ && name_ == o.name_;
  }

 private:
  Vocabulary vocab_;
  ListenerConfig config_;
  std::vector<double> weights_;
  std::string name_;
};

ListenerModel train_listener(const Vocabulary& vocab, std::span<const ListenerExample> corpus,
                             const ListenerConfig& config, std::uint64_t seed, std::string name = "listener");

/// K listeners, the k-th trained on floor(fraction * n) examples drawn without
/// replacement, with seeds derived from (seed, k).
std::vector<ListenerModel> train_listener_ensemble(const Vocabulary& vocab, std::span<const ListenerExample> corpus,
                                                   std::size_t k, double subset_fraction,
                                                   const ListenerConfig& config, std::uint64_t seed);

inline Trajectory listener_follow(const ListenerModel& m, const World& world, const Instruction& u, NodeId start,
                                  std::uint64_t seed) {
  return m.follow(world, u, start, seed);
}
inline double listener_exec_prob(const ListenerModel& m, const World& world, const Instruction& u,
                                 const Trajectory& e) {
  return m.exact_probability(world, u, e);
}

}  // namespace pragnav
