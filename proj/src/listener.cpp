#include "pragnav/listener.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pragnav/error.hpp"
#include "pragnav/rng.hpp"

namespace pragnav {

namespace {

constexpr std::size_t kMaxDegreeFeature = 8;

// Weight layout.
struct Layout {
  std::size_t dirs, lms;
  std::size_t dir_rel() const { return 0; }
  std::size_t nodir_rel() const { return dirs * kSectorCount; }
  std::size_t lm_match() const { return nodir_rel() + kSectorCount; }
  std::size_t lm_miss() const { return lm_match() + lms; }
  std::size_t move_done() const { return lm_miss() + 1; }
  std::size_t stop_pending() const { return move_done() + 1; }
  std::size_t stop_done() const { return stop_pending() + 1; }
  std::size_t stop_degree() const { return stop_done() + 1; }
  std::size_t size() const { return stop_degree() + kMaxDegreeFeature + 1; }
};

Layout layout_of(const Vocabulary& vocab) {
  return {vocab.members(TokenClass::kDirection).size(), vocab.members(TokenClass::kLandmark).size()};
}

using Features = std::vector<std::uint32_t>;

// Active features of every action at one decision point; moves in sector order, Stop last.
std::vector<Features> decision_features(const Vocabulary& vocab, const Layout& lay, const World& world,
                                        std::span<const Clause> clauses, std::size_t moves, NodeId at, int heading) {
  const auto nbs = world.neighbors(at);
  std::vector<Features> out;
  out.reserve(nbs.size() + 1);
  const bool pending = moves < clauses.size();
  for (const auto& nb : nbs) {
    Features f;
    const int rel = relative_sector(nb.sector, heading);
    if (pending) {
      const auto& c = clauses[moves];
      if (c.direction) {
        f.push_back(static_cast<std::uint32_t>(lay.dir_rel() + vocab.class_index(*c.direction) * kSectorCount + rel));
      } else {
        f.push_back(static_cast<std::uint32_t>(lay.nodir_rel() + rel));
      }
      if (c.landmark) {
        const auto& names = world.node(nb.node).landmarks;
        if (std::find(names.begin(), names.end(), vocab.word(*c.landmark)) != names.end()) {
          f.push_back(static_cast<std::uint32_t>(lay.lm_match() + vocab.class_index(*c.landmark)));
        } else {
          f.push_back(static_cast<std::uint32_t>(lay.lm_miss()));
        }
      }
    } else {
      f.push_back(static_cast<std::uint32_t>(lay.move_done()));
    }
    out.push_back(std::move(f));
  }
  Features stop;
  stop.push_back(static_cast<std::uint32_t>(pending ? lay.stop_pending() : lay.stop_done()));
  stop.push_back(static_cast<std::uint32_t>(lay.stop_degree() + std::min(nbs.size(), kMaxDegreeFeature)));
  out.push_back(std::move(stop));
  return out;
}

void softmax(const std::vector<double>& w, const std::vector<Features>& feats, std::vector<double>& out) {
  out.resize(feats.size());
  double hi = -INFINITY;
  for (std::size_t a = 0; a < feats.size(); ++a) {
    double s = 0.0;
    for (auto i : feats[a]) s += w[i];
    out[a] = s;
    hi = std::max(hi, s);
  }
  double z = 0.0;
  for (double& s : out) {
    s = std::exp(s - hi);
    z += s;
  }
  for (double& s : out) s /= z;
}

}  // namespace

ListenerModel::ListenerModel(Vocabulary vocab, ListenerConfig config, std::vector<double> weights, std::string name)
    : vocab_(std::move(vocab)), config_(config), weights_(std::move(weights)), name_(std::move(name)) {
  if (weights_.size() != parameter_count(vocab_)) fail(ErrorCode::kInvalidArgument, "listener: weight count mismatch");
  for (double w : weights_) {
    if (!std::isfinite(w)) fail(ErrorCode::kInvalidArgument, "listener: non-finite weight");
  }
}

std::size_t ListenerModel::parameter_count(const Vocabulary& vocab) { return layout_of(vocab).size(); }

std::size_t ListenerModel::max_steps(std::size_t clause_count) const {
  return config_.max_steps.value_or(2 * clause_count + 5);
}

std::vector<std::pair<Action, double>> ListenerModel::action_distribution(const World& world,
                                                                          std::span<const Clause> clauses,
                                                                          std::size_t moves, NodeId at,
                                                                          int heading) const {
  std::vector<std::pair<Action, double>> out;
  const auto nbs = world.neighbors(at);
  if (moves >= max_steps(clauses.size())) {
    for (const auto& nb : nbs) out.emplace_back(Action::move(nb.sector), 0.0);
    out.emplace_back(Action::stop(), 1.0);
    return out;
  }
  const auto feats = decision_features(vocab_, layout_of(vocab_), world, clauses, moves, at, heading);
  std::vector<double> p;
  softmax(weights_, feats, p);
  for (std::size_t i = 0; i < nbs.size(); ++i) out.emplace_back(Action::move(nbs[i].sector), p[i]);
  out.emplace_back(Action::stop(), p.back());
  return out;
}

Trajectory ListenerModel::follow(const World& world, const Instruction& u, NodeId start, std::uint64_t seed) const {
  if (!world.contains(start)) fail(ErrorCode::kNotFound, "follow: unknown start node");
  const auto clauses = parse_clauses(vocab_, u);
  Rng rng(derive_seed(seed, 0x6c69736eULL));
  std::vector<NodeId> path{start};
  int heading = kInitialHeading;
  std::vector<double> weights;
  while (true) {
    const auto dist = action_distribution(world, clauses, path.size() - 1, path.back(), heading);
    weights.clear();
    for (const auto& [a, p] : dist) weights.push_back(p);
    const Action a = dist[sample_discrete(rng, weights)].first;
    if (a.is_stop()) break;
    heading = a.sector;
    path.push_back(*step(world, path.back(), a));
  }
  return make_trajectory(world, path, true);
}

double ListenerModel::exact_probability(const World& world, const Instruction& u, const Trajectory& e) const {
  validate_trajectory(world, e);
  if (!e.terminal) return 0.0;
  const auto clauses = parse_clauses(vocab_, u);
  const auto heads = headings(e);
  double p = 1.0;
  for (std::size_t i = 0; i < e.steps.size() && p > 0.0; ++i) {
    const auto dist = action_distribution(world, clauses, i, e.steps[i].node, heads[i]);
    const Action want = *e.steps[i].action;
    double q = 0.0;
    for (const auto& [a, prob] : dist) {
      if (a == want) q = prob;
    }
    p *= q;
  }
  return p;
}

namespace {

struct Decision {
  std::vector<Features> actions;
  std::uint32_t gold = 0;
};

std::vector<Decision> decisions_of(const Vocabulary& vocab, const Layout& lay, const ListenerExample& ex) {
  if (!ex.world) fail(ErrorCode::kInvalidArgument, "train_listener: example without world");
  validate_trajectory(*ex.world, ex.intended);
  const auto clauses = parse_clauses(vocab, ex.instruction);
  const auto heads = headings(ex.intended);
  std::vector<Decision> out;
  for (std::size_t i = 0; i < ex.intended.steps.size(); ++i) {
    const auto& s = ex.intended.steps[i];
    if (!s.action) break;
    Decision d;
    d.actions = decision_features(vocab, lay, *ex.world, clauses, i, s.node, heads[i]);
    const auto nbs = ex.world->neighbors(s.node);
    if (s.action->is_stop()) {
      d.gold = static_cast<std::uint32_t>(nbs.size());
    } else {
      for (std::size_t k = 0; k < nbs.size(); ++k) {
        if (nbs[k].sector == s.action->sector) d.gold = static_cast<std::uint32_t>(k);
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

ListenerModel fit(const Vocabulary& vocab, const std::vector<std::vector<Decision>>& per_example,
                  std::span<const std::size_t> subset, const ListenerConfig& config, std::uint64_t init_seed,
                  std::uint64_t order_seed, std::string name) {
  const Layout lay = layout_of(vocab);
  std::vector<double> w(lay.size());
  Rng init(init_seed);
  for (double& x : w) x = config.init_scale * (2.0 * uniform01(init) - 1.0);

  std::vector<const Decision*> pool;
  for (std::size_t i : subset) {
    for (const auto& d : per_example[i]) pool.push_back(&d);
  }
  Rng order(order_seed);
  std::vector<double> p;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with the portable index helper.
    for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[uniform_index(order, i)]);
    const double lr = config.learning_rate / (1.0 + static_cast<double>(epoch));
    for (const Decision* d : pool) {
      softmax(w, d->actions, p);
      if (config.l2 > 0.0) {
        const double decay = 1.0 - lr * config.l2;
        for (double& x : w) x *= decay;
      }
      for (std::size_t a = 0; a < d->actions.size(); ++a) {
        const double g = (a == d->gold ? 1.0 : 0.0) - p[a];
        for (auto f : d->actions[a]) w[f] += lr * g;
      }
    }
  }
  return ListenerModel(vocab, config, std::move(w), std::move(name));
}

}  // namespace

ListenerModel train_listener(const Vocabulary& vocab, std::span<const ListenerExample> corpus,
                             const ListenerConfig& config, std::uint64_t seed, std::string name) {
  auto members = train_listener_ensemble(vocab, corpus, 1, 1.0, config, seed);
  ListenerModel m = std::move(members.front());
  return ListenerModel(m.vocabulary(), m.config(), m.weights(), std::move(name));
}

std::vector<ListenerModel> train_listener_ensemble(const Vocabulary& vocab, std::span<const ListenerExample> corpus,
                                                   std::size_t k, double subset_fraction,
                                                   const ListenerConfig& config, std::uint64_t seed) {
  if (k < 1) fail(ErrorCode::kInvalidArgument, "train_listener_ensemble: K must be at least 1");
  if (!(subset_fraction > 0.0 && subset_fraction <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "train_listener_ensemble: subset fraction must lie in (0,1]");
  }
  if (!(config.learning_rate > 0.0) || !(config.l2 >= 0.0) || !(config.init_scale >= 0.0)) {
    fail(ErrorCode::kInvalidArgument, "train_listener_ensemble: invalid hyperparameters");
  }
  const auto take = static_cast<std::size_t>(std::floor(subset_fraction * static_cast<double>(corpus.size())));
  if (take == 0) fail(ErrorCode::kInvalidArgument, "train_listener_ensemble: subset too small to train");

  const Layout lay = layout_of(vocab);
  std::vector<std::vector<Decision>> per_example;
  per_example.reserve(corpus.size());
  for (const auto& ex : corpus) per_example.push_back(decisions_of(vocab, lay, ex));

  std::vector<ListenerModel> out;
  out.reserve(k);
  for (std::size_t m = 0; m < k; ++m) {
    std::vector<std::size_t> idx(corpus.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng pick(derive_seed(seed, m, 1));
    for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + uniform_index(pick, idx.size() - i)]);
    idx.resize(take);
    std::sort(idx.begin(), idx.end());
    out.push_back(fit(vocab, per_example, idx, config, derive_seed(seed, m, 2), derive_seed(seed, m, 3),
                      "listener-" + std::to_string(m)));
  }
  return out;
}

}  // namespace pragnav
