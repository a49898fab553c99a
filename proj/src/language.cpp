#include "pragnav/language.hpp"

#include <algorithm>
#include <bit>
#include <sstream>

#include "pragnav/error.hpp"
#include "pragnav/rng.hpp"

namespace pragnav {

namespace {

std::uint8_t sectors_mask(std::initializer_list<int> sectors) {
  std::uint8_t m = 0;
  for (int s : sectors) m = static_cast<std::uint8_t>(m | (1u << s));
  return m;
}

constexpr std::string_view kDirSlot = "DIR";
constexpr std::string_view kLandmarkSlot = "LM";
constexpr std::string_view kSeparatorWord = "then";
constexpr std::string_view kStopWord = "stop";

}  // namespace

const std::vector<std::string>& coarse_direction_words() {
  static const std::vector<std::string> words = {"ahead", "left", "back", "right"};
  return words;
}

const std::vector<std::string>& exact_direction_words() {
  static const std::vector<std::string> words = {"straight",   "bearleft",    "squareleft", "sharpleft",
                                                 "uturn",      "sharpright",  "squareright", "bearright"};
  return words;
}

std::uint8_t direction_mask(std::string_view word) {
  if (word == "ahead") return sectors_mask({7, 0, 1});
  if (word == "left") return sectors_mask({1, 2, 3});
  if (word == "back") return sectors_mask({3, 4, 5});
  if (word == "right") return sectors_mask({5, 6, 7});
  const auto& exact = exact_direction_words();
  for (std::size_t i = 0; i < exact.size(); ++i) {
    if (exact[i] == word) return static_cast<std::uint8_t>(1u << i);
  }
  return 0;
}

Vocabulary::Vocabulary(std::vector<std::pair<std::string, TokenClass>> entries) {
  for (auto& [word, cls] : entries) {
    if (word.empty() || word.find(' ') != std::string::npos) {
      fail(ErrorCode::kInvalidArgument, "vocabulary: invalid word '" + word + "'");
    }
    if (index_.count(word)) fail(ErrorCode::kInvalidArgument, "vocabulary: duplicate word '" + word + "'");
    const auto id = static_cast<TokenId>(words_.size());
    const std::uint8_t m = cls == TokenClass::kDirection ? direction_mask(word) : 0;
    if (cls == TokenClass::kDirection && m == 0) {
      fail(ErrorCode::kInvalidArgument, "vocabulary: unknown direction word '" + word + "'");
    }
    index_.emplace(word, id);
    class_index_.push_back(members_[static_cast<int>(cls)].size());
    members_[static_cast<int>(cls)].push_back(id);
    words_.push_back(std::move(word));
    classes_.push_back(cls);
    masks_.push_back(m);
  }
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string to_text(const Vocabulary& vocab, const Instruction& u) {
  std::string out;
  for (std::size_t i = 0; i < u.tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += vocab.word(u.tokens[i]);
  }
  return out;
}

Instruction encode(const Vocabulary& vocab, std::string_view text) {
  Instruction u;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) {
    auto id = vocab.find(word);
    if (!id) fail(ErrorCode::kInvalidArgument, "out-of-vocabulary token '" + word + "'");
    u.tokens.push_back(*id);
  }
  return u;
}

Instruction encode_lenient(const Vocabulary& vocab, std::string_view text) {
  Instruction u;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) {
    if (auto id = vocab.find(word)) u.tokens.push_back(*id);
  }
  return u;
}

std::vector<Clause> parse_clauses(const Vocabulary& vocab, const Instruction& u) {
  std::vector<Clause> clauses;
  Clause current;
  auto flush = [&] {
    if (current.direction || current.landmark) clauses.push_back(current);
    current = {};
  };
  for (TokenId t : u.tokens) {
    if (t >= vocab.size()) continue;
    switch (vocab.token_class(t)) {
      case TokenClass::kSeparator:
        flush();
        break;
      case TokenClass::kDirection:
        if (!current.direction) current.direction = t;
        break;
      case TokenClass::kLandmark:
        if (!current.landmark) current.landmark = t;
        break;
      case TokenClass::kFunction:
        break;
    }
  }
  flush();
  return clauses;
}

std::vector<NodeId> clause_candidates(const World& world, const Vocabulary& vocab, NodeId at, int heading,
                                      const Clause& clause) {
  const auto neighbors = world.neighbors(at);
  auto dir_ok = [&](const Neighbor& nb) {
    if (!clause.direction) return true;
    return ((vocab.mask(*clause.direction) >> relative_sector(nb.sector, heading)) & 1u) != 0;
  };
  auto lm_ok = [&](const Neighbor& nb) {
    if (!clause.landmark) return true;
    const auto& lms = world.node(nb.node).landmarks;
    return std::find(lms.begin(), lms.end(), vocab.word(*clause.landmark)) != lms.end();
  };
  std::vector<NodeId> out;
  auto collect = [&](auto&& pred) {
    out.clear();
    for (const auto& nb : neighbors) {
      if (pred(nb)) out.push_back(nb.node);
    }
    return !out.empty();
  };
  if (collect([&](const Neighbor& nb) { return dir_ok(nb) && lm_ok(nb); })) return out;
  if (clause.landmark && collect(lm_ok)) return out;
  if (clause.direction && collect(dir_ok)) return out;
  collect([](const Neighbor&) { return true; });
  return out;
}

Grammar::Grammar(GrammarConfig config) : config_(std::move(config)) {
  if (config_.templates.empty()) fail(ErrorCode::kInvalidArgument, "grammar: no templates");
  if (!config_.coarse_directions && !config_.exact_directions) {
    fail(ErrorCode::kInvalidArgument, "grammar: no direction words enabled");
  }
  std::vector<std::pair<std::string, TokenClass>> entries;
  auto has = [&](std::string_view w) {
    return std::any_of(entries.begin(), entries.end(), [&](const auto& e) { return e.first == w; });
  };
  for (const auto& t : config_.templates) {
    if (!(t.weight > 0.0)) fail(ErrorCode::kInvalidArgument, "grammar: template weight must be positive");
    if (t.pattern.empty()) fail(ErrorCode::kInvalidArgument, "grammar: empty template");
    for (const auto& w : t.pattern) {
      if (w == kDirSlot || w == kLandmarkSlot || w == kSeparatorWord) continue;
      if (!has(w)) entries.emplace_back(w, TokenClass::kFunction);
    }
  }
  if (!has(kStopWord)) entries.emplace_back(std::string(kStopWord), TokenClass::kFunction);
  entries.emplace_back(std::string(kSeparatorWord), TokenClass::kSeparator);
  if (config_.coarse_directions) {
    for (const auto& w : coarse_direction_words()) entries.emplace_back(w, TokenClass::kDirection);
  }
  if (config_.exact_directions) {
    for (const auto& w : exact_direction_words()) entries.emplace_back(w, TokenClass::kDirection);
  }
  for (const auto& w : landmark_catalog(config_.catalog_size)) entries.emplace_back(w, TokenClass::kLandmark);
  vocab_ = Vocabulary(std::move(entries));
  separator_ = *vocab_.find(kSeparatorWord);
  stop_word_ = *vocab_.find(kStopWord);
}

std::size_t Grammar::max_moves() const {
  std::size_t longest = 0;
  for (const auto& t : config_.templates) longest = std::max(longest, t.pattern.size());
  return (config_.max_tokens + 1) / (longest + 1);
}

namespace {

struct Realization {
  std::optional<TokenId> direction;
  std::optional<TokenId> landmark;
};

}  // namespace

Instruction reference_speak(const Grammar& grammar, const World& world, const Task& task, std::uint64_t seed) {
  const auto& e = task.intended;
  validate_trajectory(world, e);
  const std::size_t moves = e.move_count();
  if (moves > grammar.max_moves()) fail(ErrorCode::kInvalidArgument, "reference_speak: trajectory too long for grammar");

  const auto& vocab = grammar.vocabulary();
  const auto& cfg = grammar.config();
  Instruction u;
  if (moves == 0) {
    u.tokens.push_back(grammar.stop_word());
    return u;
  }

  Rng rng(derive_seed(seed, 0x72656673ULL));
  const auto heads = headings(e);
  std::vector<TokenId> coarse, exact;
  for (TokenId t : vocab.members(TokenClass::kDirection)) {
    (std::popcount(vocab.mask(t)) == 1 ? exact : coarse).push_back(t);
  }
  const auto& primary = coarse.empty() ? exact : coarse;

  for (std::size_t j = 0; j < moves; ++j) {
    const NodeId at = e.steps[j].node;
    const NodeId target = e.steps[j + 1].node;
    const int rel = relative_sector(e.steps[j].action->sector, heads[j]);
    std::vector<TokenId> target_landmarks;
    for (const auto& name : world.node(target).landmarks) {
      if (auto id = vocab.find(name)) target_landmarks.push_back(*id);
    }

    auto feasible_for = [&](const Template& t, const std::vector<TokenId>& dir_words) {
      const bool wants_dir = std::find(t.pattern.begin(), t.pattern.end(), kDirSlot) != t.pattern.end();
      const bool wants_lm = std::find(t.pattern.begin(), t.pattern.end(), kLandmarkSlot) != t.pattern.end();
      std::vector<std::optional<TokenId>> dirs, lms;
      if (wants_dir) {
        for (TokenId d : dir_words) {
          if ((vocab.mask(d) >> rel) & 1u) dirs.emplace_back(d);
        }
      } else {
        dirs.emplace_back(std::nullopt);
      }
      if (wants_lm) {
        for (TokenId l : target_landmarks) lms.emplace_back(l);
      } else {
        lms.emplace_back(std::nullopt);
      }
      std::vector<Realization> out;
      for (auto d : dirs) {
        for (auto l : lms) {
          const auto cands = clause_candidates(world, vocab, at, heads[j], Clause{d, l});
          if (cands.size() == 1 && cands[0] == target) out.push_back({d, l});
        }
      }
      return out;
    };

    std::vector<std::vector<Realization>> options(cfg.templates.size());
    bool any = false;
    for (std::size_t t = 0; t < cfg.templates.size(); ++t) {
      options[t] = feasible_for(cfg.templates[t], primary);
      any = any || !options[t].empty();
    }
    if (!any && &primary != &exact && !exact.empty()) {
      for (std::size_t t = 0; t < cfg.templates.size(); ++t) {
        options[t] = feasible_for(cfg.templates[t], exact);
        any = any || !options[t].empty();
      }
    }
    if (!any) fail(ErrorCode::kInfeasible, "reference_speak: no unambiguous description for a move");

    std::vector<double> weights(cfg.templates.size());
    for (std::size_t t = 0; t < weights.size(); ++t) weights[t] = options[t].empty() ? 0.0 : cfg.templates[t].weight;
    const std::size_t t = sample_discrete(rng, weights);
    const auto& chosen = options[t][uniform_index(rng, options[t].size())];

    if (j > 0) u.tokens.push_back(grammar.separator());
    for (const auto& w : cfg.templates[t].pattern) {
      if (w == kDirSlot) {
        u.tokens.push_back(*chosen.direction);
      } else if (w == kLandmarkSlot) {
        u.tokens.push_back(*chosen.landmark);
      } else {
        u.tokens.push_back(*vocab.find(w));
      }
    }
  }
  return u;
}

double Follower::exact_probability(const World&, const Instruction&, const Trajectory&) const {
  fail(ErrorCode::kUnsupported, "follower '" + name() + "' has no exact likelihood");
}

GroundTruthListener::GroundTruthListener(Vocabulary vocab, GroundTruthConfig config, std::string name)
    : vocab_(std::move(vocab)), config_(config), name_(std::move(name)) {
  auto bad = [](double p) { return !(p >= 0.0 && p <= 1.0); };
  if (bad(config_.eps_parse) || bad(config_.eps_act)) {
    fail(ErrorCode::kInvalidArgument, "ground-truth listener: noise must lie in [0,1]");
  }
}

std::size_t GroundTruthListener::max_steps(std::size_t clause_count) const {
  return config_.max_steps.value_or(2 * clause_count + 5);
}

std::vector<std::pair<NodeId, double>> GroundTruthListener::move_distribution(const World& world, NodeId at,
                                                                              int heading,
                                                                              const Clause& clause) const {
  const auto neighbors = world.neighbors(at);
  const auto cands = clause_candidates(world, vocab_, at, heading, clause);
  const double uniform = 1.0 / static_cast<double>(neighbors.size());
  const double intended = 1.0 / static_cast<double>(cands.size());
  // A misread clause and a slipped step both land on a uniform neighbor.
  const double keep = (1.0 - config_.eps_act) * (1.0 - config_.eps_parse);
  const double noise = 1.0 - keep;
  std::vector<std::pair<NodeId, double>> out;
  for (const auto& nb : neighbors) {
    const bool hit = std::find(cands.begin(), cands.end(), nb.node) != cands.end();
    out.emplace_back(nb.node, keep * (hit ? intended : 0.0) + noise * uniform);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

int sector_towards(const World& world, NodeId from, NodeId to) {
  for (const auto& nb : world.neighbors(from)) {
    if (nb.node == to) return nb.sector;
  }
  fail(ErrorCode::kInvalidArgument, "nodes are not adjacent");
}

}  // namespace

Trajectory GroundTruthListener::follow(const World& world, const Instruction& u, NodeId start,
                                       std::uint64_t seed) const {
  if (!world.contains(start)) fail(ErrorCode::kNotFound, "follow: unknown start node");
  const auto clauses = parse_clauses(vocab_, u);
  const std::size_t limit = std::min(clauses.size(), max_steps(clauses.size()));
  Rng rng(derive_seed(seed, 0x67746c73ULL));
  std::vector<NodeId> path{start};
  int heading = kInitialHeading;
  std::vector<double> weights;
  for (std::size_t c = 0; c < limit; ++c) {
    const auto dist = move_distribution(world, path.back(), heading, clauses[c]);
    weights.clear();
    for (const auto& [node, p] : dist) weights.push_back(p);
    const NodeId next = dist[sample_discrete(rng, weights)].first;
    heading = sector_towards(world, path.back(), next);
    path.push_back(next);
  }
  return make_trajectory(world, path, true);
}

double GroundTruthListener::exact_probability(const World& world, const Instruction& u, const Trajectory& e) const {
  validate_trajectory(world, e);
  if (!e.terminal) return 0.0;
  const auto clauses = parse_clauses(vocab_, u);
  const std::size_t moves = std::min(clauses.size(), max_steps(clauses.size()));
  if (e.move_count() != moves) return 0.0;
  const auto heads = headings(e);
  double p = 1.0;
  for (std::size_t c = 0; c < moves && p > 0.0; ++c) {
    const auto dist = move_distribution(world, e.steps[c].node, heads[c], clauses[c]);
    const NodeId next = e.steps[c + 1].node;
    double q = 0.0;
    for (const auto& [node, prob] : dist) {
      if (node == next) q = prob;
    }
    p *= q;
  }
  return p;
}

Trajectory UniformRandomFollower::follow(const World& world, const Instruction&, NodeId start,
                                         std::uint64_t seed) const {
  Rng rng(derive_seed(seed, 0x756e6966ULL));
  std::vector<NodeId> path{start};
  while (path.size() <= max_steps_) {
    const auto nbs = world.neighbors(path.back());
    const std::size_t pick = uniform_index(rng, nbs.size() + 1);
    if (pick == nbs.size()) break;
    path.push_back(nbs[pick].node);
  }
  return make_trajectory(world, path, true);
}

}  // namespace pragnav
