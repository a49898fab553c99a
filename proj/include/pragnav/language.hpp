#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pragnav/world.hpp"

namespace pragnav {

using TokenId = std::uint32_t;

enum class TokenClass : std::uint8_t { kFunction, kSeparator, kDirection, kLandmark };

/// Set of relative sectors a direction word denotes (bit i = relative sector i).
/// Returns 0 for words that are not direction words.
std::uint8_t direction_mask(std::string_view word);

/// Coarse direction words (each spans three sectors) and exact ones (one sector each).
const std::vector<std::string>& coarse_direction_words();
const std::vector<std::string>& exact_direction_words();

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::pair<std::string, TokenClass>> entries);

  std::size_t size() const { return words_.size(); }
  const std::string& word(TokenId id) const { return words_.at(id); }
  TokenClass token_class(TokenId id) const { return classes_.at(id); }
  std::uint8_t mask(TokenId id) const { return masks_.at(id); }
  std::optional<TokenId> find(std::string_view word) const;
  const std::vector<TokenId>& members(TokenClass cls) const { return members_[static_cast<int>(cls)]; }
  /// Position of `id` within its class member list.
  std::size_t class_index(TokenId id) const { return class_index_.at(id); }

  const std::vector<std::string>& words() const { return words_; }
  const std::vector<TokenClass>& classes() const { return classes_; }

  bool operator==(const Vocabulary& other) const { return words_ == other.words_ && classes_ == other.classes_; }

 private:
  std::vector<std::string> words_;
  std::vector<TokenClass> classes_;
  std::vector<std::uint8_t> masks_;
  std::vector<std::size_t> class_index_;
  std::map<std::string, TokenId, std::less<>> index_;
  std::vector<TokenId> members_[4];
};

/// A token sequence. Ordering is lexicographic by token id and is the final
/// tie-break wherever instructions are ranked.
struct Instruction {
  std::vector<TokenId> tokens;
  auto operator<=>(const Instruction&) const = default;
  bool empty() const { return tokens.empty(); }
  std::size_t size() const { return tokens.size(); }
};

/// Space-joined words.
std::string to_text(const Vocabulary& vocab, const Instruction& u);
/// Strict encoding; throws kInvalidArgument on an out-of-vocabulary word.
Instruction encode(const Vocabulary& vocab, std::string_view text);
/// Lenient encoding: unknown words are dropped.
Instruction encode_lenient(const Vocabulary& vocab, std::string_view text);

struct Clause {
  std::optional<TokenId> direction;
  std::optional<TokenId> landmark;
  bool operator==(const Clause&) const = default;
};

/// Splits on separators and keeps the first direction and first landmark word
/// of each clause. Other tokens are skipped; clauses with neither are dropped.
std::vector<Clause> parse_clauses(const Vocabulary& vocab, const Instruction& u);

/// Neighbors of `at` a listener considers for `clause`. Matching falls back
/// from direction-and-landmark, to landmark, to direction, to every neighbor.
std::vector<NodeId> clause_candidates(const World& world, const Vocabulary& vocab, NodeId at, int heading,
                                      const Clause& clause);

struct Template {
  std::string name;
  std::vector<std::string> pattern;  // literal words plus the DIR / LM slots
  double weight = 1.0;
};

struct GrammarConfig {
  std::uint32_t catalog_size = 12;
  std::vector<Template> templates = {
      {"directed", {"go", "DIR", "to", "the", "LM"}, 0.45},
      {"landmark", {"walk", "to", "the", "LM"}, 0.55},
  };
  bool coarse_directions = true;
  bool exact_directions = true;
  std::size_t max_tokens = 40;
};

class Grammar {
 public:
  explicit Grammar(GrammarConfig config = {});

  const GrammarConfig& config() const { return config_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  TokenId separator() const { return separator_; }
  TokenId stop_word() const { return stop_word_; }
  /// Longest trajectory (in moves) every paraphrase of which fits in max_tokens.
  std::size_t max_moves() const;

 private:
  GrammarConfig config_;
  Vocabulary vocab_;
  TokenId separator_ = 0;
  TokenId stop_word_ = 0;
};

/// Simulated human annotator: describes each move with a paraphrase that the
/// ground-truth listener resolves to exactly the intended neighbor.
Instruction reference_speak(const Grammar& grammar, const World& world, const Task& task, std::uint64_t seed);

/// Anything that turns an instruction into a trajectory.
class Follower {
 public:
  virtual ~Follower() = default;
  virtual std::string name() const = 0;
  virtual Trajectory follow(const World& world, const Instruction& u, NodeId start, std::uint64_t seed) const = 0;
  virtual bool supports_exact() const { return false; }
  /// Exact probability of generating `e` given `u`.
  virtual double exact_probability(const World& world, const Instruction& u, const Trajectory& e) const;
};

struct GroundTruthConfig {
  double eps_parse = 0.0;  // per-clause misread probability
  double eps_act = 0.0;    // per-step wrong-move probability
  std::optional<std::size_t> max_steps;  // default: 2 * clauses + 5
};

/// Scripted stand-in for the human listener. Each clause yields exactly one
/// move; the walk stops once the clauses run out.
class GroundTruthListener final : public Follower {
 public:
  GroundTruthListener(Vocabulary vocab, GroundTruthConfig config, std::string name = "ground_truth");

  std::string name() const override { return name_; }
  const GroundTruthConfig& config() const { return config_; }
  const Vocabulary& vocabulary() const { return vocab_; }

  /// Distribution over next nodes for one clause, sorted by node id.
  std::vector<std::pair<NodeId, double>> move_distribution(const World& world, NodeId at, int heading,
                                                           const Clause& clause) const;
  std::size_t max_steps(std::size_t clause_count) const;

  Trajectory follow(const World& world, const Instruction& u, NodeId start, std::uint64_t seed) const override;
  bool supports_exact() const override { return true; }
  double exact_probability(const World& world, const Instruction& u, const Trajectory& e) const override;

 private:
  Vocabulary vocab_;
  GroundTruthConfig config_;
  std::string name_;
};

inline Trajectory reference_follow(const GroundTruthListener& listener, const World& world, const Instruction& u,
                                   NodeId start, std::uint64_t seed) {
  return listener.follow(world, u, start, seed);
}

inline double likelihood_under_gt(const GroundTruthListener& listener, const World& world, const Instruction& u,
                                  const Trajectory& e) {
  return listener.exact_probability(world, u, e);
}

/// Moves uniformly at random (Stop included) until it stops or hits max_steps.
class UniformRandomFollower final : public Follower {
 public:
  explicit UniformRandomFollower(std::size_t max_steps = 12) : max_steps_(max_steps) {}
  std::string name() const override { return "uniform_random"; }
  Trajectory follow(const World& world, const Instruction& u, NodeId start, std::uint64_t seed) const override;

 private:
  std::size_t max_steps_;
};

}  // namespace pragnav
