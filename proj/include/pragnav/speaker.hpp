#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "pragnav/language.hpp"

namespace pragnav {

/// What a speaker sees of one move: the turn relative to the current heading
/// and the landmark words of the node it leads to.
struct StepFeature {
  int relative_sector = 0;
  std::vector<TokenId> landmarks;
  bool operator==(const StepFeature&) const = default;
};

std::vector<StepFeature> step_features(const Vocabulary& vocab, const Trajectory& e);

struct SpeakerExample {
  std::vector<StepFeature> steps;
  Instruction instruction;
};

struct SpeakerConfig {
  double smoothing = 0.1;
  /// At every clause boundary before the last move, this share of the
  /// continue-mass is moved to end-of-instruction (trailing clauses dropped).
  double drop_clause_prob = 0.0;
  /// Probability that a direction or landmark word is swapped for its fixed
  /// confusable partner (the next word of the same class).
  double vocab_confusion_prob = 0.0;
  std::size_t max_length = 40;
  bool operator==(const SpeakerConfig&) const = default;
};

struct DecodeStrategy {
  enum class Kind : std::uint8_t { kGreedy, kBeam };
  Kind kind = Kind::kGreedy;
  std::size_t width = 1;

  static DecodeStrategy greedy() { return {Kind::kGreedy, 1}; }
  static DecodeStrategy beam(std::size_t width) { return {Kind::kBeam, width}; }
};

/// Raw smoothed-count tables.
struct SpeakerParameters {
  std::map<std::uint32_t, std::vector<double>> skeleton;  // context key -> counts per symbol
  std::vector<double> direction;  // [relative sector][direction word]
  std::vector<double> landmark;   // [destination landmark][landmark word]
  bool operator==(const SpeakerParameters&) const = default;
};

/// Total order used to rank scored instructions: higher score first, then
/// token-id order with end-of-instruction sorting after every token.
bool ranks_before(double score_a, const Instruction& a, double score_b, const Instruction& b);

/// Conditional token model S(u | e).
///
/// Each token factors into a skeleton symbol (a function word, the separator,
/// a DIR slot, a LM slot or END) and, for slots, a filler word. The skeleton
/// symbol is conditioned on the first symbol of the current clause, the
/// previous symbol and whether the clause describes the last move. Fillers are
/// conditioned on the move the clause cursor points at, where the cursor is the
/// number of separators emitted so far. Instructions are non-empty, and END is
/// forced once max_length tokens have been produced.
class SpeakerModel {
 public:
  struct State {
    std::size_t length = 0;
    std::size_t cursor = 0;
    std::uint32_t head = 0;
    std::uint32_t prev = 0;
  };

  /// Untrained model: uniform over every continuation.
  SpeakerModel(Vocabulary vocab, SpeakerConfig config);
  SpeakerModel(Vocabulary vocab, SpeakerConfig config, SpeakerParameters params);

  const Vocabulary& vocabulary() const { return vocab_; }
  const SpeakerConfig& config() const { return config_; }
  const SpeakerParameters& parameters() const { return params_; }
  SpeakerModel with_knobs(double drop_clause_prob, double vocab_confusion_prob) const;

  /// Index of END in next-token distributions (== vocabulary size).
  std::size_t end_index() const { return vocab_.size(); }
  State initial_state() const;
  State advance(const State& state, TokenId token) const;
  /// Fills `out` with P(next | state, e) over vocabulary + END.
  void next_token_probs(std::span<const StepFeature> steps, const State& state, std::vector<double>& out) const;

  double score(std::span<const StepFeature> steps, const Instruction& u) const;
  Instruction sample(std::span<const StepFeature> steps, std::uint64_t seed) const;
  Instruction infer(std::span<const StepFeature> steps, DecodeStrategy strategy) const;

  bool operator==(const SpeakerModel& other) const {
    return vocab_ == other.vocab_ && config_ == other.config_ && params_ == other.params_;
  }

 private:
  friend SpeakerModel train_speaker(const Vocabulary&, std::span<const SpeakerExample>, const SpeakerConfig&);

  std::uint32_t symbol_of(TokenId t) const { return token_symbol_[t]; }
  std::uint32_t context_key(const State& state, bool last) const;
  void skeleton_probs(std::uint32_t key, bool allow_end, std::vector<double>& out) const;
  Instruction greedy(std::span<const StepFeature> steps) const;
  std::pair<double, Instruction> beam(std::span<const StepFeature> steps, std::size_t width, bool& exhaustive) const;

  Vocabulary vocab_;
  SpeakerConfig config_;
  SpeakerParameters params_;
  std::vector<std::uint32_t> token_symbol_;
  std::uint32_t function_count_ = 0;
  std::uint32_t symbol_count_ = 0;  // function words + SEP + DIR + LM + END
};

SpeakerModel train_speaker(const Vocabulary& vocab, std::span<const SpeakerExample> corpus,
                           const SpeakerConfig& config);

inline double speaker_score(const SpeakerModel& m, std::span<const StepFeature> e, const Instruction& u) {
  return m.score(e, u);
}
inline Instruction speaker_sample(const SpeakerModel& m, std::span<const StepFeature> e, std::uint64_t seed) {
  return m.sample(e, seed);
}
inline Instruction speaker_infer(const SpeakerModel& m, std::span<const StepFeature> e, DecodeStrategy s) {
  return m.infer(e, s);
}

}  // namespace pragnav
