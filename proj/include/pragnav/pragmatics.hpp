#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pragnav/metrics.hpp"
#include "pragnav/speaker.hpp"

namespace pragnav {

struct Candidate {
  Instruction instruction;
  double base_logp = 0.0;
  std::string origin;  // "inferred" or "sampled-<i>"
};

/// The inferred instruction at index 0 followed by N samples in draw order,
/// duplicates dropped. Sample i is drawn from derive_seed(seed, i), so the set
/// for N is a prefix-superset of the set for any smaller N.
struct CandidateSet {
  std::vector<Candidate> items;
  std::size_t n = 0;
};

CandidateSet build_candidate_set(const SpeakerModel& speaker, std::span<const StepFeature> steps, std::size_t n,
                                 std::uint64_t seed, DecodeStrategy infer = DecodeStrategy::greedy());

enum class Similarity : std::uint8_t { kBinary, kNdtw, kSdtw };
enum class ScoreMode : std::uint8_t { kRollout, kExact };

const char* similarity_name(Similarity s);
Similarity parse_similarity(const std::string& name);

/// Binary similarity: the execution reproduces the intended node sequence.
double psi(Similarity kind, const World& world, const Trajectory& e, const Trajectory& intended,
           const MetricConfig& cfg);

struct ToMScorer {
  std::vector<std::shared_ptr<const Follower>> listeners;
  Similarity similarity = Similarity::kNdtw;
  std::size_t rollouts = 3;  // M
  ScoreMode mode = ScoreMode::kRollout;
  std::uint64_t seed = 0;
  MetricConfig metric;

  /// Rollout mode: mean of psi over K listeners x M rollouts. Rollout seeds
  /// depend on (seed, intended path, k, j) only, so every candidate for one
  /// task is scored under the same random numbers.
  double score(const World& world, const Instruction& u, const Trajectory& intended) const;
};

std::uint64_t path_key(const Trajectory& e);

struct Selection {
  std::size_t index = 0;
  std::vector<double> scores;
};

/// argmax of `scores`; ties go to the higher base score, then to the smaller
/// token sequence.
std::size_t select_best(const CandidateSet& candidates, std::span<const double> scores);

Selection pragmatic_select(const CandidateSet& candidates, const ToMScorer& scorer, const World& world,
                           const Trajectory& intended);

struct PragmaticConfig {
  std::size_t n = 10;
  DecodeStrategy infer = DecodeStrategy::greedy();
};

struct PragmaticResult {
  Instruction instruction;
  CandidateSet candidates;
  Selection selection;
};

PragmaticResult generate_pragmatic(const SpeakerModel& speaker, const ToMScorer& scorer, const World& world,
                                   const Trajectory& intended, const PragmaticConfig& config, std::uint64_t seed);

}  // namespace pragnav
