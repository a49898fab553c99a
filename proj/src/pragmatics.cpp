#include "pragnav/pragmatics.hpp"

#include <algorithm>

#include "pragnav/error.hpp"
#include "pragnav/rng.hpp"

namespace pragnav {

CandidateSet build_candidate_set(const SpeakerModel& speaker, std::span<const StepFeature> steps, std::size_t n,
                                 std::uint64_t seed, DecodeStrategy infer) {
  CandidateSet set;
  set.n = n;
  Instruction inferred = speaker.infer(steps, infer);
  set.items.push_back({inferred, speaker.score(steps, inferred), "inferred"});
  for (std::size_t i = 0; i < n; ++i) {
    Instruction u = speaker.sample(steps, derive_seed(seed, i));
    const bool seen = std::any_of(set.items.begin(), set.items.end(),
                                  [&](const Candidate& c) { return c.instruction == u; });
    if (seen) continue;
    const double s = speaker.score(steps, u);
    set.items.push_back({std::move(u), s, "sampled-" + std::to_string(i)});
  }
  return set;
}

const char* similarity_name(Similarity s) {
  switch (s) {
    case Similarity::kBinary: return "binary";
    case Similarity::kNdtw: return "ndtw";
    case Similarity::kSdtw: return "sdtw";
  }
  return "?";
}

Similarity parse_similarity(const std::string& name) {
  if (name == "binary") return Similarity::kBinary;
  if (name == "ndtw") return Similarity::kNdtw;
  if (name == "sdtw") return Similarity::kSdtw;
  fail(ErrorCode::kInvalidArgument, "unknown similarity '" + name + "'");
}

double psi(Similarity kind, const World& world, const Trajectory& e, const Trajectory& intended,
           const MetricConfig& cfg) {
  switch (kind) {
    case Similarity::kBinary: return e.terminal && e.nodes() == intended.nodes() ? 1.0 : 0.0;
    case Similarity::kNdtw: return ndtw(world, e, intended, cfg);
    case Similarity::kSdtw: return sdtw(world, e, intended, cfg);
  }
  return 0.0;
}

std::uint64_t path_key(const Trajectory& e) {
  std::uint64_t h = mix64(e.steps.size());
  for (const auto& s : e.steps) h = mix64(h ^ s.node);
  return h;
}

double ToMScorer::score(const World& world, const Instruction& u, const Trajectory& intended) const {
  if (listeners.empty()) fail(ErrorCode::kInvalidArgument, "tom_score: no listeners");
  for (const auto& l : listeners) {
    if (!l) fail(ErrorCode::kInvalidArgument, "tom_score: null listener");
  }
  double total = 0.0;
  if (mode == ScoreMode::kExact) {
    if (similarity != Similarity::kBinary) {
      fail(ErrorCode::kUnsupported, "tom_score: exact mode needs the binary similarity");
    }
    for (const auto& l : listeners) {
      if (!l->supports_exact()) fail(ErrorCode::kUnsupported, "tom_score: listener '" + l->name() + "' is rollout-only");
      total += l->exact_probability(world, u, intended);
    }
    return total / static_cast<double>(listeners.size());
  }
  if (rollouts == 0) fail(ErrorCode::kInvalidArgument, "tom_score: M must be at least 1");
  const std::uint64_t key = path_key(intended);
  for (std::size_t k = 0; k < listeners.size(); ++k) {
    for (std::size_t j = 0; j < rollouts; ++j) {
      const auto e = listeners[k]->follow(world, u, intended.start, derive_seed(seed, key, k, j));
      total += psi(similarity, world, e, intended, metric);
    }
  }
  return total / static_cast<double>(listeners.size() * rollouts);
}

std::size_t select_best(const CandidateSet& candidates, std::span<const double> scores) {
  if (candidates.items.empty()) fail(ErrorCode::kInvalidArgument, "select: empty candidate set");
  if (scores.size() != candidates.items.size()) fail(ErrorCode::kInvalidArgument, "select: score count mismatch");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    const auto& a = candidates.items[i];
    const auto& b = candidates.items[best];
    if (scores[i] != scores[best]) {
      if (scores[i] > scores[best]) best = i;
    } else if (a.base_logp != b.base_logp) {
      if (a.base_logp > b.base_logp) best = i;
    } else if (a.instruction < b.instruction) {
      best = i;
    }
  }
  return best;
}

Selection pragmatic_select(const CandidateSet& candidates, const ToMScorer& scorer, const World& world,
                           const Trajectory& intended) {
  Selection sel;
  for (const auto& c : candidates.items) sel.scores.push_back(scorer.score(world, c.instruction, intended));
  sel.index = select_best(candidates, sel.scores);
  return sel;
}

PragmaticResult generate_pragmatic(const SpeakerModel& speaker, const ToMScorer& scorer, const World& world,
                                   const Trajectory& intended, const PragmaticConfig& config, std::uint64_t seed) {
  PragmaticResult r;
  const auto steps = step_features(speaker.vocabulary(), intended);
  r.candidates = build_candidate_set(speaker, steps, config.n, seed, config.infer);
  r.selection = pragmatic_select(r.candidates, scorer, world, intended);
  r.instruction = r.candidates.items[r.selection.index].instruction;
  return r;
}

}  // namespace pragnav
