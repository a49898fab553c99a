#include "pragnav/harness.hpp"

#include <algorithm>

#include "pragnav/error.hpp"
#include "pragnav/rng.hpp"

namespace pragnav {

namespace {

std::uint64_t task_key(const EvalTask& t) { return hash_string(t.task.world_id + "/" + t.task.id); }

void check_tasks(std::span<const EvalTask> tasks) {
  if (tasks.empty()) fail(ErrorCode::kInvalidArgument, "harness: empty task set");
  for (const auto& t : tasks) {
    if (!t.world) fail(ErrorCode::kInvalidArgument, "harness: task '" + t.task.id + "' has no world");
  }
}

double sum_scaled(const std::vector<EpisodeRecord>& eps, double SimilarityReport::*field) {
  double total = 0.0;
  for (const auto& e : eps) total += e.metrics.*field;
  return eps.empty() ? 0.0 : 100.0 * total / static_cast<double>(eps.size());
}

}  // namespace

EvalReport aggregate(std::string speaker, std::string listener, std::uint64_t seed,
                     std::vector<EpisodeRecord> episodes) {
  EvalReport r;
  r.speaker = std::move(speaker);
  r.listener = std::move(listener);
  r.seed = seed;
  r.episodes = std::move(episodes);
  r.count = r.episodes.size();
  r.sr = sum_scaled(r.episodes, &SimilarityReport::sr);
  r.spl = sum_scaled(r.episodes, &SimilarityReport::spl);
  r.ndtw = sum_scaled(r.episodes, &SimilarityReport::ndtw);
  r.sdtw = sum_scaled(r.episodes, &SimilarityReport::sdtw);
  return r;
}

std::vector<double> metric_values(const EvalReport& r, const std::string& metric) {
  double SimilarityReport::*field = nullptr;
  if (metric == "sr") field = &SimilarityReport::sr;
  else if (metric == "spl") field = &SimilarityReport::spl;
  else if (metric == "ndtw") field = &SimilarityReport::ndtw;
  else if (metric == "sdtw") field = &SimilarityReport::sdtw;
  else fail(ErrorCode::kInvalidArgument, "unknown metric '" + metric + "'");
  std::vector<double> out;
  for (const auto& e : r.episodes) out.push_back(100.0 * (e.metrics.*field));
  return out;
}

std::uint64_t generation_seed(std::uint64_t seed, const EvalTask& task) {
  return derive_seed(seed, task_key(task), 0x67656eULL);
}

std::uint64_t rollout_seed(std::uint64_t seed, const EvalTask& task, std::size_t r) {
  return derive_seed(seed, task_key(task), 0x726f6cULL, r);
}

EpisodeRecord make_episode(const EvalTask& task, const std::string& source, const std::string& listener,
                           const Vocabulary& vocab, const Instruction& u, const Trajectory& executed,
                           const MetricConfig& cfg) {
  EpisodeRecord ep;
  ep.task_id = task.task.id;
  ep.world_id = task.task.world_id;
  ep.source = source;
  ep.listener = listener;
  ep.instruction = to_text(vocab, u);
  ep.intended = task.task.intended.nodes();
  ep.executed = executed.nodes();
  ep.metrics = similarity(*task.world, executed, task.task.intended, cfg);
  return ep;
}

EvalReport evaluate_speaker(const std::string& name, const System& system, std::span<const EvalTask> tasks,
                            const Follower& listener, const Vocabulary& vocab, const EvalConfig& cfg,
                            std::uint64_t seed) {
  check_tasks(tasks);
  if (cfg.repeats < 1) fail(ErrorCode::kInvalidArgument, "evaluate: repeats must be at least 1");
  std::vector<EpisodeRecord> eps;
  for (const auto& t : tasks) {
    const Instruction u = system(t, generation_seed(seed, t));
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
      const auto e = listener.follow(*t.world, u, t.task.intended.start, rollout_seed(seed, t, r));
      eps.push_back(make_episode(t, name, listener.name(), vocab, u, e, cfg.metric));
    }
  }
  return aggregate(name, listener.name(), seed, std::move(eps));
}

System reference_system(const Grammar& grammar) {
  return [grammar](const EvalTask& t, std::uint64_t seed) {
    if (!t.references.empty()) return t.references.front();
    return reference_speak(grammar, *t.world, t.task, seed);
  };
}

System base_system(std::shared_ptr<const SpeakerModel> speaker, DecodeStrategy strategy) {
  return [speaker, strategy](const EvalTask& t, std::uint64_t) {
    return speaker->infer(step_features(speaker->vocabulary(), t.task.intended), strategy);
  };
}

System empty_system(const Grammar& grammar) {
  const TokenId stop = grammar.stop_word();
  return [stop](const EvalTask&, std::uint64_t) { return Instruction{{stop}}; };
}

System pragmatic_system(std::shared_ptr<const SpeakerModel> speaker, ToMScorer scorer, PragmaticConfig config) {
  return [speaker, scorer = std::move(scorer), config](const EvalTask& t, std::uint64_t seed) {
    return generate_pragmatic(*speaker, scorer, *t.world, t.task.intended, config, seed).instruction;
  };
}

Instruction oracle_search_speaker(const SpeakerModel& speaker, const Trajectory& intended,
                                  const Instruction& reference, std::size_t n, std::uint64_t seed) {
  const auto steps = step_features(speaker.vocabulary(), intended);
  CandidateSet set = build_candidate_set(speaker, steps, n, seed);
  const bool present = std::any_of(set.items.begin(), set.items.end(),
                                   [&](const Candidate& c) { return c.instruction == reference; });
  if (!present) set.items.push_back({reference, speaker.score(steps, reference), "reference"});
  std::vector<double> scores;
  for (const auto& c : set.items) scores.push_back(c.base_logp);
  return set.items[select_best(set, scores)].instruction;
}

Instruction oracle_pragmatic_speaker(const SpeakerModel& speaker, const World& world, const Trajectory& intended,
                                     const ToMScorer& gt_scorer, std::size_t n, std::uint64_t seed) {
  const auto steps = step_features(speaker.vocabulary(), intended);
  const CandidateSet set = build_candidate_set(speaker, steps, n, seed);
  const auto sel = pragmatic_select(set, gt_scorer, world, intended);
  return set.items[sel.index].instruction;
}

System oracle_search_system(std::shared_ptr<const SpeakerModel> speaker, std::size_t n) {
  return [speaker, n](const EvalTask& t, std::uint64_t seed) {
    if (t.references.empty()) fail(ErrorCode::kInvalidArgument, "oracle_search: task '" + t.task.id + "' has no reference");
    return oracle_search_speaker(*speaker, t.task.intended, t.references.front(), n, seed);
  };
}

System oracle_pragmatic_system(std::shared_ptr<const SpeakerModel> speaker, ToMScorer gt_scorer, std::size_t n) {
  return [speaker, gt_scorer = std::move(gt_scorer), n](const EvalTask& t, std::uint64_t seed) {
    return oracle_pragmatic_speaker(*speaker, *t.world, t.task.intended, gt_scorer, n, seed);
  };
}

ToMScorer ground_truth_scorer(std::shared_ptr<const GroundTruthListener> gt, ScoreMode mode, const MetricConfig& cfg,
                              std::uint64_t seed) {
  ToMScorer s;
  s.listeners.push_back(std::move(gt));
  s.mode = mode;
  s.similarity = mode == ScoreMode::kExact ? Similarity::kBinary : Similarity::kNdtw;
  s.metric = cfg;
  s.seed = seed;
  return s;
}

PPGReport compute_ppg(std::shared_ptr<const SpeakerModel> speaker, std::span<const EvalTask> tasks,
                      std::shared_ptr<const GroundTruthListener> gt, std::size_t n, ScoreMode oracle_mode,
                      const EvalConfig& cfg, std::uint64_t seed) {
  check_tasks(tasks);
  for (const auto& t : tasks) {
    if (t.references.empty()) fail(ErrorCode::kInvalidArgument, "compute_ppg: task '" + t.task.id + "' has no reference");
  }
  const auto& vocab = speaker->vocabulary();
  PPGReport r;
  r.oracle_mode = oracle_mode == ScoreMode::kExact ? "exact" : "rollout";
  const auto gt_scorer = ground_truth_scorer(gt, oracle_mode, cfg.metric, derive_seed(seed, 0x6f7263ULL));
  r.base = evaluate_speaker("base", base_system(speaker), tasks, *gt, vocab, cfg, seed);
  r.oracle_search = evaluate_speaker("oracle_search", oracle_search_system(speaker, n), tasks, *gt, vocab, cfg, seed);
  r.oracle_pragmatic =
      evaluate_speaker("oracle_pragmatic", oracle_pragmatic_system(speaker, gt_scorer, n), tasks, *gt, vocab, cfg, seed);
  r.rho_base = r.base.ndtw;
  r.rho_oracle_search = r.oracle_search.ndtw;
  r.rho_oracle_pragmatic = r.oracle_pragmatic.ndtw;
  r.ppg_search = r.rho_oracle_search - r.rho_base;
  r.ppg_pragmatic = r.rho_oracle_pragmatic - r.rho_base;
  const auto b = metric_values(r.base, "ndtw");
  const auto s = metric_values(r.oracle_search, "ndtw");
  const auto p = metric_values(r.oracle_pragmatic, "ndtw");
  for (std::size_t i = 0; i < b.size(); ++i) {
    r.delta_search.push_back(s[i] - b[i]);
    r.delta_pragmatic.push_back(p[i] - b[i]);
  }
  r.test_search = paired_t_test(s, b);
  r.test_pragmatic = paired_t_test(p, b);
  r.test_pragmatic_vs_search = paired_t_test(p, s);
  return r;
}

GammaEstimate estimate_gamma(const SpeakerModel& speaker, std::span<const EvalTask> tasks, std::size_t n,
                             std::uint64_t seed, bool ties_succeed, DecodeStrategy infer) {
  check_tasks(tasks);
  if (n < 1) fail(ErrorCode::kInvalidArgument, "estimate_gamma: N must be at least 1");
  GammaEstimate g;
  g.n = n;
  g.ties_succeed = ties_succeed;
  for (const auto& t : tasks) {
    const auto steps = step_features(speaker.vocabulary(), t.task.intended);
    const Instruction best = speaker.infer(steps, infer);
    const double s_best = speaker.score(steps, best);
    const std::uint64_t gs = generation_seed(seed, t);
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      const Instruction u = speaker.sample(steps, derive_seed(gs, i));
      if (ties_succeed && u == best) continue;
      ok = s_best > speaker.score(steps, u);
    }
    ++g.episodes;
    if (ok) ++g.successes;
  }
  g.gamma = static_cast<double>(g.successes) / static_cast<double>(g.episodes);
  return g;
}

ShiftReport covariate_shift_report(const NamedFollower& human, std::span<const NamedFollower> listeners,
                                   std::span<const NamedSystem> sources, std::span<const EvalTask> tasks,
                                   const MetricConfig& cfg, std::uint64_t seed) {
  check_tasks(tasks);
  if (listeners.empty()) fail(ErrorCode::kInvalidArgument, "covariate_shift: no listeners");
  if (sources.size() < 2) fail(ErrorCode::kInvalidArgument, "covariate_shift: need at least two sources");
  ShiftReport r;
  r.human = human.name;
  r.reference_source = sources.front().name;
  for (const auto& s : sources) r.sources.push_back(s.name);
  for (const auto& l : listeners) r.listeners.push_back(l.name);

  std::vector<std::vector<AgreementItem>> items(sources.size());
  for (std::size_t s = 0; s < sources.size(); ++s) {
    for (const auto& t : tasks) {
      AgreementItem it;
      it.world = t.world.get();
      it.instruction = sources[s].system(t, generation_seed(seed, t));
      it.start = t.task.intended.start;
      it.seed = rollout_seed(seed, t, 0);
      items[s].push_back(std::move(it));
    }
  }
  for (std::size_t s = 0; s < sources.size(); ++s) {
    for (std::size_t l = 0; l < listeners.size(); ++l) {
      ShiftCell c;
      c.source = sources[s].name;
      c.listener = listeners[l].name;
      c.scores = agreement_scores(*human.follower, *listeners[l].follower, items[s], cfg);
      for (double& x : c.scores) x *= 100.0;
      c.agreement = mean(c.scores);
      r.cells.push_back(std::move(c));
    }
  }
  for (std::size_t s = 0; s < sources.size(); ++s) {
    for (std::size_t l = 0; l < listeners.size(); ++l) {
      auto& c = r.cells[s * listeners.size() + l];
      const auto& ref = r.cells[l];
      c.delta = c.agreement - ref.agreement;
      c.test = paired_t_test(c.scores, ref.scores);
    }
  }
  return r;
}

AblationReport ensemble_ablation(std::shared_ptr<const SpeakerModel> speaker, std::span<const EvalTask> tasks,
                                 const Follower& gt, std::span<const NamedScorer> scorers,
                                 const PragmaticConfig& pragmatic, const EvalConfig& cfg, std::uint64_t seed) {
  AblationReport out;
  const auto& vocab = speaker->vocabulary();
  AblationRow none;
  none.scorer = "None";
  none.report = evaluate_speaker("base", base_system(speaker, pragmatic.infer), tasks, gt, vocab, cfg, seed);
  none.rho = none.report.ndtw;
  out.rows.push_back(std::move(none));
  const auto base_values = metric_values(out.rows.front().report, "ndtw");
  for (const auto& s : scorers) {
    AblationRow row;
    row.scorer = s.name;
    row.report = evaluate_speaker("pragmatic/" + s.name, pragmatic_system(speaker, s.scorer, pragmatic), tasks, gt,
                                  vocab, cfg, seed);
    row.rho = row.report.ndtw;
    row.delta = row.rho - out.rows.front().rho;
    row.test = paired_t_test(metric_values(row.report, "ndtw"), base_values);
    out.rows.push_back(std::move(row));
  }
  return out;
}

ToMScorer ensemble_scorer(std::span<const ListenerModel> members, Similarity similarity, std::size_t rollouts,
                          const MetricConfig& metric, std::uint64_t seed) {
  ToMScorer s;
  for (const auto& m : members) s.listeners.push_back(std::make_shared<ListenerModel>(m));
  s.similarity = similarity;
  s.rollouts = rollouts;
  s.metric = metric;
  s.seed = seed;
  return s;
}

}  // namespace pragnav
