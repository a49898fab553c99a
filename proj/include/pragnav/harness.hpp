#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pragnav/listener.hpp"
#include "pragnav/metrics.hpp"
#include "pragnav/pragmatics.hpp"
#include "pragnav/speaker.hpp"
#include "pragnav/stats.hpp"

namespace pragnav {

struct EvalTask {
  std::shared_ptr<const World> world;
  Task task;
  std::vector<Instruction> references;  // gold instructions, first one is u*
};

struct EpisodeRecord {
  std::string task_id;
  std::string world_id;
  std::string source;
  std::string listener;
  std::string instruction;  // space-joined tokens
  std::vector<NodeId> intended;
  std::vector<NodeId> executed;
  SimilarityReport metrics;
  std::optional<int> rating;
  std::optional<bool> control_pass;
  bool operator==(const EpisodeRecord&) const = default;
};

/// Aggregates are means over episodes, scaled by 100.
struct EvalReport {
  std::string speaker;
  std::string listener;
  std::uint64_t seed = 0;
  std::vector<EpisodeRecord> episodes;
  double sr = 0.0, spl = 0.0, ndtw = 0.0, sdtw = 0.0;
  std::size_t count = 0;
};

EvalReport aggregate(std::string speaker, std::string listener, std::uint64_t seed,
                     std::vector<EpisodeRecord> episodes);

/// Per-episode values of the named metric ("sr", "spl", "ndtw", "sdtw").
std::vector<double> metric_values(const EvalReport& r, const std::string& metric);

struct EvalConfig {
  MetricConfig metric;
  std::size_t repeats = 1;  // evaluation rollouts per task
};

/// A generation system: task and its generation seed -> instruction.
using System = std::function<Instruction(const EvalTask&, std::uint64_t)>;

/// Seed a system receives for `task` (identical across systems).
std::uint64_t generation_seed(std::uint64_t seed, const EvalTask& task);
/// Seed of evaluation rollout r for `task` (identical across systems).
std::uint64_t rollout_seed(std::uint64_t seed, const EvalTask& task, std::size_t r);

EpisodeRecord make_episode(const EvalTask& task, const std::string& source, const std::string& listener,
                           const Vocabulary& vocab, const Instruction& u, const Trajectory& executed,
                           const MetricConfig& cfg);

EvalReport evaluate_speaker(const std::string& name, const System& system, std::span<const EvalTask> tasks,
                            const Follower& listener, const Vocabulary& vocab, const EvalConfig& cfg,
                            std::uint64_t seed);

System reference_system(const Grammar& grammar);
System base_system(std::shared_ptr<const SpeakerModel> speaker, DecodeStrategy strategy = DecodeStrategy::greedy());
System empty_system(const Grammar& grammar);
System pragmatic_system(std::shared_ptr<const SpeakerModel> speaker, ToMScorer scorer, PragmaticConfig config);

/// argmax of the speaker's own score over its candidates plus u*.
Instruction oracle_search_speaker(const SpeakerModel& speaker, const Trajectory& intended,
                                  const Instruction& reference, std::size_t n, std::uint64_t seed);

/// argmax over the speaker's candidates of the ground-truth listener's score:
/// exact L_h(e* | u) by default, or a rollout score.
Instruction oracle_pragmatic_speaker(const SpeakerModel& speaker, const World& world, const Trajectory& intended,
                                     const ToMScorer& gt_scorer, std::size_t n, std::uint64_t seed);

System oracle_search_system(std::shared_ptr<const SpeakerModel> speaker, std::size_t n);
System oracle_pragmatic_system(std::shared_ptr<const SpeakerModel> speaker, ToMScorer gt_scorer, std::size_t n);

/// Ground-truth scorer used by the pragmatic oracle.
ToMScorer ground_truth_scorer(std::shared_ptr<const GroundTruthListener> gt, ScoreMode mode, const MetricConfig& cfg,
                              std::uint64_t seed);

struct PPGReport {
  std::string metric = "ndtw";
  std::string oracle_mode;
  double rho_base = 0.0;
  double rho_oracle_search = 0.0;
  double rho_oracle_pragmatic = 0.0;
  double ppg_search = 0.0;
  double ppg_pragmatic = 0.0;
  std::vector<double> delta_search;     // per episode, x100
  std::vector<double> delta_pragmatic;  // per episode, x100
  PairedTest test_search;
  PairedTest test_pragmatic;
  PairedTest test_pragmatic_vs_search;  // oracle_pragmatic - oracle_search
  EvalReport base, oracle_search, oracle_pragmatic;
};

PPGReport compute_ppg(std::shared_ptr<const SpeakerModel> speaker, std::span<const EvalTask> tasks,
                      std::shared_ptr<const GroundTruthListener> gt, std::size_t n, ScoreMode oracle_mode,
                      const EvalConfig& cfg, std::uint64_t seed);

struct GammaEstimate {
  double gamma = 0.0;
  std::size_t n = 0;
  std::size_t episodes = 0;
  std::size_t successes = 0;
  bool ties_succeed = true;
};

/// Fraction of tasks where the inferred instruction outscores all N samples.
/// With `ties_succeed`, a sample identical to the inferred instruction does
/// not count against it.
GammaEstimate estimate_gamma(const SpeakerModel& speaker, std::span<const EvalTask> tasks, std::size_t n,
                             std::uint64_t seed, bool ties_succeed = true,
                             DecodeStrategy infer = DecodeStrategy::greedy());

struct NamedSystem {
  std::string name;
  System system;
};

struct NamedFollower {
  std::string name;
  std::shared_ptr<const Follower> follower;
};

struct ShiftCell {
  std::string source;
  std::string listener;
  double agreement = 0.0;  // x100
  double delta = 0.0;      // vs the reference-source row, x100
  PairedTest test;         // paired over tasks against the reference-source row
  std::vector<double> scores;
};

struct ShiftReport {
  std::string human;
  std::string reference_source;
  std::vector<std::string> sources;
  std::vector<std::string> listeners;
  std::vector<ShiftCell> cells;  // row-major: source x listener
};

/// Agreement between the ground-truth listener and each model listener on
/// instructions from each source. The first source is the reference row.
ShiftReport covariate_shift_report(const NamedFollower& human, std::span<const NamedFollower> listeners,
                                   std::span<const NamedSystem> sources, std::span<const EvalTask> tasks,
                                   const MetricConfig& cfg, std::uint64_t seed);

struct AblationRow {
  std::string scorer;
  double rho = 0.0;    // NDTW x100
  double delta = 0.0;  // vs the "None" row
  PairedTest test;
  EvalReport report;
};

struct AblationReport {
  std::vector<AblationRow> rows;  // first row is the base speaker ("None")
};

struct NamedScorer {
  std::string name;
  ToMScorer scorer;
};

AblationReport ensemble_ablation(std::shared_ptr<const SpeakerModel> speaker, std::span<const EvalTask> tasks,
                                 const Follower& gt, std::span<const NamedScorer> scorers,
                                 const PragmaticConfig& pragmatic, const EvalConfig& cfg, std::uint64_t seed);

ToMScorer ensemble_scorer(std::span<const ListenerModel> members, Similarity similarity, std::size_t rollouts,
                          const MetricConfig& metric, std::uint64_t seed);

}  // namespace pragnav
