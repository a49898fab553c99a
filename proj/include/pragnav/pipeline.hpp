#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pragnav/harness.hpp"
#include "pragnav/session.hpp"
#include "pragnav/store.hpp"

namespace pragnav {

/// Everything a command needs from a config document. Unknown keys are ignored.
struct PipelineConfig {
  std::optional<std::string> data_root;
  DatasetParams dataset;
  GrammarConfig grammar;
  SpeakerConfig speaker;
  std::size_t beam_width = 1;
  ListenerConfig listener;
  std::size_t ensemble_k = 10;
  double subset_fraction = 0.9;
  std::size_t n = 10;  // candidates sampled per task
  std::size_t m = 3;   // rollouts per ToM listener
  Similarity psi = Similarity::kNdtw;
  std::string split = "val_unseen";
  std::size_t max_tasks = 0;  // 0 = all
  GroundTruthConfig ground_truth;
  MetricConfig metric;
  std::size_t repeats = 1;
  ScoreMode oracle_mode = ScoreMode::kExact;
  bool ties_succeed = true;
  std::vector<std::string> systems = {"reference", "base", "pragmatic"};
  double weak_drop_clause_prob = 0.0;
  double weak_vocab_confusion_prob = 0.6;

  static PipelineConfig from_json(const Json& j);
};

Json pipeline_config_to_json(const PipelineConfig& c);

struct LoadedModels {
  std::shared_ptr<const SpeakerModel> speaker;
  std::vector<ListenerModel> listeners;
};

LoadedModels load_models(const DataRoot& root);

/// Runs one command ("build", "train", "eval", "ppg", "gamma", "shift",
/// "ablate"), writes its report to `out_path` and a run record under runs/.
/// Returns the run id.
std::string run_command(const std::string& command, const Json& config, std::uint64_t seed,
                        const std::string& out_path);

/// Resolver for the session service: "reference" shows the first gold
/// instruction, "base" the trained speaker's greedy output, "empty" a bare stop.
SessionResolver dataset_resolver(std::shared_ptr<const DatasetBundle> bundle,
                                 std::shared_ptr<const SpeakerModel> speaker);

}  // namespace pragnav
