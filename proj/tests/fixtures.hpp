#pragma once

// Small datasets and trained models built through the regular dataset path.

#include <memory>
#include <vector>

#include "pragnav/harness.hpp"
#include "pragnav/listener.hpp"
#include "pragnav/speaker.hpp"
#include "pragnav/store.hpp"

namespace testing_support {

using namespace pragnav;

struct Bench {
  DatasetBundle bundle;
  Grammar grammar;
  std::vector<EvalTask> train;
  std::vector<EvalTask> val_seen;
  std::vector<EvalTask> val_unseen;

  const Vocabulary& vocab() const { return grammar.vocabulary(); }
};

inline Bench make_bench(std::uint32_t train_worlds, std::uint32_t unseen_worlds, std::uint32_t tasks_per_world,
                        std::uint64_t seed, std::uint32_t refs = 3, std::uint32_t nodes = 40) {
  DatasetParams p;
  p.n_train_worlds = train_worlds;
  p.n_unseen_worlds = unseen_worlds;
  p.tasks_per_world = tasks_per_world;
  p.refs_per_task = refs;
  p.node_count = nodes;
  p.seed = seed;
  Bench b{build_dataset(p), Grammar{}, {}, {}, {}};
  b.grammar = Grammar(b.bundle.grammar);
  b.train = tasks_from_records(b.bundle, b.bundle.splits.at("train"), b.vocab());
  b.val_seen = tasks_from_records(b.bundle, b.bundle.splits.at("val_seen"), b.vocab());
  b.val_unseen = tasks_from_records(b.bundle, b.bundle.splits.at("val_unseen"), b.vocab());
  return b;
}

inline std::vector<SpeakerExample> speaker_examples(const Vocabulary& vocab, const std::vector<EvalTask>& tasks) {
  std::vector<SpeakerExample> out;
  for (const auto& t : tasks) {
    const auto steps = step_features(vocab, t.task.intended);
    for (const auto& u : t.references) out.push_back({steps, u});
  }
  return out;
}

inline std::vector<ListenerExample> listener_examples(const std::vector<EvalTask>& tasks) {
  std::vector<ListenerExample> out;
  for (const auto& t : tasks) {
    for (const auto& u : t.references) out.push_back({t.world, u, t.task.intended});
  }
  return out;
}

}  // namespace testing_support
