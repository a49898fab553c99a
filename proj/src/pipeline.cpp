#include "pragnav/pipeline.hpp"

#include <algorithm>

#include "pragnav/error.hpp"
#include "pragnav/rng.hpp"

namespace fs = std::filesystem;

namespace pragnav {

namespace {

template <class T>
void read(const Json& j, const char* key, T& into) {
  if (j.contains(key) && !j.at(key).is_null()) into = j.at(key).get<T>();
}

const Json& section(const Json& j, const char* key) {
  static const Json empty = Json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) fail(ErrorCode::kInvalidArgument, std::string("config: '") + key + "' must be an object");
  return j.at(key);
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const Json& j) {
  if (!j.is_object()) fail(ErrorCode::kInvalidArgument, "config must be a JSON object");
  try {
    PipelineConfig c;
    if (j.contains("data_root")) c.data_root = j.at("data_root").get<std::string>();
    c.dataset = dataset_params_from_json(section(j, "dataset"));
    c.grammar = grammar_from_json(section(j, "grammar"));
    c.grammar.catalog_size = c.dataset.catalog_size;

    const Json& s = section(j, "speaker");
    read(s, "smoothing", c.speaker.smoothing);
    read(s, "drop_clause_prob", c.speaker.drop_clause_prob);
    read(s, "vocab_confusion_prob", c.speaker.vocab_confusion_prob);
    read(s, "max_length", c.speaker.max_length);
    read(s, "beam_width", c.beam_width);

    const Json& l = section(j, "listener");
    read(l, "K", c.ensemble_k);
    read(l, "subset_fraction", c.subset_fraction);
    read(l, "learning_rate", c.listener.learning_rate);
    read(l, "epochs", c.listener.epochs);
    read(l, "l2", c.listener.l2);
    read(l, "init_scale", c.listener.init_scale);
    if (l.contains("max_steps") && !l.at("max_steps").is_null()) c.listener.max_steps = l.at("max_steps").get<std::size_t>();

    const Json& p = section(j, "pragmatic");
    read(p, "N", c.n);
    read(p, "M", c.m);
    if (p.contains("psi")) c.psi = parse_similarity(p.at("psi").get<std::string>());

    const Json& e = section(j, "eval");
    read(e, "split", c.split);
    read(e, "max_tasks", c.max_tasks);
    read(e, "eps_parse", c.ground_truth.eps_parse);
    read(e, "eps_act", c.ground_truth.eps_act);
    if (e.contains("max_steps") && !e.at("max_steps").is_null()) c.ground_truth.max_steps = e.at("max_steps").get<std::size_t>();
    read(e, "threshold_factor", c.metric.threshold_factor);
    if (e.contains("threshold") && !e.at("threshold").is_null()) c.metric.threshold = e.at("threshold").get<double>();
    if (e.contains("spl")) {
      const auto v = e.at("spl").get<std::string>();
      if (v == "intended") c.metric.spl = SplVariant::kIntendedLength;
      else if (v == "shortest") c.metric.spl = SplVariant::kShortestPath;
      else fail(ErrorCode::kInvalidArgument, "config: spl must be 'intended' or 'shortest'");
    }
    read(e, "repeats", c.repeats);
    if (e.contains("oracle_mode")) {
      const auto v = e.at("oracle_mode").get<std::string>();
      if (v == "exact") c.oracle_mode = ScoreMode::kExact;
      else if (v == "rollout") c.oracle_mode = ScoreMode::kRollout;
      else fail(ErrorCode::kInvalidArgument, "config: oracle_mode must be 'exact' or 'rollout'");
    }
    read(e, "ties_succeed", c.ties_succeed);
    read(e, "systems", c.systems);

    const Json& w = section(j, "weak_speaker");
    read(w, "drop_clause_prob", c.weak_drop_clause_prob);
    read(w, "vocab_confusion_prob", c.weak_vocab_confusion_prob);
    return c;
  } catch (const Json::exception& ex) {
    fail(ErrorCode::kInvalidArgument, std::string("config: ") + ex.what());
  }
}

Json pipeline_config_to_json(const PipelineConfig& c) {
  Json j = {{"dataset", dataset_params_to_json(c.dataset)},
            {"grammar", grammar_to_json(c.grammar)},
            {"speaker",
             {{"smoothing", c.speaker.smoothing},
              {"drop_clause_prob", c.speaker.drop_clause_prob},
              {"vocab_confusion_prob", c.speaker.vocab_confusion_prob},
              {"max_length", c.speaker.max_length},
              {"beam_width", c.beam_width}}},
            {"listener",
             {{"K", c.ensemble_k},
              {"subset_fraction", c.subset_fraction},
              {"learning_rate", c.listener.learning_rate},
              {"epochs", c.listener.epochs},
              {"l2", c.listener.l2},
              {"init_scale", c.listener.init_scale},
              {"max_steps", c.listener.max_steps ? Json(*c.listener.max_steps) : Json(nullptr)}}},
            {"pragmatic", {{"N", c.n}, {"M", c.m}, {"psi", similarity_name(c.psi)}}},
            {"eval",
             {{"split", c.split},
              {"max_tasks", c.max_tasks},
              {"eps_parse", c.ground_truth.eps_parse},
              {"eps_act", c.ground_truth.eps_act},
              {"max_steps", c.ground_truth.max_steps ? Json(*c.ground_truth.max_steps) : Json(nullptr)},
              {"threshold_factor", c.metric.threshold_factor},
              {"threshold", c.metric.threshold ? Json(*c.metric.threshold) : Json(nullptr)},
              {"spl", c.metric.spl == SplVariant::kIntendedLength ? "intended" : "shortest"},
              {"repeats", c.repeats},
              {"oracle_mode", c.oracle_mode == ScoreMode::kExact ? "exact" : "rollout"},
              {"ties_succeed", c.ties_succeed},
              {"systems", c.systems}}},
            {"weak_speaker",
             {{"drop_clause_prob", c.weak_drop_clause_prob}, {"vocab_confusion_prob", c.weak_vocab_confusion_prob}}}};
  return j;
}

LoadedModels load_models(const DataRoot& root) {
  LoadedModels m;
  m.speaker = std::make_shared<const SpeakerModel>(parse_speaker(read_file(root.models() / "speaker.json")));
  m.listeners = parse_listeners(read_file(root.models() / "listeners.json"));
  return m;
}

namespace {

struct Context {
  PipelineConfig cfg;
  DataRoot root;
  std::uint64_t seed;
  std::map<std::string, std::string> inputs;
};

std::shared_ptr<const DatasetBundle> open_dataset(Context& ctx) {
  auto b = std::make_shared<const DatasetBundle>(load_dataset(ctx.root));
  ctx.inputs["manifest.json"] = file_sha256(ctx.root.manifest());
  return b;
}

LoadedModels open_models(Context& ctx) {
  auto m = load_models(ctx.root);
  ctx.inputs["models/speaker.json"] = file_sha256(ctx.root.models() / "speaker.json");
  ctx.inputs["models/listeners.json"] = file_sha256(ctx.root.models() / "listeners.json");
  return m;
}

std::vector<EvalTask> eval_tasks(const Context& ctx, const DatasetBundle& b, const Vocabulary& vocab) {
  const auto it = b.splits.find(ctx.cfg.split);
  if (it == b.splits.end()) fail(ErrorCode::kNotFound, "unknown split '" + ctx.cfg.split + "'");
  auto tasks = tasks_from_records(b, it->second, vocab);
  if (ctx.cfg.max_tasks > 0 && tasks.size() > ctx.cfg.max_tasks) tasks.resize(ctx.cfg.max_tasks);
  if (tasks.empty()) fail(ErrorCode::kInvalidArgument, "split '" + ctx.cfg.split + "' has no tasks");
  return tasks;
}

std::shared_ptr<const SpeakerModel> configured_speaker(const Context& ctx, const LoadedModels& m) {
  return std::make_shared<const SpeakerModel>(
      m.speaker->with_knobs(ctx.cfg.speaker.drop_clause_prob, ctx.cfg.speaker.vocab_confusion_prob));
}

DecodeStrategy strategy(const PipelineConfig& c) {
  return c.beam_width > 1 ? DecodeStrategy::beam(c.beam_width) : DecodeStrategy::greedy();
}

ToMScorer tom_scorer(const Context& ctx, std::span<const ListenerModel> members) {
  return ensemble_scorer(members, ctx.cfg.psi, ctx.cfg.m, ctx.cfg.metric, derive_seed(ctx.seed, 0x746f6dULL));
}

System make_system(const Context& ctx, const std::string& name, const Grammar& grammar, const LoadedModels& models,
                   std::shared_ptr<const SpeakerModel> speaker, std::shared_ptr<const GroundTruthListener> gt) {
  if (name == "reference") return reference_system(grammar);
  if (name == "empty") return empty_system(grammar);
  if (name == "base") return base_system(speaker, strategy(ctx.cfg));
  if (name == "pragmatic") {
    return pragmatic_system(speaker, tom_scorer(ctx, models.listeners), {ctx.cfg.n, strategy(ctx.cfg)});
  }
  if (name == "oracle_search") return oracle_search_system(speaker, ctx.cfg.n);
  if (name == "oracle_pragmatic") {
    return oracle_pragmatic_system(
        speaker, ground_truth_scorer(gt, ctx.cfg.oracle_mode, ctx.cfg.metric, derive_seed(ctx.seed, 0x6f7263ULL)),
        ctx.cfg.n);
  }
  fail(ErrorCode::kInvalidArgument, "unknown system '" + name + "'");
}

std::string cmd_build(Context& ctx) {
  const auto bundle = build_dataset(ctx.cfg.dataset, ctx.cfg.grammar);
  save_dataset(ctx.root, bundle);
  Json counts = Json::object();
  for (const auto& [name, recs] : bundle.splits) counts[name] = recs.size();
  return Json{{"kind", "summary"},
              {"report", "build"},
              {"params", dataset_params_to_json(bundle.params)},
              {"records", counts},
              {"worlds", bundle.worlds.size()},
              {"manifest_sha256", file_sha256(ctx.root.manifest())}}
             .dump() + "\n";
}

std::string cmd_train(Context& ctx) {
  const auto bundle = open_dataset(ctx);
  const Grammar grammar(bundle->grammar);
  const auto& vocab = grammar.vocabulary();
  const auto tasks = tasks_from_records(*bundle, bundle->splits.at("train"), vocab);
  std::vector<SpeakerExample> speaker_corpus;
  std::vector<ListenerExample> listener_corpus;
  for (const auto& t : tasks) {
    const auto steps = step_features(vocab, t.task.intended);
    for (const auto& u : t.references) {
      speaker_corpus.push_back({steps, u});
      listener_corpus.push_back({t.world, u, t.task.intended});
    }
  }
  SpeakerConfig sc = ctx.cfg.speaker;
  sc.drop_clause_prob = 0.0;
  sc.vocab_confusion_prob = 0.0;
  const auto speaker = train_speaker(vocab, speaker_corpus, sc);
  const auto listeners = train_listener_ensemble(vocab, listener_corpus, ctx.cfg.ensemble_k, ctx.cfg.subset_fraction,
                                                 ctx.cfg.listener, derive_seed(ctx.seed, 0x6c7374ULL));
  const std::string st = serialize_speaker(speaker);
  const std::string lt = serialize_listeners(listeners);
  write_file_atomic(ctx.root.models() / "speaker.json", st);
  write_file_atomic(ctx.root.models() / "listeners.json", lt);
  return Json{{"kind", "summary"},
              {"report", "train"},
              {"speaker_examples", speaker_corpus.size()},
              {"listener_examples", listener_corpus.size()},
              {"listeners", listeners.size()},
              {"speaker_sha256", sha256_hex(st)},
              {"listeners_sha256", sha256_hex(lt)}}
             .dump() + "\n";
}

std::string cmd_eval(Context& ctx) {
  const auto bundle = open_dataset(ctx);
  const Grammar grammar(bundle->grammar);
  const auto models = open_models(ctx);
  const auto speaker = configured_speaker(ctx, models);
  const auto tasks = eval_tasks(ctx, *bundle, grammar.vocabulary());
  auto gt = std::make_shared<const GroundTruthListener>(grammar.vocabulary(), ctx.cfg.ground_truth);
  std::string out;
  for (const auto& name : ctx.cfg.systems) {
    const auto sys = make_system(ctx, name, grammar, models, speaker, gt);
    out += eval_report_text(evaluate_speaker(name, sys, tasks, *gt, grammar.vocabulary(),
                                             {ctx.cfg.metric, ctx.cfg.repeats}, ctx.seed));
  }
  return out;
}

std::string cmd_ppg(Context& ctx) {
  const auto bundle = open_dataset(ctx);
  const Grammar grammar(bundle->grammar);
  const auto models = open_models(ctx);
  const auto speaker = configured_speaker(ctx, models);
  const auto tasks = eval_tasks(ctx, *bundle, grammar.vocabulary());
  auto gt = std::make_shared<const GroundTruthListener>(grammar.vocabulary(), ctx.cfg.ground_truth);
  return ppg_report_text(
      compute_ppg(speaker, tasks, gt, ctx.cfg.n, ctx.cfg.oracle_mode, {ctx.cfg.metric, ctx.cfg.repeats}, ctx.seed));
}

std::string cmd_gamma(Context& ctx) {
  const auto bundle = open_dataset(ctx);
  const Grammar grammar(bundle->grammar);
  const auto models = open_models(ctx);
  const auto speaker = configured_speaker(ctx, models);
  const auto tasks = eval_tasks(ctx, *bundle, grammar.vocabulary());
  return gamma_report_text(
      estimate_gamma(*speaker, tasks, ctx.cfg.n, ctx.seed, ctx.cfg.ties_succeed, strategy(ctx.cfg)));
}

std::string cmd_shift(Context& ctx) {
  const auto bundle = open_dataset(ctx);
  const Grammar grammar(bundle->grammar);
  const auto models = open_models(ctx);
  const auto speaker = configured_speaker(ctx, models);
  const auto weak = std::make_shared<const SpeakerModel>(
      models.speaker->with_knobs(ctx.cfg.weak_drop_clause_prob, ctx.cfg.weak_vocab_confusion_prob));
  const auto tasks = eval_tasks(ctx, *bundle, grammar.vocabulary());
  auto gt = std::make_shared<const GroundTruthListener>(grammar.vocabulary(), ctx.cfg.ground_truth);
  std::vector<NamedSystem> sources = {{"reference", reference_system(grammar)},
                                      {"base", base_system(speaker, strategy(ctx.cfg))},
                                      {"weak", base_system(weak)}};
  std::vector<NamedFollower> listeners;
  for (const auto& l : models.listeners) listeners.push_back({l.name(), std::make_shared<ListenerModel>(l)});
  return shift_report_text(
      covariate_shift_report({"ground_truth", gt}, listeners, sources, tasks, ctx.cfg.metric, ctx.seed));
}

std::string cmd_ablate(Context& ctx) {
  const auto bundle = open_dataset(ctx);
  const Grammar grammar(bundle->grammar);
  const auto models = open_models(ctx);
  const auto speaker = configured_speaker(ctx, models);
  const auto tasks = eval_tasks(ctx, *bundle, grammar.vocabulary());
  GroundTruthListener gt(grammar.vocabulary(), ctx.cfg.ground_truth);
  std::vector<NamedScorer> scorers = {
      {"K=1", tom_scorer(ctx, std::span(models.listeners).first(1))},
      {"K=" + std::to_string(models.listeners.size()), tom_scorer(ctx, models.listeners)}};
  return ablation_report_text(ensemble_ablation(speaker, tasks, gt, scorers, {ctx.cfg.n, strategy(ctx.cfg)},
                                                {ctx.cfg.metric, ctx.cfg.repeats}, ctx.seed));
}

}  // namespace

std::string run_command(const std::string& command, const Json& config, std::uint64_t seed,
                        const std::string& out_path) {
  Context ctx{PipelineConfig::from_json(config), DataRoot("."), seed, {}};
  ctx.root = DataRoot::resolve(ctx.cfg.data_root);
  ctx.root.ensure_layout();
  const std::string started = utc_timestamp();
  std::string report;
  if (command == "build") report = cmd_build(ctx);
  else if (command == "train") report = cmd_train(ctx);
  else if (command == "eval") report = cmd_eval(ctx);
  else if (command == "ppg") report = cmd_ppg(ctx);
  else if (command == "gamma") report = cmd_gamma(ctx);
  else if (command == "shift") report = cmd_shift(ctx);
  else if (command == "ablate") report = cmd_ablate(ctx);
  else fail(ErrorCode::kInvalidArgument, "unknown command '" + command + "'");

  if (out_path.empty()) fail(ErrorCode::kInvalidArgument, "an output path is required");
  write_file_atomic(out_path, report);
  RunRecord rec;
  rec.command = command;
  rec.config = pipeline_config_to_json(ctx.cfg);
  rec.config["seed"] = seed;
  rec.input_hashes = ctx.inputs;
  rec.input_hashes["config"] = sha256_hex(config.dump());
  rec.report_path = fs::absolute(out_path).string();
  rec.report_sha256 = sha256_hex(report);
  rec.started_at = started;
  rec.finished_at = utc_timestamp();
  return write_run(ctx.root, std::move(rec));
}

SessionResolver dataset_resolver(std::shared_ptr<const DatasetBundle> bundle,
                                 std::shared_ptr<const SpeakerModel> speaker) {
  auto grammar = std::make_shared<const Grammar>(bundle->grammar);
  auto index = std::make_shared<std::map<std::string, EvalTask>>();
  for (const auto& [name, recs] : bundle->splits) {
    for (auto& t : tasks_from_records(*bundle, recs, grammar->vocabulary())) index->emplace(t.task.id, std::move(t));
  }
  return [grammar, index, speaker](const std::string& task_id, const std::string& source) {
    const auto it = index->find(task_id);
    if (it == index->end()) fail(ErrorCode::kNotFound, "unknown task '" + task_id + "'");
    SessionSpec spec;
    spec.task = it->second;
    spec.source = source;
    if (source == "reference") {
      spec.instruction = spec.task.references.front();
    } else if (source == "base" && speaker) {
      spec.instruction = speaker->infer(step_features(speaker->vocabulary(), spec.task.task.intended),
                                        DecodeStrategy::greedy());
    } else if (source == "empty") {
      spec.instruction = Instruction{{grammar->stop_word()}};
    } else {
      fail(ErrorCode::kNotFound, "unknown speaker system '" + source + "'");
    }
    return spec;
  };
}

}  // namespace pragnav
