#include "pragnav/store.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>

#include <openssl/evp.h>

#include "pragnav/error.hpp"
#include "pragnav/rng.hpp"

namespace fs = std::filesystem;

namespace pragnav {

namespace {

// JSON has no infinities; they are written as null.
Json num(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

template <class F>
auto guarded(std::string_view what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::kCorrupt, std::string(what) + ": malformed document (" + e.what() + ")");
  }
}

const char* class_name(TokenClass c) {
  switch (c) {
    case TokenClass::kFunction: return "function";
    case TokenClass::kSeparator: return "separator";
    case TokenClass::kDirection: return "direction";
    case TokenClass::kLandmark: return "landmark";
  }
  return "?";
}

TokenClass class_from(const std::string& s) {
  if (s == "function") return TokenClass::kFunction;
  if (s == "separator") return TokenClass::kSeparator;
  if (s == "direction") return TokenClass::kDirection;
  if (s == "landmark") return TokenClass::kLandmark;
  fail(ErrorCode::kCorrupt, "unknown token class '" + s + "'");
}

Json vocab_to_json(const Vocabulary& v) {
  Json out = Json::array();
  for (TokenId t = 0; t < v.size(); ++t) out.push_back({{"word", v.word(t)}, {"class", class_name(v.token_class(t))}});
  return out;
}

Vocabulary vocab_from_json(const Json& j) {
  std::vector<std::pair<std::string, TokenClass>> entries;
  for (const auto& e : j) entries.emplace_back(e.at("word").get<std::string>(), class_from(e.at("class").get<std::string>()));
  return Vocabulary(std::move(entries));
}

Json test_to_json(const PairedTest& t) {
  return {{"n", t.n}, {"mean_delta", num(t.mean_delta)}, {"t", num(t.t)}, {"p_value", num(t.p_value)}};
}

std::string lines(const std::vector<Json>& docs) {
  std::string out;
  for (const auto& d : docs) {
    out += d.dump();
    out.push_back('\n');
  }
  return out;
}

void append_episodes(std::vector<Json>& out, const EvalReport& r) {
  for (const auto& e : r.episodes) {
    Json j = episode_to_json(e);
    j["kind"] = "episode";
    out.push_back(std::move(j));
  }
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    fail(ErrorCode::kIo, "sha256 failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

std::string file_sha256(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kNotFound, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) fail(ErrorCode::kIo, "cannot read '" + path.string() + "'");
  return buf.str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  static std::atomic<std::uint64_t> counter{0};
  const fs::path tmp = path.string() + ".tmp" + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::kIo, "short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    fail(ErrorCode::kIo, "cannot replace '" + path.string() + "': " + ec.message());
  }
}

Json parse_document(std::string_view text, std::string_view what) {
  Json doc = Json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) fail(ErrorCode::kCorrupt, std::string(what) + ": not a valid document");
  const auto v = doc.find("version");
  if (v == doc.end() || !v->is_number_integer()) fail(ErrorCode::kCorrupt, std::string(what) + ": missing version");
  if (v->get<int>() != kFormatVersion) {
    fail(ErrorCode::kVersionMismatch, std::string(what) + ": unsupported version " + std::to_string(v->get<int>()));
  }
  return doc;
}

std::string dump_document(const Json& doc) { return doc.dump(2) + "\n"; }

Json world_to_json(const World& w) {
  Json nodes = Json::array();
  for (const auto& n : w.nodes()) nodes.push_back({{"id", n.id}, {"x", n.x}, {"y", n.y}, {"landmarks", n.landmarks}});
  Json edges = Json::array();
  for (const auto& [a, b] : w.edges()) edges.push_back({{"a", a}, {"b", b}});
  return {{"version", kFormatVersion}, {"kind", "world"}, {"seed", w.seed()}, {"nodes", nodes}, {"edges", edges}};
}

World world_from_json(const Json& j) {
  return guarded("world", [&] {
    std::vector<Node> nodes;
    for (const auto& n : j.at("nodes")) {
      nodes.push_back({n.at("id").get<NodeId>(), n.at("x").get<double>(), n.at("y").get<double>(),
                       n.at("landmarks").get<std::vector<std::string>>()});
    }
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (const auto& e : j.at("edges")) edges.emplace_back(e.at("a").get<NodeId>(), e.at("b").get<NodeId>());
    try {
      return World(j.at("seed").get<std::uint64_t>(), std::move(nodes), std::move(edges));
    } catch (const Error& e) {
      fail(ErrorCode::kCorrupt, std::string("world: ") + e.what());
    }
  });
}

std::string serialize_world(const World& w) { return dump_document(world_to_json(w)); }

World parse_world(std::string_view text) { return world_from_json(parse_document(text, "world")); }

Json grammar_to_json(const GrammarConfig& g) {
  Json templates = Json::array();
  for (const auto& t : g.templates) templates.push_back({{"name", t.name}, {"pattern", t.pattern}, {"weight", t.weight}});
  return {{"catalog_size", g.catalog_size},
          {"templates", templates},
          {"coarse_directions", g.coarse_directions},
          {"exact_directions", g.exact_directions},
          {"max_tokens", g.max_tokens}};
}

GrammarConfig grammar_from_json(const Json& j) {
  GrammarConfig g;
  g.catalog_size = j.value("catalog_size", g.catalog_size);
  if (j.contains("templates")) {
    g.templates.clear();
    for (const auto& t : j.at("templates")) {
      g.templates.push_back(
          {t.value("name", std::string{}), t.at("pattern").get<std::vector<std::string>>(), t.value("weight", 1.0)});
    }
  }
  g.coarse_directions = j.value("coarse_directions", g.coarse_directions);
  g.exact_directions = j.value("exact_directions", g.exact_directions);
  g.max_tokens = j.value("max_tokens", g.max_tokens);
  return g;
}

std::string serialize_speaker(const SpeakerModel& m) {
  const auto& c = m.config();
  Json skeleton = Json::array();
  for (const auto& [key, row] : m.parameters().skeleton) skeleton.push_back({{"key", key}, {"counts", row}});
  Json doc = {{"version", kFormatVersion},
              {"kind", "speaker"},
              {"vocabulary", vocab_to_json(m.vocabulary())},
              {"config",
               {{"smoothing", c.smoothing},
                {"drop_clause_prob", c.drop_clause_prob},
                {"vocab_confusion_prob", c.vocab_confusion_prob},
                {"max_length", c.max_length}}},
              {"skeleton", skeleton},
              {"direction", m.parameters().direction},
              {"landmark", m.parameters().landmark}};
  return dump_document(doc);
}

SpeakerModel parse_speaker(std::string_view text) {
  const Json j = parse_document(text, "speaker");
  return guarded("speaker", [&] {
    if (j.value("kind", std::string{}) != "speaker") fail(ErrorCode::kCorrupt, "speaker: wrong document kind");
    SpeakerConfig c;
    const auto& jc = j.at("config");
    c.smoothing = jc.at("smoothing").get<double>();
    c.drop_clause_prob = jc.at("drop_clause_prob").get<double>();
    c.vocab_confusion_prob = jc.at("vocab_confusion_prob").get<double>();
    c.max_length = jc.at("max_length").get<std::size_t>();
    SpeakerParameters p;
    for (const auto& row : j.at("skeleton")) {
      p.skeleton[row.at("key").get<std::uint32_t>()] = row.at("counts").get<std::vector<double>>();
    }
    p.direction = j.at("direction").get<std::vector<double>>();
    p.landmark = j.at("landmark").get<std::vector<double>>();
    try {
      return SpeakerModel(vocab_from_json(j.at("vocabulary")), c, std::move(p));
    } catch (const Error& e) {
      fail(ErrorCode::kCorrupt, std::string("speaker: ") + e.what());
    }
  });
}

std::string serialize_listeners(std::span<const ListenerModel> models) {
  if (models.empty()) fail(ErrorCode::kInvalidArgument, "serialize_listeners: no models");
  Json members = Json::array();
  for (const auto& m : models) {
    const auto& c = m.config();
    Json cfg = {{"learning_rate", c.learning_rate}, {"epochs", c.epochs}, {"l2", c.l2}, {"init_scale", c.init_scale}};
    cfg["max_steps"] = c.max_steps ? Json(*c.max_steps) : Json(nullptr);
    members.push_back({{"name", m.name()}, {"config", cfg}, {"weights", m.weights()}});
  }
  Json doc = {{"version", kFormatVersion},
              {"kind", "listeners"},
              {"vocabulary", vocab_to_json(models.front().vocabulary())},
              {"members", members}};
  return dump_document(doc);
}

std::vector<ListenerModel> parse_listeners(std::string_view text) {
  const Json j = parse_document(text, "listeners");
  return guarded("listeners", [&] {
    if (j.value("kind", std::string{}) != "listeners") fail(ErrorCode::kCorrupt, "listeners: wrong document kind");
    const Vocabulary vocab = vocab_from_json(j.at("vocabulary"));
    std::vector<ListenerModel> out;
    for (const auto& m : j.at("members")) {
      ListenerConfig c;
      const auto& jc = m.at("config");
      c.learning_rate = jc.at("learning_rate").get<double>();
      c.epochs = jc.at("epochs").get<std::size_t>();
      c.l2 = jc.at("l2").get<double>();
      c.init_scale = jc.at("init_scale").get<double>();
      if (!jc.at("max_steps").is_null()) c.max_steps = jc.at("max_steps").get<std::size_t>();
      try {
        out.emplace_back(vocab, c, m.at("weights").get<std::vector<double>>(), m.at("name").get<std::string>());
      } catch (const Error& e) {
        fail(ErrorCode::kCorrupt, std::string("listeners: ") + e.what());
      }
    }
    if (out.empty()) fail(ErrorCode::kCorrupt, "listeners: no members");
    return out;
  });
}

Json corpus_record_to_json(const CorpusRecord& r) {
  return {{"task_id", r.task_id},
          {"world_id", r.world_id},
          {"instruction_tokens", r.instruction_tokens},
          {"intended_path_node_ids", r.intended_path_node_ids},
          {"source", r.source}};
}

CorpusRecord corpus_record_from_json(const Json& j) {
  return guarded("corpus", [&] {
    CorpusRecord r;
    r.task_id = j.at("task_id").get<std::string>();
    r.world_id = j.at("world_id").get<std::string>();
    r.instruction_tokens = j.at("instruction_tokens").get<std::string>();
    r.intended_path_node_ids = j.at("intended_path_node_ids").get<std::vector<NodeId>>();
    r.source = j.at("source").get<std::string>();
    return r;
  });
}

std::string serialize_corpus(std::span<const CorpusRecord> records) {
  std::string out = Json{{"kind", "corpus"}, {"version", kFormatVersion}}.dump() + "\n";
  for (const auto& r : records) out += corpus_record_to_json(r).dump() + "\n";
  return out;
}

std::vector<CorpusRecord> parse_corpus(std::string_view text) {
  std::vector<CorpusRecord> out;
  std::size_t pos = 0;
  bool header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) fail(ErrorCode::kCorrupt, "corpus: truncated last line");
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    if (!header) {
      const Json h = parse_document(line, "corpus");
      if (h.value("kind", std::string{}) != "corpus") fail(ErrorCode::kCorrupt, "corpus: wrong document kind");
      header = true;
      continue;
    }
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::kCorrupt, "corpus: malformed record");
    out.push_back(corpus_record_from_json(j));
  }
  if (!header) fail(ErrorCode::kCorrupt, "corpus: missing header");
  return out;
}

Json episode_to_json(const EpisodeRecord& e) {
  Json j = {{"task_id", e.task_id},
            {"world_id", e.world_id},
            {"source", e.source},
            {"listener", e.listener},
            {"instruction", e.instruction},
            {"intended_path_node_ids", e.intended},
            {"executed_path_node_ids", e.executed},
            {"metrics",
             {{"sr", e.metrics.sr},
              {"spl", e.metrics.spl},
              {"ndtw", e.metrics.ndtw},
              {"sdtw", e.metrics.sdtw},
              {"path_len", e.metrics.path_len}}}};
  if (e.rating) j["rating"] = *e.rating;
  if (e.control_pass) j["control_pass"] = *e.control_pass;
  return j;
}

EpisodeRecord episode_from_json(const Json& j) {
  return guarded("episode", [&] {
    EpisodeRecord e;
    e.task_id = j.at("task_id").get<std::string>();
    e.world_id = j.at("world_id").get<std::string>();
    e.source = j.at("source").get<std::string>();
    e.listener = j.at("listener").get<std::string>();
    e.instruction = j.at("instruction").get<std::string>();
    e.intended = j.at("intended_path_node_ids").get<std::vector<NodeId>>();
    e.executed = j.at("executed_path_node_ids").get<std::vector<NodeId>>();
    const auto& m = j.at("metrics");
    e.metrics = {m.at("sr").get<double>(), m.at("spl").get<double>(), m.at("ndtw").get<double>(),
                 m.at("sdtw").get<double>(), m.at("path_len").get<double>()};
    if (j.contains("rating")) e.rating = j.at("rating").get<int>();
    if (j.contains("control_pass")) e.control_pass = j.at("control_pass").get<bool>();
    return e;
  });
}

Json eval_summary(const EvalReport& r) {
  return {{"speaker", r.speaker}, {"listener", r.listener}, {"seed", r.seed}, {"count", r.count},
          {"sr", r.sr},           {"spl", r.spl},           {"ndtw", r.ndtw}, {"sdtw", r.sdtw}};
}

std::string eval_report_text(const EvalReport& r) {
  std::vector<Json> out;
  append_episodes(out, r);
  Json s = eval_summary(r);
  s["kind"] = "summary";
  s["report"] = "eval";
  out.push_back(std::move(s));
  return lines(out);
}

std::string ppg_report_text(const PPGReport& r) {
  std::vector<Json> out;
  append_episodes(out, r.base);
  append_episodes(out, r.oracle_search);
  append_episodes(out, r.oracle_pragmatic);
  out.push_back({{"kind", "summary"},
                 {"report", "ppg"},
                 {"metric", r.metric},
                 {"oracle_mode", r.oracle_mode},
                 {"rho_base", r.rho_base},
                 {"rho_oracle_search", r.rho_oracle_search},
                 {"rho_oracle_pragmatic", r.rho_oracle_pragmatic},
                 {"ppg_search", r.ppg_search},
                 {"ppg_pragmatic", r.ppg_pragmatic},
                 {"delta_search", r.delta_search},
                 {"delta_pragmatic", r.delta_pragmatic},
                 {"test_search", test_to_json(r.test_search)},
                 {"test_pragmatic", test_to_json(r.test_pragmatic)},
                 {"test_pragmatic_vs_search", test_to_json(r.test_pragmatic_vs_search)},
                 {"systems", {eval_summary(r.base), eval_summary(r.oracle_search), eval_summary(r.oracle_pragmatic)}}});
  return lines(out);
}

std::string gamma_report_text(const GammaEstimate& g) {
  return lines({{{"kind", "summary"},
                 {"report", "gamma"},
                 {"gamma", g.gamma},
                 {"n", g.n},
                 {"episodes", g.episodes},
                 {"successes", g.successes},
                 {"ties_succeed", g.ties_succeed}}});
}

std::string shift_report_text(const ShiftReport& r) {
  std::vector<Json> out;
  Json cells = Json::array();
  for (const auto& c : r.cells) {
    out.push_back({{"kind", "cell"}, {"source", c.source}, {"listener", c.listener}, {"scores", c.scores}});
    cells.push_back({{"source", c.source},
                     {"listener", c.listener},
                     {"agreement", c.agreement},
                     {"delta", c.delta},
                     {"test", test_to_json(c.test)}});
  }
  out.push_back({{"kind", "summary"},
                 {"report", "shift"},
                 {"human", r.human},
                 {"reference_source", r.reference_source},
                 {"sources", r.sources},
                 {"listeners", r.listeners},
                 {"cells", cells}});
  return lines(out);
}

std::string ablation_report_text(const AblationReport& r) {
  std::vector<Json> out;
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    append_episodes(out, row.report);
    rows.push_back({{"scorer", row.scorer}, {"rho", row.rho}, {"delta", row.delta}, {"test", test_to_json(row.test)}});
  }
  out.push_back({{"kind", "summary"}, {"report", "ablate"}, {"rows", rows}});
  return lines(out);
}

Json audit_record(const std::string& task_id, const PragmaticResult& r, const Vocabulary& vocab, const Json& config) {
  Json cands = Json::array();
  for (std::size_t i = 0; i < r.candidates.items.size(); ++i) {
    const auto& c = r.candidates.items[i];
    cands.push_back({{"tokens", to_text(vocab, c.instruction)},
                     {"base_logp", num(c.base_logp)},
                     {"tom_score", r.selection.scores[i]},
                     {"origin", c.origin}});
  }
  return {{"task_id", task_id}, {"candidates", cands}, {"selected_index", r.selection.index}, {"config", config}};
}

Json dataset_params_to_json(const DatasetParams& p) {
  return {{"n_train_worlds", p.n_train_worlds},
          {"n_unseen_worlds", p.n_unseen_worlds},
          {"tasks_per_world", p.tasks_per_world},
          {"refs_per_task", p.refs_per_task},
          {"val_seen_fraction", p.val_seen_fraction},
          {"node_count", p.node_count},
          {"catalog_size", p.catalog_size},
          {"min_len", p.bounds.min_len},
          {"max_len", p.bounds.max_len},
          {"seed", p.seed}};
}

DatasetParams dataset_params_from_json(const Json& j) {
  DatasetParams p;
  p.n_train_worlds = j.value("n_train_worlds", p.n_train_worlds);
  p.n_unseen_worlds = j.value("n_unseen_worlds", p.n_unseen_worlds);
  p.tasks_per_world = j.value("tasks_per_world", p.tasks_per_world);
  p.refs_per_task = j.value("refs_per_task", p.refs_per_task);
  p.val_seen_fraction = j.value("val_seen_fraction", p.val_seen_fraction);
  p.node_count = j.value("node_count", p.node_count);
  p.catalog_size = j.value("catalog_size", p.catalog_size);
  p.bounds.min_len = j.value("min_len", p.bounds.min_len);
  p.bounds.max_len = j.value("max_len", p.bounds.max_len);
  p.seed = j.value("seed", p.seed);
  return p;
}

namespace {

std::string numbered(const char* prefix, std::size_t i, int width) {
  std::ostringstream out;
  out << prefix << std::setw(width) << std::setfill('0') << i;
  return out.str();
}

}  // namespace

DatasetBundle build_dataset(const DatasetParams& p, const GrammarConfig& grammar_config) {
  if (p.n_train_worlds < 1 || p.n_unseen_worlds < 1 || p.tasks_per_world < 1 || p.refs_per_task < 1) {
    fail(ErrorCode::kInvalidArgument, "build_dataset: all counts must be at least 1");
  }
  if (!(p.val_seen_fraction >= 0.0 && p.val_seen_fraction < 1.0)) {
    fail(ErrorCode::kInvalidArgument, "build_dataset: val_seen_fraction must lie in [0,1)");
  }
  GrammarConfig gc = grammar_config;
  gc.catalog_size = p.catalog_size;
  const Grammar grammar(gc);
  if (p.bounds.max_len > grammar.max_moves() + 1) {
    fail(ErrorCode::kInfeasible, "build_dataset: max_len exceeds what the grammar can describe");
  }

  DatasetBundle b;
  b.params = p;
  b.grammar = gc;
  for (const char* s : kSplits) b.splits[s];
  const auto val_seen = static_cast<std::size_t>(std::floor(p.val_seen_fraction * p.tasks_per_world));

  const std::size_t total_worlds = std::size_t{p.n_train_worlds} + p.n_unseen_worlds;
  for (std::size_t w = 0; w < total_worlds; ++w) {
    const bool unseen = w >= p.n_train_worlds;
    const std::string wid = unseen ? numbered("u", w - p.n_train_worlds, 3) : numbered("w", w, 3);
    auto world = std::make_shared<const World>(
        World::generate({p.node_count, p.catalog_size, derive_seed(p.seed, 1, w)}));
    (unseen ? b.unseen_worlds : b.train_worlds).push_back(wid);
    for (std::size_t t = 0; t < p.tasks_per_world; ++t) {
      const std::string tid = wid + "-" + numbered("t", t, 3);
      const char* split = unseen ? "val_unseen" : (t < val_seen ? "val_seen" : "train");
      // A task whose moves cannot all be described unambiguously is redrawn.
      for (std::uint64_t attempt = 0;; ++attempt) {
        if (attempt == 64) fail(ErrorCode::kInfeasible, "build_dataset: cannot describe tasks in world " + wid);
        const Task task = sample_task(*world, p.bounds, derive_seed(p.seed, 2, w, t, attempt), tid, wid);
        std::vector<CorpusRecord> recs;
        try {
          for (std::size_t r = 0; r < p.refs_per_task; ++r) {
            const Instruction u = reference_speak(grammar, *world, task, derive_seed(p.seed, 3, w, t, attempt, r));
            recs.push_back({tid, wid, to_text(grammar.vocabulary(), u), task.intended.nodes(), "reference"});
          }
        } catch (const Error& e) {
          if (e.code() == ErrorCode::kInfeasible) continue;
          throw;
        }
        auto& dst = b.splits[split];
        dst.insert(dst.end(), recs.begin(), recs.end());
        break;
      }
    }
    b.worlds.emplace(wid, std::move(world));
  }
  return b;
}

DataRoot::DataRoot(fs::path root) : root_(std::move(root)) {}

DataRoot DataRoot::resolve(const std::optional<std::string>& explicit_root) {
  if (explicit_root && !explicit_root->empty()) return DataRoot(*explicit_root);
  if (const char* env = std::getenv("PRAGNAV_DATA_ROOT"); env && *env) return DataRoot(env);
  return DataRoot("data");
}

void DataRoot::ensure_layout() const {
  for (const auto& d : {worlds(), corpus(), models(), runs(), sessions()}) fs::create_directories(d);
}

void save_dataset(const DataRoot& root, const DatasetBundle& b) {
  root.ensure_layout();
  Json worlds = Json::object();
  for (const auto& [id, w] : b.worlds) {
    const std::string text = serialize_world(*w);
    const std::string file = "worlds/" + id + ".json";
    write_file_atomic(root.path() / file, text);
    worlds[id] = {{"file", file}, {"sha256", sha256_hex(text)}};
  }
  Json splits = Json::object();
  for (const auto& [name, recs] : b.splits) {
    const std::string text = serialize_corpus(recs);
    const std::string file = "corpus/" + name + ".jsonl";
    write_file_atomic(root.path() / file, text);
    splits[name] = {{"file", file}, {"sha256", sha256_hex(text)}, {"records", recs.size()}};
  }
  Json manifest = {{"version", kFormatVersion},
                   {"kind", "manifest"},
                   {"params", dataset_params_to_json(b.params)},
                   {"grammar", grammar_to_json(b.grammar)},
                   {"train_worlds", b.train_worlds},
                   {"unseen_worlds", b.unseen_worlds},
                   {"worlds", worlds},
                   {"splits", splits}};
  write_file_atomic(root.manifest(), dump_document(manifest));
}

DatasetBundle load_dataset(const DataRoot& root) {
  const Json m = parse_document(read_file(root.manifest()), "manifest");
  return guarded("manifest", [&] {
    DatasetBundle b;
    b.params = dataset_params_from_json(m.at("params"));
    b.grammar = grammar_from_json(m.at("grammar"));
    b.train_worlds = m.at("train_worlds").get<std::vector<std::string>>();
    b.unseen_worlds = m.at("unseen_worlds").get<std::vector<std::string>>();
    auto checked = [&](const Json& entry) {
      const std::string text = read_file(root.path() / entry.at("file").get<std::string>());
      if (sha256_hex(text) != entry.at("sha256").get<std::string>()) {
        fail(ErrorCode::kCorrupt, "dataset file '" + entry.at("file").get<std::string>() + "' does not match manifest");
      }
      return text;
    };
    for (const auto& [id, entry] : m.at("worlds").items()) {
      b.worlds.emplace(id, std::make_shared<const World>(parse_world(checked(entry))));
    }
    for (const auto& [name, entry] : m.at("splits").items()) b.splits[name] = parse_corpus(checked(entry));
    return b;
  });
}

std::vector<EvalTask> tasks_from_records(const DatasetBundle& bundle, std::span<const CorpusRecord> records,
                                         const Vocabulary& vocab) {
  std::vector<EvalTask> out;
  std::map<std::string, std::size_t> index;
  for (const auto& r : records) {
    const std::string key = r.world_id + "/" + r.task_id;
    auto it = index.find(key);
    if (it == index.end()) {
      const auto w = bundle.worlds.find(r.world_id);
      if (w == bundle.worlds.end()) fail(ErrorCode::kNotFound, "unknown world '" + r.world_id + "'");
      EvalTask t;
      t.world = w->second;
      t.task.id = r.task_id;
      t.task.world_id = r.world_id;
      t.task.intended = make_trajectory(*t.world, r.intended_path_node_ids, true);
      it = index.emplace(key, out.size()).first;
      out.push_back(std::move(t));
    }
    auto& t = out[it->second];
    if (t.task.intended.nodes() != r.intended_path_node_ids) {
      fail(ErrorCode::kCorrupt, "task '" + r.task_id + "' has conflicting paths");
    }
    t.references.push_back(encode(vocab, r.instruction_tokens));
  }
  return out;
}

Json run_record_to_json(const RunRecord& r) {
  return {{"version", kFormatVersion},   {"kind", "run"},
          {"run_id", r.run_id},          {"command", r.command},
          {"config", r.config},          {"input_hashes", r.input_hashes},
          {"report_path", r.report_path}, {"report_sha256", r.report_sha256},
          {"started_at", r.started_at},  {"finished_at", r.finished_at}};
}

RunRecord run_record_from_json(const Json& j) {
  return guarded("run", [&] {
    RunRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.command = j.at("command").get<std::string>();
    r.config = j.at("config");
    r.input_hashes = j.at("input_hashes").get<std::map<std::string, std::string>>();
    r.report_path = j.at("report_path").get<std::string>();
    r.report_sha256 = j.at("report_sha256").get<std::string>();
    r.started_at = j.at("started_at").get<std::string>();
    r.finished_at = j.at("finished_at").get<std::string>();
    return r;
  });
}

std::string write_run(const DataRoot& root, RunRecord record) {
  static std::mutex mu;
  std::lock_guard lock(mu);
  fs::create_directories(root.runs());
  for (std::size_t i = 1;; ++i) {
    const std::string id = numbered("run-", i, 6);
    const fs::path path = root.runs() / (id + ".json");
    // "x" fails if the file exists, which makes allocation safe across processes.
    std::FILE* f = std::fopen(path.c_str(), "wx");
    if (!f) {
      if (fs::exists(path)) continue;
      fail(ErrorCode::kIo, "cannot create run record '" + path.string() + "'");
    }
    record.run_id = id;
    const std::string text = dump_document(run_record_to_json(record));
    const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
    std::fclose(f);
    if (!ok) fail(ErrorCode::kIo, "short write to '" + path.string() + "'");
    return id;
  }
}

RunRecord read_run(const DataRoot& root, const std::string& run_id) {
  if (run_id.empty() || run_id.find_first_of("/\\.") != std::string::npos) {
    fail(ErrorCode::kInvalidArgument, "invalid run id");
  }
  const fs::path path = root.runs() / (run_id + ".json");
  if (!fs::exists(path)) fail(ErrorCode::kNotFound, "unknown run '" + run_id + "'");
  return run_record_from_json(parse_document(read_file(path), "run"));
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace pragnav
