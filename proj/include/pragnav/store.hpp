#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pragnav/harness.hpp"
#include "pragnav/listener.hpp"
#include "pragnav/speaker.hpp"
#include "pragnav/world.hpp"

namespace pragnav {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file and a rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Parses a versioned document; throws kCorrupt on malformed text and
/// kVersionMismatch on an unknown version.
Json parse_document(std::string_view text, std::string_view what);
std::string dump_document(const Json& doc);

Json world_to_json(const World& w);
World world_from_json(const Json& j);
std::string serialize_world(const World& w);
World parse_world(std::string_view text);

Json grammar_to_json(const GrammarConfig& g);
GrammarConfig grammar_from_json(const Json& j);

std::string serialize_speaker(const SpeakerModel& m);
SpeakerModel parse_speaker(std::string_view text);

std::string serialize_listeners(std::span<const ListenerModel> models);
std::vector<ListenerModel> parse_listeners(std::string_view text);

struct CorpusRecord {
  std::string task_id;
  std::string world_id;
  std::string instruction_tokens;  // space-joined
  std::vector<NodeId> intended_path_node_ids;
  std::string source = "reference";
  bool operator==(const CorpusRecord&) const = default;
};

Json corpus_record_to_json(const CorpusRecord& r);
CorpusRecord corpus_record_from_json(const Json& j);
std::string serialize_corpus(std::span<const CorpusRecord> records);
std::vector<CorpusRecord> parse_corpus(std::string_view text);

Json episode_to_json(const EpisodeRecord& e);
EpisodeRecord episode_from_json(const Json& j);

/// Report files: one line per episode, then one summary line.
std::string eval_report_text(const EvalReport& r);
std::string ppg_report_text(const PPGReport& r);
std::string gamma_report_text(const GammaEstimate& g);
std::string shift_report_text(const ShiftReport& r);
std::string ablation_report_text(const AblationReport& r);
Json eval_summary(const EvalReport& r);

Json audit_record(const std::string& task_id, const PragmaticResult& r, const Vocabulary& vocab, const Json& config);

struct DatasetParams {
  std::uint32_t n_train_worlds = 60;
  std::uint32_t n_unseen_worlds = 10;
  std::uint32_t tasks_per_world = 80;
  std::uint32_t refs_per_task = 3;
  double val_seen_fraction = 0.1;
  std::uint32_t node_count = 40;
  std::uint32_t catalog_size = 12;
  TaskBounds bounds;
  std::uint64_t seed = 0;
};

Json dataset_params_to_json(const DatasetParams& p);
DatasetParams dataset_params_from_json(const Json& j);

struct DatasetBundle {
  DatasetParams params;
  GrammarConfig grammar;
  std::map<std::string, std::shared_ptr<const World>> worlds;
  std::vector<std::string> train_worlds;
  std::vector<std::string> unseen_worlds;
  std::map<std::string, std::vector<CorpusRecord>> splits;  // train, val_seen, val_unseen
};

inline const char* const kSplits[] = {"train", "val_seen", "val_unseen"};

DatasetBundle build_dataset(const DatasetParams& params, const GrammarConfig& grammar = {});

/// Data root layout: worlds/ corpus/ models/ runs/ sessions/.
class DataRoot {
 public:
  explicit DataRoot(std::filesystem::path root);
  /// `explicit_root` if given, else $PRAGNAV_DATA_ROOT, else ./data.
  static DataRoot resolve(const std::optional<std::string>& explicit_root);

  const std::filesystem::path& path() const { return root_; }
  std::filesystem::path worlds() const { return root_ / "worlds"; }
  std::filesystem::path corpus() const { return root_ / "corpus"; }
  std::filesystem::path models() const { return root_ / "models"; }
  std::filesystem::path runs() const { return root_ / "runs"; }
  std::filesystem::path sessions() const { return root_ / "sessions"; }
  std::filesystem::path manifest() const { return root_ / "manifest.json"; }
  void ensure_layout() const;

 private:
  std::filesystem::path root_;
};

/// Writes worlds, corpus splits and the manifest (with file hashes).
void save_dataset(const DataRoot& root, const DatasetBundle& bundle);
DatasetBundle load_dataset(const DataRoot& root);

/// Joins corpus records with their worlds; records of one task are merged and
/// their instructions become the task's references, in file order.
std::vector<EvalTask> tasks_from_records(const DatasetBundle& bundle, std::span<const CorpusRecord> records,
                                         const Vocabulary& vocab);

struct RunRecord {
  std::string run_id;
  std::string command;
  Json config;
  std::map<std::string, std::string> input_hashes;
  std::string report_path;
  std::string report_sha256;
  std::string started_at;
  std::string finished_at;
};

Json run_record_to_json(const RunRecord& r);
RunRecord run_record_from_json(const Json& j);
/// Allocates the next run id atomically and writes the record; never overwrites.
std::string write_run(const DataRoot& root, RunRecord record);
RunRecord read_run(const DataRoot& root, const std::string& run_id);

std::string utc_timestamp();

}  // namespace pragnav
