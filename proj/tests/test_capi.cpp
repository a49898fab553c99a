#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "pragnav/pragnav.h"

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("pragnav_capi_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Tiny end-to-end data root shared by the model tests.
struct Pipeline {
  fs::path dir;
  fs::path root;
  fs::path config;

  Pipeline() : dir(fresh_dir("pipeline")), root(dir / "data"), config(dir / "config.json") {
    std::ofstream(config) << R"({"data_root": ")" << root.string() << R"(",
      "dataset": {"n_train_worlds": 3, "n_unseen_worlds": 1, "tasks_per_world": 6, "refs_per_task": 2,
                  "node_count": 20, "catalog_size": 8},
      "listener": {"K": 2, "subset_fraction": 0.9, "epochs": 2},
      "pragmatic": {"N": 3, "M": 2, "psi": "ndtw"},
      "eval": {"split": "val_unseen", "max_tasks": 4, "systems": ["reference", "base", "pragmatic"]}})";
  }

  pragnav_status run(const char* command, std::uint64_t seed, const fs::path& out, std::string* id = nullptr) {
    char* run_id = nullptr;
    const auto st = pragnav_run(command, config.string().c_str(), seed, out.string().c_str(), &run_id);
    if (run_id && id) *id = run_id;
    pragnav_string_free(run_id);
    return st;
  }
};

Pipeline& pipeline() {
  static Pipeline p;
  static const bool ready = [] {
    return p.run("build", 1, p.dir / "build.json") == PRAGNAV_OK &&
           p.run("train", 1, p.dir / "train.json") == PRAGNAV_OK;
  }();
  REQUIRE(ready);
  return p;
}

}  // namespace

TEST_CASE("version and last error") {
  CHECK(std::strlen(pragnav_version()) > 0);
  pragnav_world* w = nullptr;
  CHECK(pragnav_world_generate(20, 8, 1, nullptr) == PRAGNAV_E_INVALID_ARGUMENT);
  CHECK(std::strlen(pragnav_last_error()) > 0);
  REQUIRE(pragnav_world_generate(20, 8, 1, &w) == PRAGNAV_OK);
  CHECK(std::strlen(pragnav_last_error()) == 0);
  pragnav_world_free(w);
  pragnav_world_free(nullptr);
  pragnav_string_free(nullptr);
}

TEST_CASE("world: generate, serialize, save and load round-trip") {
  pragnav_world* w = nullptr;
  REQUIRE(pragnav_world_generate(25, 10, 42, &w) == PRAGNAV_OK);
  CHECK(pragnav_world_node_count(w) == 25);

  char* text = nullptr;
  REQUIRE(pragnav_world_serialize(w, &text) == PRAGNAV_OK);
  const std::string first = text;
  pragnav_string_free(text);

  const auto dir = fresh_dir("world");
  const auto file = (dir / "w.json").string();
  REQUIRE(pragnav_world_save(w, file.c_str()) == PRAGNAV_OK);
  pragnav_world* back = nullptr;
  REQUIRE(pragnav_world_load(file.c_str(), &back) == PRAGNAV_OK);
  REQUIRE(pragnav_world_serialize(back, &text) == PRAGNAV_OK);
  CHECK(first == text);
  pragnav_string_free(text);

  double d = -1.0;
  REQUIRE(pragnav_world_geodesic(w, 0, 0, &d) == PRAGNAV_OK);
  CHECK(d == 0.0);
  double ab = 0.0, ba = 0.0;
  REQUIRE(pragnav_world_geodesic(w, 0, 7, &ab) == PRAGNAV_OK);
  REQUIRE(pragnav_world_geodesic(w, 7, 0, &ba) == PRAGNAV_OK);
  CHECK(ab > 0.0);
  CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
  CHECK(pragnav_world_geodesic(w, 0, 25, &d) == PRAGNAV_E_NOT_FOUND);

  pragnav_world_free(back);
  pragnav_world_free(w);
}

TEST_CASE("world: load errors map to status codes") {
  pragnav_world* w = nullptr;
  const auto dir = fresh_dir("world_errors");
  CHECK(pragnav_world_load((dir / "missing.json").string().c_str(), &w) == PRAGNAV_E_NOT_FOUND);
  CHECK(w == nullptr);
  std::ofstream(dir / "bad.json") << "{not json";
  CHECK(pragnav_world_load((dir / "bad.json").string().c_str(), &w) == PRAGNAV_E_CORRUPT);
  CHECK(pragnav_world_load(nullptr, &w) == PRAGNAV_E_INVALID_ARGUMENT);
}

TEST_CASE("world: sample_path reports the full length when the buffer is short") {
  pragnav_world* w = nullptr;
  REQUIRE(pragnav_world_generate(30, 10, 5, &w) == PRAGNAV_OK);
  std::vector<std::uint32_t> buf(64);
  std::size_t len = 0;
  REQUIRE(pragnav_world_sample_path(w, 4, 6, 9, buf.data(), buf.size(), &len) == PRAGNAV_OK);
  CHECK(len >= 4);
  CHECK(len <= 6);
  for (std::size_t i = 0; i < len; ++i) CHECK(buf[i] < 30);

  std::size_t short_len = 0;
  std::uint32_t tiny[2] = {0, 0};
  CHECK(pragnav_world_sample_path(w, 4, 6, 9, tiny, 2, &short_len) == PRAGNAV_E_BUFFER_TOO_SMALL);
  CHECK(short_len == len);
  CHECK(pragnav_world_sample_path(w, 4, 6, 9, nullptr, 0, &short_len) == PRAGNAV_E_BUFFER_TOO_SMALL);
  CHECK(short_len == len);

  // Same seed, same path.
  std::vector<std::uint32_t> again(64);
  std::size_t len2 = 0;
  REQUIRE(pragnav_world_sample_path(w, 4, 6, 9, again.data(), again.size(), &len2) == PRAGNAV_OK);
  CHECK(len2 == len);
  CHECK(std::equal(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(len), again.begin()));
  CHECK(pragnav_world_sample_path(w, 6, 4, 9, buf.data(), buf.size(), &len) == PRAGNAV_E_INFEASIBLE);
  pragnav_world_free(w);
}

TEST_CASE("run: unknown command and missing config") {
  Pipeline p;
  CHECK(p.run("frobnicate", 1, p.dir / "x.json") == PRAGNAV_E_INVALID_ARGUMENT);
  char* id = nullptr;
  const auto missing = (p.dir / "nope.json").string();
  CHECK(pragnav_run("build", missing.c_str(), 1, (p.dir / "x.json").string().c_str(), &id) == PRAGNAV_E_NOT_FOUND);
  CHECK(id == nullptr);
  CHECK(pragnav_run(nullptr, missing.c_str(), 1, nullptr, nullptr) == PRAGNAV_E_INVALID_ARGUMENT);
}

TEST_CASE("run: eval reports are reproducible and get distinct run ids") {
  auto& p = pipeline();
  std::string a, b;
  REQUIRE(p.run("eval", 7, p.dir / "eval_a.json", &a) == PRAGNAV_OK);
  REQUIRE(p.run("eval", 7, p.dir / "eval_b.json", &b) == PRAGNAV_OK);
  CHECK(!a.empty());
  CHECK(a != b);
  CHECK(fs::exists(p.root / "runs" / (a + ".json")));
  const auto ra = slurp(p.dir / "eval_a.json");
  CHECK(!ra.empty());
  CHECK(ra == slurp(p.dir / "eval_b.json"));
}

TEST_CASE("speaker and listeners through the C API") {
  auto& p = pipeline();
  pragnav_speaker* s = nullptr;
  pragnav_listeners* ls = nullptr;
  pragnav_world* w = nullptr;
  REQUIRE(pragnav_speaker_load((p.root / "models" / "speaker.json").string().c_str(), &s) == PRAGNAV_OK);
  REQUIRE(pragnav_listeners_load((p.root / "models" / "listeners.json").string().c_str(), &ls) == PRAGNAV_OK);
  REQUIRE(pragnav_world_load((p.root / "worlds" / "u000.json").string().c_str(), &w) == PRAGNAV_OK);
  CHECK(pragnav_listeners_count(ls) == 2);

  std::vector<std::uint32_t> path(32);
  std::size_t len = 0;
  REQUIRE(pragnav_world_sample_path(w, 3, 5, 11, path.data(), path.size(), &len) == PRAGNAV_OK);

  char* greedy = nullptr;
  REQUIRE(pragnav_speaker_infer(s, w, path.data(), len, 1, &greedy) == PRAGNAV_OK);
  const std::string greedy_text = greedy;
  pragnav_string_free(greedy);
  CHECK(!greedy_text.empty());

  char* beam = nullptr;
  REQUIRE(pragnav_speaker_infer(s, w, path.data(), len, 4, &beam) == PRAGNAV_OK);
  double lg = 0.0, lb = 0.0;
  REQUIRE(pragnav_speaker_score(s, w, path.data(), len, greedy_text.c_str(), &lg) == PRAGNAV_OK);
  REQUIRE(pragnav_speaker_score(s, w, path.data(), len, beam, &lb) == PRAGNAV_OK);
  pragnav_string_free(beam);
  CHECK(std::isfinite(lg));
  CHECK(lg <= 0.0);
  CHECK(lb >= lg - 1e-9);

  char* s1 = nullptr;
  char* s2 = nullptr;
  REQUIRE(pragnav_speaker_sample(s, w, path.data(), len, 3, &s1) == PRAGNAV_OK);
  REQUIRE(pragnav_speaker_sample(s, w, path.data(), len, 3, &s2) == PRAGNAV_OK);
  CHECK(std::string(s1) == s2);
  pragnav_string_free(s1);
  pragnav_string_free(s2);

  CHECK(pragnav_speaker_score(s, w, path.data(), len, "zzqx unknownword", &lg) == PRAGNAV_E_INVALID_ARGUMENT);
  CHECK(pragnav_speaker_infer(s, w, path.data(), 0, 1, &greedy) == PRAGNAV_E_INVALID_ARGUMENT);
  CHECK(pragnav_speaker_set_knobs(s, 1.5, 0.0) == PRAGNAV_E_INVALID_ARGUMENT);
  REQUIRE(pragnav_speaker_set_knobs(s, 0.0, 0.2) == PRAGNAV_OK);

  const auto saved = (p.dir / "speaker_copy.json").string();
  REQUIRE(pragnav_speaker_save(s, saved.c_str()) == PRAGNAV_OK);
  pragnav_speaker* s_back = nullptr;
  REQUIRE(pragnav_speaker_load(saved.c_str(), &s_back) == PRAGNAV_OK);
  pragnav_speaker_free(s_back);

  std::vector<std::uint32_t> walk(64);
  std::size_t walk_len = 0;
  REQUIRE(pragnav_listener_follow(ls, 0, w, greedy_text.c_str(), path[0], 5, walk.data(), walk.size(), &walk_len) ==
          PRAGNAV_OK);
  CHECK(walk_len >= 1);
  CHECK(walk[0] == path[0]);
  std::vector<std::uint32_t> walk2(64);
  std::size_t walk2_len = 0;
  REQUIRE(pragnav_listener_follow(ls, 0, w, greedy_text.c_str(), path[0], 5, walk2.data(), walk2.size(),
                                  &walk2_len) == PRAGNAV_OK);
  CHECK(walk2_len == walk_len);
  CHECK(std::equal(walk.begin(), walk.begin() + static_cast<std::ptrdiff_t>(walk_len), walk2.begin()));
  CHECK(pragnav_listener_follow(ls, 2, w, greedy_text.c_str(), path[0], 5, walk.data(), walk.size(), &walk_len) ==
        PRAGNAV_E_INVALID_ARGUMENT);

  pragnav_world_free(w);
  pragnav_listeners_free(ls);
  pragnav_speaker_free(s);
}

TEST_CASE("server: starts on a free port and stops") {
  auto& p = pipeline();
  pragnav_server* srv = nullptr;
  int port = 0;
  REQUIRE(pragnav_server_start(p.root.string().c_str(), "127.0.0.1", 0, &srv, &port) == PRAGNAV_OK);
  CHECK(port > 0);
  pragnav_server_stop(srv);
  pragnav_server_stop(nullptr);

  const auto empty = fresh_dir("server_empty");
  CHECK(pragnav_server_start(empty.string().c_str(), "127.0.0.1", 0, &srv, &port) == PRAGNAV_E_NOT_FOUND);
  CHECK(pragnav_server_start(p.root.string().c_str(), "127.0.0.1", 70000, &srv, &port) ==
        PRAGNAV_E_INVALID_ARGUMENT);
}
