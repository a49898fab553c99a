#include "pragnav/pragnav.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "pragnav/error.hpp"
#include "pragnav/listener.hpp"
#include "pragnav/pipeline.hpp"
#include "pragnav/session.hpp"
#include "pragnav/speaker.hpp"
#include "pragnav/store.hpp"
#include "pragnav/world.hpp"

struct pragnav_world {
  std::shared_ptr<const pragnav::World> world;
};

struct pragnav_speaker {
  pragnav::SpeakerModel model;
};

struct pragnav_listeners {
  std::vector<pragnav::ListenerModel> models;
};

struct pragnav_server {
  std::unique_ptr<pragnav::SessionServer> server;
};

namespace {

thread_local std::string g_last_error;

struct BufferTooSmall : std::exception {
  const char* what() const noexcept override { return "path buffer too small"; }
};

pragnav_status to_status(pragnav::ErrorCode code) {
  switch (code) {
    case pragnav::ErrorCode::kInvalidArgument: return PRAGNAV_E_INVALID_ARGUMENT;
    case pragnav::ErrorCode::kNotFound: return PRAGNAV_E_NOT_FOUND;
    case pragnav::ErrorCode::kInfeasible: return PRAGNAV_E_INFEASIBLE;
    case pragnav::ErrorCode::kCorrupt: return PRAGNAV_E_CORRUPT;
    case pragnav::ErrorCode::kVersionMismatch: return PRAGNAV_E_VERSION_MISMATCH;
    case pragnav::ErrorCode::kIo: return PRAGNAV_E_IO;
    case pragnav::ErrorCode::kInvalidState: return PRAGNAV_E_INVALID_STATE;
    case pragnav::ErrorCode::kUnsupported: return PRAGNAV_E_UNSUPPORTED;
  }
  return PRAGNAV_E_INTERNAL;
}

template <class F>
pragnav_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return PRAGNAV_OK;
  } catch (const pragnav::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const BufferTooSmall& e) {
    g_last_error = e.what();
    return PRAGNAV_E_BUFFER_TOO_SMALL;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PRAGNAV_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PRAGNAV_E_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return PRAGNAV_E_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) pragnav::fail(pragnav::ErrorCode::kInvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

pragnav::Trajectory trajectory_of(const pragnav_world* world, const uint32_t* path, size_t len) {
  require(world && path && len > 0, "world and a non-empty path are required");
  return pragnav::make_trajectory(*world->world, std::span<const pragnav::NodeId>(path, len), true);
}

void copy_path(const std::vector<pragnav::NodeId>& nodes, uint32_t* out, size_t cap, size_t* out_len) {
  require(out_len != nullptr, "out_len is required");
  *out_len = nodes.size();
  if (nodes.size() > cap || (!out && !nodes.empty())) throw BufferTooSmall();
  std::copy(nodes.begin(), nodes.end(), out);
}

struct ServerParts {
  std::shared_ptr<pragnav::SessionManager> manager;
  pragnav::SessionResolver resolver;
  pragnav::DataRoot root;
};

ServerParts server_parts(const char* data_root) {
  std::optional<std::string> explicit_root;
  if (data_root) explicit_root = data_root;
  auto root = pragnav::DataRoot::resolve(explicit_root);
  root.ensure_layout();
  auto bundle = std::make_shared<const pragnav::DatasetBundle>(pragnav::load_dataset(root));
  std::shared_ptr<const pragnav::SpeakerModel> speaker;
  if (std::filesystem::exists(root.models() / "speaker.json")) speaker = pragnav::load_models(root).speaker;
  pragnav::Grammar grammar(bundle->grammar);
  auto manager = std::make_shared<pragnav::SessionManager>(grammar.vocabulary(), pragnav::SessionConfig{},
                                                           pragnav::steady_clock_ms(), root.sessions());
  return {manager, pragnav::dataset_resolver(bundle, speaker), root};
}

}  // namespace

extern "C" {

const char* pragnav_version(void) { return "1.0.0"; }

const char* pragnav_last_error(void) { return g_last_error.c_str(); }

void pragnav_string_free(char* s) { std::free(s); }

pragnav_status pragnav_world_generate(uint32_t node_count, uint32_t catalog_size, uint64_t seed,
                                      pragnav_world** out) {
  return guarded([&] {
    require(out != nullptr, "out is required");
    pragnav::WorldParams p{node_count, catalog_size, seed};
    *out = new pragnav_world{std::make_shared<const pragnav::World>(pragnav::World::generate(p))};
  });
}

pragnav_status pragnav_world_load(const char* path, pragnav_world** out) {
  return guarded([&] {
    require(path && out, "path and out are required");
    *out = new pragnav_world{std::make_shared<const pragnav::World>(pragnav::parse_world(pragnav::read_file(path)))};
  });
}

pragnav_status pragnav_world_save(const pragnav_world* world, const char* path) {
  return guarded([&] {
    require(world && path, "world and path are required");
    pragnav::write_file_atomic(path, pragnav::serialize_world(*world->world));
  });
}

pragnav_status pragnav_world_serialize(const pragnav_world* world, char** out_text) {
  return guarded([&] {
    require(world && out_text, "world and out_text are required");
    *out_text = dup_string(pragnav::serialize_world(*world->world));
  });
}

size_t pragnav_world_node_count(const pragnav_world* world) { return world ? world->world->node_count() : 0; }

pragnav_status pragnav_world_geodesic(const pragnav_world* world, uint32_t a, uint32_t b, double* out) {
  return guarded([&] {
    require(world && out, "world and out are required");
    *out = world->world->geodesic_distance(a, b);
  });
}

pragnav_status pragnav_world_sample_path(const pragnav_world* world, size_t min_len, size_t max_len, uint64_t seed,
                                         uint32_t* out_path, size_t cap, size_t* out_len) {
  return guarded([&] {
    require(world != nullptr, "world is required");
    const auto task = pragnav::sample_task(*world->world, {min_len, max_len}, seed);
    copy_path(task.intended.nodes(), out_path, cap, out_len);
  });
}

void pragnav_world_free(pragnav_world* world) { delete world; }

pragnav_status pragnav_speaker_load(const char* path, pragnav_speaker** out) {
  return guarded([&] {
    require(path && out, "path and out are required");
    *out = new pragnav_speaker{pragnav::parse_speaker(pragnav::read_file(path))};
  });
}

pragnav_status pragnav_speaker_save(const pragnav_speaker* speaker, const char* path) {
  return guarded([&] {
    require(speaker && path, "speaker and path are required");
    pragnav::write_file_atomic(path, pragnav::serialize_speaker(speaker->model));
  });
}

pragnav_status pragnav_speaker_set_knobs(pragnav_speaker* speaker, double drop_clause_prob,
                                         double vocab_confusion_prob) {
  return guarded([&] {
    require(speaker != nullptr, "speaker is required");
    speaker->model = speaker->model.with_knobs(drop_clause_prob, vocab_confusion_prob);
  });
}

pragnav_status pragnav_speaker_infer(const pragnav_speaker* speaker, const pragnav_world* world,
                                     const uint32_t* path, size_t path_len, size_t beam_width, char** out_text) {
  return guarded([&] {
    require(speaker && out_text, "speaker and out_text are required");
    const auto& m = speaker->model;
    const auto steps = pragnav::step_features(m.vocabulary(), trajectory_of(world, path, path_len));
    const auto strategy = beam_width <= 1 ? pragnav::DecodeStrategy::greedy() : pragnav::DecodeStrategy::beam(beam_width);
    *out_text = dup_string(pragnav::to_text(m.vocabulary(), m.infer(steps, strategy)));
  });
}

pragnav_status pragnav_speaker_sample(const pragnav_speaker* speaker, const pragnav_world* world,
                                      const uint32_t* path, size_t path_len, uint64_t seed, char** out_text) {
  return guarded([&] {
    require(speaker && out_text, "speaker and out_text are required");
    const auto& m = speaker->model;
    const auto steps = pragnav::step_features(m.vocabulary(), trajectory_of(world, path, path_len));
    *out_text = dup_string(pragnav::to_text(m.vocabulary(), m.sample(steps, seed)));
  });
}

pragnav_status pragnav_speaker_score(const pragnav_speaker* speaker, const pragnav_world* world,
                                     const uint32_t* path, size_t path_len, const char* text, double* out_logp) {
  return guarded([&] {
    require(speaker && text && out_logp, "speaker, text and out_logp are required");
    const auto& m = speaker->model;
    const auto steps = pragnav::step_features(m.vocabulary(), trajectory_of(world, path, path_len));
    *out_logp = m.score(steps, pragnav::encode(m.vocabulary(), text));
  });
}

void pragnav_speaker_free(pragnav_speaker* speaker) { delete speaker; }

pragnav_status pragnav_listeners_load(const char* path, pragnav_listeners** out) {
  return guarded([&] {
    require(path && out, "path and out are required");
    *out = new pragnav_listeners{pragnav::parse_listeners(pragnav::read_file(path))};
  });
}

size_t pragnav_listeners_count(const pragnav_listeners* listeners) {
  return listeners ? listeners->models.size() : 0;
}

pragnav_status pragnav_listener_follow(const pragnav_listeners* listeners, size_t member, const pragnav_world* world,
                                       const char* text, uint32_t start, uint64_t seed, uint32_t* out_path,
                                       size_t cap, size_t* out_len) {
  return guarded([&] {
    require(listeners && world && text, "listeners, world and text are required");
    require(member < listeners->models.size(), "listener index out of range");
    require(world->world->contains(start), "start node is not in the world");
    const auto& m = listeners->models[member];
    const auto e = m.follow(*world->world, pragnav::encode_lenient(m.vocabulary(), text), start, seed);
    copy_path(e.nodes(), out_path, cap, out_len);
  });
}

void pragnav_listeners_free(pragnav_listeners* listeners) { delete listeners; }

pragnav_status pragnav_run(const char* command, const char* config_path, uint64_t seed, const char* out_path,
                           char** out_run_id) {
  return guarded([&] {
    require(command && config_path && out_path, "command, config_path and out_path are required");
    pragnav::Json config;
    try {
      config = pragnav::Json::parse(pragnav::read_file(config_path));
    } catch (const pragnav::Json::exception& e) {
      pragnav::fail(pragnav::ErrorCode::kInvalidArgument, std::string("config: ") + e.what());
    }
    const auto id = pragnav::run_command(command, config, seed, out_path);
    if (out_run_id) *out_run_id = dup_string(id);
  });
}

pragnav_status pragnav_server_start(const char* data_root, const char* host, int port, pragnav_server** out,
                                    int* out_port) {
  return guarded([&] {
    require(out != nullptr, "out is required");
    require(port >= 0 && port < 65536, "port out of range");
    auto parts = server_parts(data_root);
    auto server = std::make_unique<pragnav::SessionServer>(parts.manager, parts.resolver, parts.root);
    const int bound = server->start(host ? host : "127.0.0.1", port);
    if (out_port) *out_port = bound;
    *out = new pragnav_server{std::move(server)};
  });
}

pragnav_status pragnav_server_run(const char* data_root, const char* host, int port) {
  return guarded([&] {
    require(port >= 0 && port < 65536, "port out of range");
    auto parts = server_parts(data_root);
    pragnav::SessionServer server(parts.manager, parts.resolver, parts.root);
    server.run(host ? host : "127.0.0.1", port);
  });
}

void pragnav_server_stop(pragnav_server* server) {
  if (!server) return;
  server->server->stop();
  delete server;
}

}  // extern "C"
