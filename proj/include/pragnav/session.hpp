#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pragnav/harness.hpp"
#include "pragnav/store.hpp"

namespace pragnav {

enum class SessionStatus : std::uint8_t { kActive, kFinished, kExpired };

const char* status_name(SessionStatus s);

/// What a new session shows: a task and the instruction one speaker system
/// produced for it.
struct SessionSpec {
  EvalTask task;
  Instruction instruction;
  std::string source;
  bool control = false;
};

struct SessionEvent {
  std::int64_t at_ms = 0;
  Action action;
};

struct SessionConfig {
  std::chrono::milliseconds idle_timeout{30 * 60 * 1000};
  MetricConfig metric;
  std::optional<std::size_t> max_steps;  // default: 2 * clauses + 5
};

/// Milliseconds on some monotonic clock.
using SessionClock = std::function<std::int64_t()>;
SessionClock steady_clock_ms();

/// Live instruction-following sessions. Each session is driven by one logical
/// writer: requests for the same session are serialized.
class SessionManager {
 public:
  SessionManager(Vocabulary vocab, SessionConfig config, SessionClock clock,
                 std::optional<std::filesystem::path> record_dir);

  std::string create(SessionSpec spec);
  /// Creates a batch; exactly one spec must be the control task.
  std::vector<std::string> create_batch(std::vector<SessionSpec> specs);

  Json view(const std::string& id);
  Json act(const std::string& id, Action action);
  EpisodeRecord finish(const std::string& id, int rating);

  SessionStatus status(const std::string& id);
  std::vector<NodeId> path(const std::string& id);
  std::vector<SessionEvent> events(const std::string& id);

 private:
  struct Session {
    std::mutex mu;
    std::string id;
    SessionSpec spec;
    std::vector<NodeId> path;
    int heading = kInitialHeading;
    std::vector<SessionEvent> events;
    SessionStatus status = SessionStatus::kActive;
    std::int64_t last_ms = 0;
    std::size_t max_steps = 0;
    std::optional<EpisodeRecord> record;
  };

  std::shared_ptr<Session> get(const std::string& id);
  void refresh(Session& s);
  Json view_locked(const Session& s) const;
  Trajectory trajectory(const Session& s) const;
  void persist(const Session& s) const;

  Vocabulary vocab_;
  SessionConfig config_;
  SessionClock clock_;
  std::optional<std::filesystem::path> record_dir_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
  std::uint64_t next_batch_ = 1;
};

Json action_to_json(const Action& a);
Action action_from_json(const Json& j);

/// Turns (task id, source) into a session spec; throws kNotFound when either is unknown.
using SessionResolver = std::function<SessionSpec(const std::string& task_id, const std::string& source)>;

class SessionServer {
 public:
  SessionServer(std::shared_ptr<SessionManager> manager, SessionResolver resolver, DataRoot root);
  ~SessionServer();
  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  /// Binds and starts serving on a background thread; port 0 picks a free port.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace pragnav
