#include "pragnav/session.hpp"

#include <iomanip>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "pragnav/error.hpp"

namespace fs = std::filesystem;

namespace pragnav {

const char* status_name(SessionStatus s) {
  switch (s) {
    case SessionStatus::kActive: return "active";
    case SessionStatus::kFinished: return "finished";
    case SessionStatus::kExpired: return "expired";
  }
  return "?";
}

SessionClock steady_clock_ms() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
  };
}

Json action_to_json(const Action& a) {
  if (a.is_stop()) return {{"action", "stop"}};
  return {{"action", "move"}, {"sector", a.sector}};
}

Action action_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("action") || !j.at("action").is_string()) {
    fail(ErrorCode::kInvalidArgument, "action: expected {\"action\": \"move\"|\"stop\"}");
  }
  const auto kind = j.at("action").get<std::string>();
  if (kind == "stop") return Action::stop();
  if (kind == "move") {
    if (!j.contains("sector") || !j.at("sector").is_number_integer()) {
      fail(ErrorCode::kInvalidArgument, "action: move needs an integer sector");
    }
    return Action::move(j.at("sector").get<int>());
  }
  fail(ErrorCode::kInvalidArgument, "action: unknown action '" + kind + "'");
}

SessionManager::SessionManager(Vocabulary vocab, SessionConfig config, SessionClock clock,
                               std::optional<fs::path> record_dir)
    : vocab_(std::move(vocab)), config_(config), clock_(std::move(clock)), record_dir_(std::move(record_dir)) {
  if (!clock_) clock_ = steady_clock_ms();
}

std::string SessionManager::create(SessionSpec spec) {
  if (!spec.task.world) fail(ErrorCode::kInvalidArgument, "session: task without world");
  if (spec.instruction.empty()) fail(ErrorCode::kInvalidArgument, "session: empty instruction");
  auto s = std::make_shared<Session>();
  const auto clauses = parse_clauses(vocab_, spec.instruction).size();
  s->max_steps = config_.max_steps.value_or(2 * clauses + 5);
  s->path.push_back(spec.task.task.intended.start);
  s->last_ms = clock_();
  s->spec = std::move(spec);
  std::lock_guard lock(mu_);
  std::ostringstream id;
  id << "s" << std::setw(6) << std::setfill('0') << next_id_++;
  s->id = id.str();
  sessions_.emplace(s->id, s);
  return s->id;
}

std::vector<std::string> SessionManager::create_batch(std::vector<SessionSpec> specs) {
  std::size_t controls = 0;
  for (const auto& s : specs) controls += s.control ? 1 : 0;
  if (controls != 1) fail(ErrorCode::kInvalidArgument, "session batch: exactly one control task required");
  std::vector<std::string> ids;
  for (auto& s : specs) ids.push_back(create(std::move(s)));
  return ids;
}

std::shared_ptr<SessionManager::Session> SessionManager::get(const std::string& id) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(ErrorCode::kNotFound, "unknown session '" + id + "'");
  return it->second;
}

void SessionManager::refresh(Session& s) {
  if (s.status != SessionStatus::kActive) return;
  if (clock_() - s.last_ms > config_.idle_timeout.count()) {
    s.status = SessionStatus::kExpired;
    // An expired session is a failed episode.
    EpisodeRecord ep = make_episode(s.spec.task, s.spec.source, "human", vocab_, s.spec.instruction,
                                    trajectory(s), config_.metric);
    ep.metrics = SimilarityReport{0.0, 0.0, 0.0, 0.0, ep.metrics.path_len};
    if (s.spec.control) ep.control_pass = false;
    s.record = ep;
    persist(s);
  }
}

Trajectory SessionManager::trajectory(const Session& s) const {
  return make_trajectory(*s.spec.task.world, s.path, s.status != SessionStatus::kActive);
}

Json SessionManager::view_locked(const Session& s) const {
  const World& w = *s.spec.task.world;
  const NodeId at = s.path.back();
  const auto obs = observe(w, at);
  Json sectors = Json::array();
  Json affordances = Json::array();
  for (const auto& v : obs.visible) {
    sectors.push_back({{"sector", v.sector}, {"relative", relative_sector(v.sector, s.heading)}, {"landmarks", v.landmarks}});
    if (s.status == SessionStatus::kActive) affordances.push_back(action_to_json(Action::move(v.sector)));
  }
  if (s.status == SessionStatus::kActive) affordances.push_back(action_to_json(Action::stop()));
  Json words = Json::array();
  for (TokenId t : s.spec.instruction.tokens) words.push_back(vocab_.word(t));
  return {{"version", kFormatVersion},
          {"session_id", s.id},
          {"task_id", s.spec.task.task.id},
          {"status", status_name(s.status)},
          {"instruction", to_text(vocab_, s.spec.instruction)},
          {"instruction_tokens", words},
          {"at", at},
          {"heading", s.heading},
          {"degree", obs.degree},
          {"sectors", sectors},
          {"affordances", affordances},
          {"step", s.path.size() - 1},
          {"max_steps", s.max_steps}};
}

Json SessionManager::view(const std::string& id) {
  auto s = get(id);
  std::lock_guard lock(s->mu);
  refresh(*s);
  if (s->status == SessionStatus::kExpired) fail(ErrorCode::kInvalidState, "session '" + id + "' has expired");
  return view_locked(*s);
}

Json SessionManager::act(const std::string& id, Action action) {
  auto s = get(id);
  std::lock_guard lock(s->mu);
  refresh(*s);
  if (s->status != SessionStatus::kActive) {
    fail(ErrorCode::kInvalidState, "session '" + id + "' is " + status_name(s->status));
  }
  const World& w = *s->spec.task.world;
  if (!action.is_stop() && !w.neighbor_in_sector(s->path.back(), action.sector)) {
    fail(ErrorCode::kInvalidArgument, "no neighbor in sector " + std::to_string(action.sector));
  }
  const auto next = step(w, s->path.back(), action);
  s->last_ms = clock_();
  s->events.push_back({s->last_ms, action});
  if (next) {
    s->path.push_back(*next);
    s->heading = action.sector;
  }
  if (!next || s->path.size() - 1 >= s->max_steps) s->status = SessionStatus::kFinished;
  return view_locked(*s);
}

EpisodeRecord SessionManager::finish(const std::string& id, int rating) {
  if (rating < 1 || rating > 4) fail(ErrorCode::kInvalidArgument, "rating must be between 1 and 4");
  auto s = get(id);
  std::lock_guard lock(s->mu);
  refresh(*s);
  if (s->status != SessionStatus::kFinished) {
    fail(ErrorCode::kInvalidState, "session '" + id + "' is " + status_name(s->status) + ", not finished");
  }
  if (s->record) fail(ErrorCode::kInvalidState, "session '" + id + "' was already rated");
  EpisodeRecord ep = make_episode(s->spec.task, s->spec.source, "human", vocab_, s->spec.instruction,
                                  trajectory(*s), config_.metric);
  ep.rating = rating;
  if (s->spec.control) ep.control_pass = ep.metrics.sr == 1.0;
  s->record = ep;
  persist(*s);
  return ep;
}

SessionStatus SessionManager::status(const std::string& id) {
  auto s = get(id);
  std::lock_guard lock(s->mu);
  refresh(*s);
  return s->status;
}

std::vector<NodeId> SessionManager::path(const std::string& id) {
  auto s = get(id);
  std::lock_guard lock(s->mu);
  return s->path;
}

std::vector<SessionEvent> SessionManager::events(const std::string& id) {
  auto s = get(id);
  std::lock_guard lock(s->mu);
  return s->events;
}

void SessionManager::persist(const Session& s) const {
  if (!record_dir_) return;
  Json events = Json::array();
  for (const auto& e : s.events) {
    Json j = action_to_json(e.action);
    j["at_ms"] = e.at_ms;
    events.push_back(std::move(j));
  }
  Json doc = {{"version", kFormatVersion},
              {"kind", "session"},
              {"session_id", s.id},
              {"task_id", s.spec.task.task.id},
              {"status", status_name(s.status)},
              {"control", s.spec.control},
              {"events", events},
              {"episode", episode_to_json(*s.record)}};
  write_file_atomic(*record_dir_ / (s.id + ".json"), dump_document(doc));
}

namespace {

int http_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::kInvalidArgument: return 400;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kInvalidState: return 409;
    case ErrorCode::kUnsupported: return 501;
    default: return 500;
  }
}

const char* code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kInfeasible: return "infeasible";
    case ErrorCode::kCorrupt: return "corrupt";
    case ErrorCode::kVersionMismatch: return "version_mismatch";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kInvalidState: return "invalid_state";
    case ErrorCode::kUnsupported: return "unsupported";
  }
  return "error";
}

void reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <class F>
void handle(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    reply(res, http_status(e.code()), {{"error", {{"code", code_name(e.code())}, {"message", e.what()}}}});
  } catch (const std::exception& e) {
    reply(res, 500, {{"error", {{"code", "internal"}, {"message", e.what()}}}});
  }
}

Json parse_body(const httplib::Request& req) {
  Json j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(ErrorCode::kInvalidArgument, "request body must be a JSON object");
  return j;
}

std::string field(const Json& j, const char* name) {
  if (!j.contains(name) || !j.at(name).is_string()) {
    fail(ErrorCode::kInvalidArgument, std::string("missing string field '") + name + "'");
  }
  return j.at(name).get<std::string>();
}

}  // namespace

struct SessionServer::Impl {
  httplib::Server server;
  std::thread thread;
};

SessionServer::SessionServer(std::shared_ptr<SessionManager> manager, SessionResolver resolver, DataRoot root)
    : impl_(std::make_unique<Impl>()) {
  auto& srv = impl_->server;
  srv.Post("/sessions", [manager, resolver](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] {
      const Json body = parse_body(req);
      if (body.contains("tasks")) {
        if (!body.at("tasks").is_array()) fail(ErrorCode::kInvalidArgument, "'tasks' must be an array");
        std::vector<SessionSpec> specs;
        for (const auto& t : body.at("tasks")) {
          const bool control = t.value("control", false);
          const std::string source = control ? std::string("reference") : field(t, "source");
          if (control && t.contains("source") && t.at("source") != "reference") {
            fail(ErrorCode::kInvalidArgument, "the control task must use the reference instruction");
          }
          SessionSpec spec = resolver(field(t, "task_id"), source);
          spec.control = control;
          specs.push_back(std::move(spec));
        }
        const auto ids = manager->create_batch(std::move(specs));
        Json sessions = Json::array();
        for (const auto& id : ids) sessions.push_back({{"session_id", id}, {"view", manager->view(id)}});
        reply(res, 201, {{"version", kFormatVersion}, {"sessions", sessions}});
        return;
      }
      SessionSpec spec = resolver(field(body, "task_id"), field(body, "source"));
      spec.control = body.value("control", false);
      const auto id = manager->create(std::move(spec));
      reply(res, 201, {{"version", kFormatVersion}, {"session_id", id}, {"view", manager->view(id)}});
    });
  });
  srv.Get(R"(/sessions/([^/]+)/view)", [manager](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { reply(res, 200, manager->view(req.matches[1])); });
  });
  srv.Post(R"(/sessions/([^/]+)/action)", [manager](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { reply(res, 200, manager->act(req.matches[1], action_from_json(parse_body(req)))); });
  });
  srv.Post(R"(/sessions/([^/]+)/finish)", [manager](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] {
      const Json body = parse_body(req);
      if (!body.contains("rating") || !body.at("rating").is_number_integer()) {
        fail(ErrorCode::kInvalidArgument, "missing integer field 'rating'");
      }
      const auto ep = manager->finish(req.matches[1], body.at("rating").get<int>());
      reply(res, 200, {{"version", kFormatVersion}, {"episode", episode_to_json(ep)}});
    });
  });
  srv.Get(R"(/runs/([^/]+))", [root](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { reply(res, 200, run_record_to_json(read_run(root, req.matches[1]))); });
  });
}

SessionServer::~SessionServer() { stop(); }

int SessionServer::start(const std::string& host, int port) {
  auto& srv = impl_->server;
  port_ = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
  if (port_ < 0) fail(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void SessionServer::run(const std::string& host, int port) {
  auto& srv = impl_->server;
  port_ = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
  if (port_ < 0) fail(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  srv.listen_after_bind();
}

void SessionServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace pragnav
