#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "echelon/config.hpp"
#include "echelon/engine.hpp"

namespace echelon {

// Carries an HTTP status for the transport layer.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& message) : std::runtime_error(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

// A mid-run knob change. Fields left empty are untouched.
struct Injection {
  std::int64_t effective_from = 0;
  std::string preset;  // empty for custom patches
  std::optional<double> demand_multiplier;
  // Edge selector ("lastmile", "all" or explicit "From->To" names) and scale
  // relative to the configured container count.
  std::vector<std::string> edges;
  std::optional<double> container_scale;
  std::optional<double> lead_time_scale;

  nlohmann::json to_json() const;
};

// Parses a patch object, rejecting structural fields with 422.
Injection parse_injection(const nlohmann::json& patch);

struct Preset {
  std::string name;
  std::string description;
  nlohmann::json patch;
};
const std::vector<Preset>& service_presets();

// Applies an injection to an engine at its current step.
void apply_injection(Engine& engine, const Injection& injection);

// Re-executes a session from its config and injection log up to step `until`.
std::unique_ptr<Engine> replay_session(const Config& config, const std::vector<Injection>& log, std::int64_t until);

// Aggregated per-step delta for clients.
nlohmann::json step_event(const Engine& engine, const StepRecord& record);
// Current view for late subscribers.
nlohmann::json snapshot_event(const Engine& engine, const std::vector<Injection>& log,
                              const std::optional<nlohmann::json>& last_step);

struct ServiceOptions {
  std::size_t max_sessions = 16;
  std::chrono::seconds idle_timeout{900};
  std::int64_t max_steps_per_request = 100000;
  std::size_t event_retention = 10000;  // per-session step events kept for streaming
  // Used when a create request names no profile or config.
  std::vector<std::string> default_overrides = {"structural.items=5", "structural.horizon=2000"};
};

class Session {
 public:
  Session(std::string id, Config config, std::size_t retention);

  const std::string& id() const { return id_; }
  const Config& config() const { return config_; }

  nlohmann::json summary();
  nlohmann::json advance(std::int64_t steps);
  nlohmann::json inject(const nlohmann::json& request);
  std::string export_snapshot();
  std::string state_hash();
  std::vector<Injection> injections();

  // Stream access: `cursor` is the next step index the subscriber needs.
  // Returns the events available from `cursor` (waiting up to `wait`), or a
  // fresh snapshot when the cursor has fallen out of retention. Sets `closed`
  // when the session ended.
  std::vector<std::string> poll(std::int64_t& cursor, std::chrono::milliseconds wait, bool& closed);
  std::string subscribe(std::int64_t& cursor);
  void close();

  std::chrono::steady_clock::time_point last_used() const;

 private:
  void touch();

  std::string id_;
  Config config_;
  std::size_t retention_;
  mutable std::mutex mutex_;
  std::condition_variable changed_;
  std::unique_ptr<Engine> engine_;
  std::vector<Injection> log_;
  std::deque<std::pair<std::int64_t, std::string>> events_;  // (t, ndjson line)
  std::optional<nlohmann::json> last_step_;
  bool closed_ = false;
  std::chrono::steady_clock::time_point last_used_;
};

// Thread-safe registry of live sessions.
class SessionManager {
 public:
  explicit SessionManager(ServiceOptions options = {});
  ~SessionManager();

  // Request body: optional "profile" ("desk" or "paper"), "config" (YAML
  // text), "overrides" (list of key=value) and "seed".
  std::shared_ptr<Session> create(const nlohmann::json& request);
  std::shared_ptr<Session> get(const std::string& id);
  bool remove(const std::string& id);
  std::vector<std::string> ids();
  std::size_t expire_idle(std::chrono::steady_clock::time_point now);
  void close_all();
  const ServiceOptions& options() const { return options_; }

 private:
  ServiceOptions options_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

// HTTP front end. Endpoints are documented in docs/service.md.
class Server {
 public:
  explicit Server(ServiceOptions options = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and serves on a background thread; port 0 picks a free port.
  int start(const std::string& host, int port);
  // Blocks until stop() is called.
  void serve(const std::string& host, int port);
  // Blocks until stop() is called on a started server.
  void wait();
  void stop();
  SessionManager& sessions();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace echelon
