#include "echelon/service.hpp"

#define CPPHTTPLIB_THREAD_POOL_COUNT 32
#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

namespace echelon {

using nlohmann::json;

namespace {

const char* const kImmutable[] = {"items",  "horizon", "seed",  "structural", "network", "nodes",
                                  "topology", "policies", "pipeline_multiplier", "step_label"};

double positive_number(const json& v, const char* field) {
  if (!v.is_number()) throw ServiceError(400, std::string(field) + " must be a number");
  const double x = v.get<double>();
  if (!(x > 0.0) || !std::isfinite(x)) throw ServiceError(400, std::string(field) + " must be positive");
  return x;
}

std::string edge_name(const EdgeSpec& e) { return e.from + "->" + e.to; }

json view_of(const Engine& engine) {
  const TwinState& st = engine.state();
  const std::size_t C = st.items;
  const std::size_t d = engine.destination();
  json nodes = json::array();
  for (std::size_t n = 0; n < st.nodes; ++n) {
    std::int64_t sum = 0;
    for (std::size_t i = 0; i < C; ++i) sum += st.on_hand[st.idx(n, i)];
    nodes.push_back(sum);
  }
  std::int64_t backlog = 0, in_transit = 0;
  for (std::size_t i = 0; i < C; ++i) {
    backlog += st.backlog[st.idx(d, i)];
    in_transit += st.in_transit_total(i);
  }
  return {{"t", st.t},
          {"backlog", backlog},
          {"destination_on_hand", nodes[d]},
          {"in_transit", in_transit},
          {"node_on_hand", nodes},
          {"state_hash", state_hash(st)}};
}

}  // namespace

// ---- injections --------------------------------------------------------------

json Injection::to_json() const {
  json j{{"effective_from", effective_from}};
  if (!preset.empty()) j["preset"] = preset;
  if (demand_multiplier) j["demand_multiplier"] = *demand_multiplier;
  if (container_scale) {
    j["container_scale"] = *container_scale;
    j["edges"] = edges;
  }
  if (lead_time_scale) j["lead_time_scale"] = *lead_time_scale;
  return j;
}

Injection parse_injection(const json& patch) {
  if (!patch.is_object()) throw ServiceError(400, "patch must be a JSON object");
  Injection inj;
  for (const auto& [key, value] : patch.items()) {
    if (std::find(std::begin(kImmutable), std::end(kImmutable), key) != std::end(kImmutable)) {
      throw ServiceError(422, "field '" + key + "' is structural and cannot change mid-run");
    }
    if (key == "demand_multiplier") {
      inj.demand_multiplier = positive_number(value, "demand_multiplier");
    } else if (key == "container_scale") {
      inj.container_scale = positive_number(value, "container_scale");
    } else if (key == "lead_time_scale") {
      inj.lead_time_scale = positive_number(value, "lead_time_scale");
    } else if (key == "edges") {
      if (value.is_string()) {
        inj.edges = {value.get<std::string>()};
      } else if (value.is_array()) {
        for (const auto& e : value) {
          if (!e.is_string()) throw ServiceError(400, "edges must be strings");
          inj.edges.push_back(e.get<std::string>());
        }
      } else {
        throw ServiceError(400, "edges must be a string or a list");
      }
    } else {
      throw ServiceError(422, "field '" + key + "' is not a mid-run knob");
    }
  }
  if (!inj.edges.empty() && !inj.container_scale) throw ServiceError(400, "edges given without container_scale");
  if (inj.container_scale && inj.edges.empty()) inj.edges = {"lastmile"};
  if (!inj.demand_multiplier && !inj.container_scale && !inj.lead_time_scale) {
    throw ServiceError(400, "patch changes nothing");
  }
  return inj;
}

const std::vector<Preset>& service_presets() {
  static const std::vector<Preset> presets = {
      {"demand_surge", "every item's future intensity doubled", json{{"demand_multiplier", 2.0}}},
      {"lastmile_squeeze", "last-mile container count scaled by 0.3",
       json{{"container_scale", 0.3}, {"edges", "lastmile"}}},
      {"leadtime_blowout", "source lead-time means scaled by 10", json{{"lead_time_scale", 10.0}}},
  };
  return presets;
}

void apply_injection(Engine& engine, const Injection& inj) {
  const auto& net = engine.network();
  std::vector<std::size_t> edges;
  if (inj.container_scale) {
    for (const auto& sel : inj.edges) {
      if (sel == "all" || sel == "lastmile") {
        for (std::size_t e = 0; e < net.edges.size(); ++e) {
          if (sel == "all" || net.node_index(net.edges[e].to) == engine.destination()) edges.push_back(e);
        }
        continue;
      }
      const auto it = std::find_if(net.edges.begin(), net.edges.end(),
                                   [&](const EdgeSpec& e) { return edge_name(e) == sel; });
      if (it == net.edges.end()) throw ServiceError(400, "unknown edge '" + sel + "'");
      edges.push_back(static_cast<std::size_t>(it - net.edges.begin()));
    }
  }
  const auto& knobs = engine.config().knobs;
  if (inj.demand_multiplier) engine.scale_demand_from(engine.state().t, *inj.demand_multiplier);
  for (const auto e : edges) {
    engine.set_container_scale(e, knobs.transport.container_count_scale * *inj.container_scale);
  }
  if (inj.lead_time_scale) engine.set_lead_time_scale(knobs.inventory.lead_time_scale * *inj.lead_time_scale);
}

std::unique_ptr<Engine> replay_session(const Config& config, const std::vector<Injection>& log, std::int64_t until) {
  auto engine = std::make_unique<Engine>(config);
  std::size_t next = 0;
  while (engine->state().t < until) {
    while (next < log.size() && log[next].effective_from == engine->state().t) apply_injection(*engine, log[next++]);
    engine->step();
  }
  while (next < log.size() && log[next].effective_from == engine->state().t) apply_injection(*engine, log[next++]);
  return engine;
}

json step_event(const Engine& engine, const StepRecord& rec) {
  std::int64_t demand = 0, served = 0, new_backlog = 0, units = 0;
  for (std::size_t i = 0; i < rec.demand.size(); ++i) {
    demand += rec.demand[i];
    served += rec.served[i];
    new_backlog += rec.new_backlog[i];
  }
  for (const auto& s : rec.shipments) units += s.units;
  return {{"type", "step"},
          {"t", rec.t},
          {"demand", demand},
          {"served", served},
          {"new_backlog", new_backlog},
          {"shipments", rec.shipments.size()},
          {"shipped_units", units},
          {"edge_utilization", rec.edge_utilization},
          {"shock_level", rec.shock_level},
          {"view", view_of(engine)}};
}

json snapshot_event(const Engine& engine, const std::vector<Injection>& log, const std::optional<json>& last_step) {
  json inj = json::array();
  for (const auto& i : log) inj.push_back(i.to_json());
  json edges = json::array();
  for (const auto& e : engine.network().edges) edges.push_back(edge_name(e));
  json nodes = json::array();
  for (const auto& n : engine.network().nodes) nodes.push_back(n.id);
  return {{"type", "snapshot"},
          {"t", engine.state().t},
          {"horizon", engine.horizon()},
          {"nodes", nodes},
          {"edges", edges},
          {"destination", engine.network().nodes[engine.destination()].id},
          {"view", view_of(engine)},
          {"last_step", last_step ? *last_step : json(nullptr)},
          {"injections", inj}};
}

// ---- sessions ----------------------------------------------------------------

Session::Session(std::string id, Config config, std::size_t retention)
    : id_(std::move(id)), config_(std::move(config)), retention_(std::max<std::size_t>(1, retention)) {
  engine_ = std::make_unique<Engine>(config_);
  last_used_ = std::chrono::steady_clock::now();
}

void Session::touch() { last_used_ = std::chrono::steady_clock::now(); }

std::chrono::steady_clock::time_point Session::last_used() const {
  std::lock_guard lock(mutex_);
  return last_used_;
}

json Session::summary() {
  std::lock_guard lock(mutex_);
  touch();
  json j = snapshot_event(*engine_, log_, last_step_);
  j.erase("type");
  j["id"] = id_;
  j["done"] = engine_->done();
  j["items"] = engine_->item_ids().size();
  j["seed"] = config_.structural.seed;
  return j;
}

json Session::advance(std::int64_t steps) {
  std::lock_guard lock(mutex_);
  touch();
  if (closed_) throw ServiceError(404, "session closed");
  if (steps < 1) throw ServiceError(400, "steps must be at least 1");
  if (engine_->done()) throw ServiceError(409, "session is at its horizon");
  const std::int64_t n = std::min(steps, engine_->horizon() - engine_->state().t);
  json events = json::array();
  for (std::int64_t k = 0; k < n; ++k) {
    const StepRecord& rec = engine_->step();
    json ev = step_event(*engine_, rec);
    events_.emplace_back(rec.t, ev.dump());
    if (events_.size() > retention_) events_.pop_front();
    last_step_ = ev;
    events.push_back(std::move(ev));
  }
  changed_.notify_all();
  return {{"id", id_}, {"t", engine_->state().t}, {"steps", n}, {"done", engine_->done()}, {"events", events}};
}

json Session::inject(const json& request) {
  if (!request.is_object()) throw ServiceError(400, "request must be a JSON object");
  json patch = json::object();
  std::string preset;
  if (request.contains("preset")) {
    if (!request["preset"].is_string()) throw ServiceError(400, "preset must be a string");
    preset = request["preset"].get<std::string>();
    const auto& all = service_presets();
    const auto it = std::find_if(all.begin(), all.end(), [&](const Preset& p) { return p.name == preset; });
    if (it == all.end()) throw ServiceError(400, "unknown preset '" + preset + "'");
    patch = it->patch;
  }
  if (request.contains("patch")) {
    if (!request["patch"].is_object()) throw ServiceError(400, "patch must be a JSON object");
    patch.update(request["patch"]);
  }
  for (const auto& [key, value] : request.items()) {
    if (key != "preset" && key != "patch") {
      // Bare fields are treated as the patch itself.
      patch[key] = value;
    }
  }
  Injection inj = parse_injection(patch);
  inj.preset = preset;
  std::lock_guard lock(mutex_);
  touch();
  if (closed_) throw ServiceError(404, "session closed");
  if (engine_->done()) throw ServiceError(409, "session is at its horizon");
  inj.effective_from = engine_->state().t;
  apply_injection(*engine_, inj);
  log_.push_back(inj);
  return {{"id", id_}, {"effective_from", inj.effective_from}, {"injection", inj.to_json()}};
}

std::string Session::export_snapshot() {
  std::lock_guard lock(mutex_);
  touch();
  return snapshot_json(engine_->state(), config_.structural.seed);
}

std::string Session::state_hash() {
  std::lock_guard lock(mutex_);
  return echelon::state_hash(engine_->state());
}

std::vector<Injection> Session::injections() {
  std::lock_guard lock(mutex_);
  return log_;
}

std::string Session::subscribe(std::int64_t& cursor) {
  std::lock_guard lock(mutex_);
  touch();
  cursor = engine_->state().t;
  return snapshot_event(*engine_, log_, last_step_).dump();
}

std::vector<std::string> Session::poll(std::int64_t& cursor, std::chrono::milliseconds wait, bool& closed) {
  std::unique_lock lock(mutex_);
  changed_.wait_for(lock, wait, [&] { return closed_ || (!events_.empty() && events_.back().first >= cursor); });
  closed = closed_;
  std::vector<std::string> out;
  if (events_.empty() || events_.back().first < cursor) return out;
  if (events_.front().first > cursor) {
    // Fell out of retention: resynchronize with a snapshot.
    cursor = engine_->state().t;
    out.push_back(snapshot_event(*engine_, log_, last_step_).dump());
    return out;
  }
  for (const auto& [t, line] : events_) {
    if (t >= cursor) out.push_back(line);
  }
  cursor = events_.back().first + 1;
  return out;
}

void Session::close() {
  std::lock_guard lock(mutex_);
  closed_ = true;
  changed_.notify_all();
}

SessionManager::SessionManager(ServiceOptions options) : options_(std::move(options)) {}

SessionManager::~SessionManager() { close_all(); }

std::shared_ptr<Session> SessionManager::create(const json& request) {
  if (!request.is_object()) throw ServiceError(400, "request must be a JSON object");
  {
    std::lock_guard lock(mutex_);
    if (sessions_.size() >= options_.max_sessions) {
      throw ServiceError(429, "session cap of " + std::to_string(options_.max_sessions) + " reached");
    }
  }
  std::vector<std::string> overrides;
  std::string yaml;
  const bool has_profile = request.contains("profile");
  const bool has_config = request.contains("config");
  try {
    if (has_profile) {
      const auto profile = request.at("profile").get<std::string>();
      if (profile == "desk") {
        overrides = {"structural.items=5", "structural.horizon=2000"};
      } else if (profile != "paper") {
        throw ServiceError(400, "unknown profile '" + profile + "'");
      }
    } else if (!has_config) {
      overrides = options_.default_overrides;
    }
    if (has_config) yaml = request.at("config").get<std::string>();
    if (request.contains("overrides")) {
      for (const auto& o : request.at("overrides")) overrides.push_back(o.get<std::string>());
    }
    if (request.contains("seed")) overrides.push_back("structural.seed=" + std::to_string(request.at("seed").get<std::uint64_t>()));
  } catch (const json::exception& e) {
    throw ServiceError(400, std::string("malformed request: ") + e.what());
  }
  std::shared_ptr<Session> s;
  std::string id;
  {
    std::lock_guard lock(mutex_);
    char buf[16];
    std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(next_id_++));
    id = buf;
  }
  try {
    s = std::make_shared<Session>(id, parse_config(yaml, overrides), options_.event_retention);
  } catch (const ServiceError&) {
    throw;
  } catch (const std::exception& e) {
    throw ServiceError(400, std::string("invalid config: ") + e.what());
  }
  std::lock_guard lock(mutex_);
  if (sessions_.size() >= options_.max_sessions) {
    throw ServiceError(429, "session cap of " + std::to_string(options_.max_sessions) + " reached");
  }
  sessions_[id] = s;
  return s;
}

std::shared_ptr<Session> SessionManager::get(const std::string& id) {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "no session '" + id + "'");
  return it->second;
}

bool SessionManager::remove(const std::string& id) {
  std::shared_ptr<Session> s;
  {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) return false;
    s = it->second;
    sessions_.erase(it);
  }
  s->close();
  return true;
}

std::vector<std::string> SessionManager::ids() {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

std::size_t SessionManager::expire_idle(std::chrono::steady_clock::time_point now) {
  std::vector<std::shared_ptr<Session>> expired;
  {
    std::lock_guard lock(mutex_);
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      if (now - it->second->last_used() >= options_.idle_timeout) {
        expired.push_back(it->second);
        it = sessions_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& s : expired) s->close();
  return expired.size();
}

void SessionManager::close_all() {
  std::map<std::string, std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mutex_);
    all.swap(sessions_);
  }
  for (auto& [id, s] : all) s->close();
}

// ---- HTTP --------------------------------------------------------------------

struct Server::Impl {
  explicit Impl(ServiceOptions options) : sessions(std::move(options)) {}

  SessionManager sessions;
  httplib::Server http;
  std::thread serve_thread;
  std::thread sweeper;
  std::mutex stop_mutex;
  std::condition_variable stop_cv;
  bool stopping = false;

  void routes();
  void start_sweeper();
};

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const ServiceError& e) {
      reply(res, e.status(), {{"error", e.what()}});
    } catch (const json::exception& e) {
      reply(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
    } catch (const std::exception& e) {
      reply(res, 500, {{"error", e.what()}});
    }
  };
}

json body_of(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  return json::parse(req.body);
}

}  // namespace

void Server::Impl::routes() {
  http.Get("/health", guarded([](const httplib::Request&, httplib::Response& res) { reply(res, 200, {{"ok", true}}); }));
  http.Get("/presets", guarded([](const httplib::Request&, httplib::Response& res) {
             json out = json::array();
             for (const auto& p : service_presets()) {
               out.push_back({{"name", p.name}, {"description", p.description}, {"patch", p.patch}});
             }
             reply(res, 200, out);
           }));
  http.Get("/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
             reply(res, 200, {{"sessions", sessions.ids()}});
           }));
  http.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const auto s = sessions.create(body_of(req));
              reply(res, 201, s->summary());
            }));
  http.Get(R"(/sessions/([A-Za-z0-9_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
             reply(res, 200, sessions.get(req.matches[1])->summary());
           }));
  http.Delete(R"(/sessions/([A-Za-z0-9_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                if (!sessions.remove(req.matches[1])) throw ServiceError(404, "no session '" + req.matches[1].str() + "'");
                res.status = 204;
              }));
  http.Post(R"(/sessions/([A-Za-z0-9_-]+)/advance)",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
              const auto s = sessions.get(req.matches[1]);
              const json body = body_of(req);
              const json steps = body.value("steps", json(1));
              if (!steps.is_number_integer()) throw ServiceError(400, "steps must be an integer");
              const auto n = steps.get<std::int64_t>();
              if (n > sessions.options().max_steps_per_request) {
                throw ServiceError(400, "steps exceeds the per-request limit of " +
                                            std::to_string(sessions.options().max_steps_per_request));
              }
              json out = s->advance(n);
              if (!body.value("events", true)) out.erase("events");
              reply(res, 200, out);
            }));
  http.Post(R"(/sessions/([A-Za-z0-9_-]+)/inject)",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
              const auto s = sessions.get(req.matches[1]);
              reply(res, 200, s->inject(body_of(req)));
            }));
  http.Get(R"(/sessions/([A-Za-z0-9_-]+)/snapshot)",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
             res.set_content(sessions.get(req.matches[1])->export_snapshot(), "application/json");
           }));
  http.Get(R"(/sessions/([A-Za-z0-9_-]+)/stream)",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
             auto session = sessions.get(req.matches[1]);
             auto cursor = std::make_shared<std::int64_t>(0);
             auto started = std::make_shared<bool>(false);
             res.set_chunked_content_provider(
                 "application/x-ndjson", [session, cursor, started](std::size_t, httplib::DataSink& sink) {
                   std::vector<std::string> lines;
                   bool closed = false;
                   if (!*started) {
                     lines.push_back(session->subscribe(*cursor));
                     *started = true;
                   } else {
                     lines = session->poll(*cursor, std::chrono::milliseconds(250), closed);
                   }
                   for (auto& l : lines) {
                     l.push_back('\n');
                     if (!sink.write(l.data(), l.size())) return false;
                   }
                   if (closed && lines.empty()) sink.done();
                   return true;
                 });
           }));
}

void Server::Impl::start_sweeper() {
  sweeper = std::thread([this] {
    std::unique_lock lock(stop_mutex);
    while (!stopping) {
      stop_cv.wait_for(lock, std::chrono::seconds(1));
      if (stopping) break;
      lock.unlock();
      sessions.expire_idle(std::chrono::steady_clock::now());
      lock.lock();
    }
  });
}

Server::Server(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) { impl_->routes(); }

Server::~Server() { stop(); }

SessionManager& Server::sessions() { return impl_->sessions; }

int Server::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->http.bind_to_any_port(host);
  } else if (!impl_->http.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  impl_->start_sweeper();
  impl_->serve_thread = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
  return bound;
}

void Server::serve(const std::string& host, int port) {
  start(host, port);
  wait();
}

void Server::wait() {
  std::unique_lock lock(impl_->stop_mutex);
  impl_->stop_cv.wait(lock, [this] { return impl_->stopping; });
}

void Server::stop() {
  if (!impl_) return;
  {
    std::lock_guard lock(impl_->stop_mutex);
    if (impl_->stopping) return;
    impl_->stopping = true;
  }
  impl_->stop_cv.notify_all();
  impl_->sessions.close_all();
  impl_->http.stop();
  if (impl_->serve_thread.joinable() && impl_->serve_thread.get_id() != std::this_thread::get_id()) {
    impl_->serve_thread.join();
  }
  if (impl_->sweeper.joinable()) impl_->sweeper.join();
}

}  // namespace echelon
