#include <gtest/gtest.h>

#include <httplib.h>

#include <future>
#include <thread>

#include "echelon/service.hpp"

using namespace echelon;
using nlohmann::json;

namespace {

json desk(std::int64_t items = 5, std::int64_t horizon = 2000) {
  return {{"overrides", {"structural.items=" + std::to_string(items), "structural.horizon=" + std::to_string(horizon)}}};
}

Config desk_config(std::int64_t items = 5, std::int64_t horizon = 2000) {
  return parse_config("", {"structural.items=" + std::to_string(items), "structural.horizon=" + std::to_string(horizon)});
}

class Http : public ::testing::Test {
 protected:
  void SetUp() override {
    ServiceOptions opt;
    opt.max_sessions = 3;
    server_ = std::make_unique<Server>(opt);
    port_ = server_->start("127.0.0.1", 0);
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(60, 0);
  }
  void TearDown() override { server_->stop(); }

  httplib::Result post(const std::string& path, const json& body) {
    return client_->Post(path, body.dump(), "application/json");
  }
  std::string create(const json& body = desk()) {
    auto r = post("/sessions", body);
    EXPECT_EQ(r->status, 201) << r->body;
    return json::parse(r->body).at("id");
  }

  std::unique_ptr<Server> server_;
  std::unique_ptr<httplib::Client> client_;
  int port_ = 0;
};

// Collects a stream until `want` step events arrived; calls `on_snapshot`
// once the initial snapshot is in.
std::vector<json> read_stream(int port, const std::string& id, std::size_t want,
                              std::promise<json>* snapshot_ready) {
  httplib::Client c("127.0.0.1", port);
  c.set_read_timeout(60, 0);
  std::vector<json> events;
  std::string buffer;
  c.Get("/sessions/" + id + "/stream", [&](const char* data, std::size_t len) {
    buffer.append(data, len);
    std::size_t nl;
    while ((nl = buffer.find('\n')) != std::string::npos) {
      json ev = json::parse(buffer.substr(0, nl));
      buffer.erase(0, nl + 1);
      if (ev["type"] == "snapshot" && events.empty() && snapshot_ready) {
        snapshot_ready->set_value(ev);
        snapshot_ready = nullptr;
      }
      events.push_back(std::move(ev));
    }
    std::size_t steps = 0;
    for (const auto& e : events) steps += e["type"] == "step";
    return steps < want;
  });
  return events;
}

}  // namespace

// ---- session core ------------------------------------------------------------

TEST(Injections, PatchParsing) {
  const auto inj = parse_injection({{"demand_multiplier", 2}});
  EXPECT_EQ(*inj.demand_multiplier, 2.0);
  const auto squeeze = parse_injection({{"container_scale", 0.3}});
  EXPECT_EQ(squeeze.edges, std::vector<std::string>{"lastmile"});
  for (const char* key : {"items", "horizon", "seed", "network", "nodes", "structural"}) {
    try {
      parse_injection({{key, 3}});
      FAIL() << key;
    } catch (const ServiceError& e) {
      EXPECT_EQ(e.status(), 422) << key;
    }
  }
  try {
    parse_injection({{"edges_added", json::array({"A->B"})}});
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.status(), 422);
  }
  try {
    parse_injection({{"demand_multiplier", -1}});
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.status(), 400);
  }
  EXPECT_EQ(service_presets().size(), 3u);
}

TEST(Injections, DemandSurgeDoublesFutureIntensityAndKeepsFloor) {
  Engine e(desk_config(4, 300));
  for (int k = 0; k < 100; ++k) e.step();
  const std::vector<double> before = e.tensor().values();
  apply_injection(e, parse_injection({{"demand_multiplier", 2.0}}));
  const auto& after = e.tensor().values();
  for (std::int64_t t = 0; t < 300; ++t) {
    for (std::int64_t i = 0; i < 4; ++i) {
      const auto k = static_cast<std::size_t>(t * 4 + i);
      if (t < 100) {
        EXPECT_EQ(after[k], before[k]);
      } else {
        EXPECT_EQ(after[k], 2.0 * before[k]);
      }
      EXPECT_GE(after[k], 0.08 * e.tensor().item(i).base_rate);
    }
  }
}

TEST(Injections, LastMileSqueezeLeavesOneContainer) {
  Engine e(desk_config(4, 50));
  apply_injection(e, parse_injection({{"container_scale", 0.3}, {"edges", "lastmile"}}));
  const auto& net = e.network();
  for (const auto& edge : net.edges) {
    if (net.node_index(edge.to) == e.destination()) {
      EXPECT_EQ(edge.containers, 1) << edge.from;
    } else {
      EXPECT_EQ(edge.containers, 3) << edge.from;
    }
  }
  EXPECT_THROW(apply_injection(e, parse_injection({{"container_scale", 0.5}, {"edges", "Nowhere->NewYork"}})),
               ServiceError);
}

TEST(Sessions, CreateCapAndErrors) {
  ServiceOptions opt;
  opt.max_sessions = 2;
  SessionManager m(opt);
  const auto a = m.create(desk());
  const auto b = m.create(desk());
  EXPECT_NE(a->id(), b->id());
  try {
    m.create(desk());
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.status(), 429);
  }
  EXPECT_TRUE(m.remove(a->id()));
  const std::string two_destinations = R"(
network:
  nodes:
    - {id: A, role: source, tier: Source}
    - {id: B, role: destination, tier: Destination}
    - {id: C, role: destination, tier: Destination}
  edges:
    - {from: A, to: B, transit: 1, volume: 100, containers: 1}
    - {from: A, to: C, transit: 1, volume: 100, containers: 1}
)";
  try {
    m.create({{"config", two_destinations}});
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.status(), 400);
  }
  try {
    m.create({{"profile", "huge"}});
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.status(), 400);
  }
}

TEST(Sessions, SameConfigSameInitialSummary) {
  SessionManager m;
  auto a = m.create(desk())->summary();
  auto b = m.create(desk())->summary();
  a.erase("id");
  b.erase("id");
  EXPECT_EQ(a, b);
  EXPECT_EQ(a["t"], 0);
  EXPECT_EQ(a["horizon"], 2000);
}

TEST(Sessions, TransparencyAgainstBatchEngine) {
  SessionManager m;
  const auto s = m.create(desk());
  s->advance(200);
  s->advance(300);
  Engine batch(desk_config());
  for (int k = 0; k < 500; ++k) batch.step();
  EXPECT_EQ(s->state_hash(), state_hash(batch.state()));
}

TEST(Sessions, UtilizationBoundedAndHorizonConflict) {
  SessionManager m;
  const auto s = m.create(desk(3, 120));
  const json r = s->advance(1000);
  EXPECT_EQ(r["steps"], 120);
  EXPECT_TRUE(r["done"].get<bool>());
  for (const auto& ev : r["events"]) {
    for (const double u : ev["edge_utilization"]) {
      EXPECT_GE(u, 0.0);
      EXPECT_LE(u, 1.0);
    }
  }
  try {
    s->advance(1);
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.status(), 409);
  }
}

TEST(Sessions, InjectionLogReplaysExactly) {
  SessionManager m;
  const auto s = m.create(desk(4, 600));
  s->advance(100);
  s->inject({{"preset", "demand_surge"}});
  s->advance(50);
  s->inject({{"preset", "lastmile_squeeze"}});
  s->advance(70);
  s->inject({{"patch", {{"lead_time_scale", 3.0}}}});
  s->inject({{"demand_multiplier", 0.5}});
  s->advance(80);
  const auto log = s->injections();
  ASSERT_EQ(log.size(), 4u);
  EXPECT_EQ(log[0].effective_from, 100);
  EXPECT_EQ(log[1].effective_from, 150);
  EXPECT_EQ(log[2].effective_from, 220);
  EXPECT_EQ(log[3].effective_from, 220);
  const auto replay = replay_session(s->config(), log, 300);
  EXPECT_EQ(state_hash(replay->state()), s->state_hash());
  // Injections change the trajectory.
  Engine plain(desk_config(4, 600));
  for (int k = 0; k < 300; ++k) plain.step();
  EXPECT_NE(state_hash(plain.state()), s->state_hash());
}

TEST(Sessions, SurgeRaisesLastMileLoadAndBacklog) {
  SessionManager m;
  const auto s = m.create(desk(5, 2000));
  const json warm = s->advance(400);
  s->inject({{"demand_multiplier", 3.0}, {"container_scale", 0.3}, {"edges", "lastmile"}});
  const json hot = s->advance(300);
  const auto& snap = s->summary();
  std::vector<std::size_t> lastmile;
  for (std::size_t e = 0; e < snap["edges"].size(); ++e) {
    const std::string name = snap["edges"][e];
    if (name.size() > 9 && name.substr(name.size() - 9) == "->NewYork") lastmile.push_back(e);
  }
  ASSERT_EQ(lastmile.size(), 2u);
  auto mean_util = [&](const json& events) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& ev : events) {
      for (const auto e : lastmile) sum += ev["edge_utilization"][e].get<double>();
      n += lastmile.size();
    }
    return sum / static_cast<double>(n);
  };
  EXPECT_GT(mean_util(hot["events"]), mean_util(warm["events"]));
  EXPECT_GT(mean_util(hot["events"]), 0.9);
  EXPECT_GT(hot["events"].back()["view"]["backlog"].get<std::int64_t>(),
            warm["events"].back()["view"]["backlog"].get<std::int64_t>());
}

TEST(Sessions, PollDeliversOrderedEventsAndResyncs) {
  ServiceOptions opt;
  opt.event_retention = 10;
  SessionManager m(opt);
  const auto s = m.create(desk(3, 200));
  std::int64_t cursor = 0;
  const json snap = json::parse(s->subscribe(cursor));
  EXPECT_EQ(snap["type"], "snapshot");
  EXPECT_EQ(cursor, 0);
  s->advance(5);
  bool closed = false;
  auto lines = s->poll(cursor, std::chrono::milliseconds(0), closed);
  ASSERT_EQ(lines.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(json::parse(lines[k])["t"], k);
  EXPECT_EQ(cursor, 5);
  s->advance(30);
  lines = s->poll(cursor, std::chrono::milliseconds(0), closed);
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_EQ(json::parse(lines[0])["type"], "snapshot");
  EXPECT_EQ(cursor, 35);
  s->close();
  lines = s->poll(cursor, std::chrono::milliseconds(0), closed);
  EXPECT_TRUE(closed);
}

TEST(Sessions, IdleExpiry) {
  ServiceOptions opt;
  opt.idle_timeout = std::chrono::seconds(60);
  SessionManager m(opt);
  const auto s = m.create(desk(2, 20));
  EXPECT_EQ(m.expire_idle(std::chrono::steady_clock::now()), 0u);
  EXPECT_EQ(m.expire_idle(std::chrono::steady_clock::now() + std::chrono::seconds(61)), 1u);
  EXPECT_THROW(m.get(s->id()), ServiceError);
  std::int64_t cursor = 0;
  bool closed = false;
  s->poll(cursor, std::chrono::milliseconds(0), closed);
  EXPECT_TRUE(closed);
}

// ---- HTTP --------------------------------------------------------------------

TEST_F(Http, CreateGetDelete) {
  const auto id = create();
  auto r = client_->Get("/sessions/" + id);
  ASSERT_EQ(r->status, 200);
  const json j = json::parse(r->body);
  EXPECT_EQ(j["id"], id);
  EXPECT_EQ(j["t"], 0);
  EXPECT_EQ(j["nodes"].size(), 13u);
  EXPECT_EQ(j["destination"], "NewYork");
  EXPECT_EQ(client_->Delete("/sessions/" + id)->status, 204);
  EXPECT_EQ(client_->Get("/sessions/" + id)->status, 404);
  EXPECT_EQ(client_->Delete("/sessions/" + id)->status, 404);
}

TEST_F(Http, ErrorStatuses) {
  EXPECT_EQ(post("/sessions", {{"overrides", {"structural.items=0"}}})->status, 400);
  EXPECT_EQ(client_->Post("/sessions", "{not json", "application/json")->status, 400);
  EXPECT_EQ(post("/sessions/s999999/advance", {{"steps", 1}})->status, 404);
  create();
  create();
  create();
  EXPECT_EQ(post("/sessions", desk())->status, 429);
  const auto id = json::parse(client_->Get("/sessions")->body)["sessions"][0].get<std::string>();
  EXPECT_EQ(post("/sessions/" + id + "/inject", {{"patch", {{"items", 10}}}})->status, 422);
  EXPECT_EQ(post("/sessions/" + id + "/inject", {{"patch", {{"network", {{"edges", json::array()}}}}}})->status, 422);
  EXPECT_EQ(post("/sessions/" + id + "/inject", {{"preset", "nope"}})->status, 400);
  EXPECT_EQ(post("/sessions/" + id + "/advance", {{"steps", 0}})->status, 400);
}

TEST_F(Http, AdvanceAndHorizonConflict) {
  const auto id = create(desk(2, 10));
  auto r = post("/sessions/" + id + "/advance", {{"steps", 4}});
  ASSERT_EQ(r->status, 200);
  json j = json::parse(r->body);
  EXPECT_EQ(j["t"], 4);
  ASSERT_EQ(j["events"].size(), 4u);
  EXPECT_EQ(j["events"][3]["t"], 3);
  r = post("/sessions/" + id + "/advance", {{"steps", 100}, {"events", false}});
  j = json::parse(r->body);
  EXPECT_EQ(j["steps"], 6);
  EXPECT_FALSE(j.contains("events"));
  EXPECT_EQ(post("/sessions/" + id + "/advance", {{"steps", 1}})->status, 409);
}

TEST_F(Http, PresetsAndInject) {
  auto r = client_->Get("/presets");
  ASSERT_EQ(r->status, 200);
  const json presets = json::parse(r->body);
  ASSERT_EQ(presets.size(), 3u);
  EXPECT_EQ(presets[0]["name"], "demand_surge");
  EXPECT_EQ(presets[1]["name"], "lastmile_squeeze");
  EXPECT_EQ(presets[2]["name"], "leadtime_blowout");
  const auto id = create();
  post("/sessions/" + id + "/advance", {{"steps", 7}});
  r = post("/sessions/" + id + "/inject", {{"preset", "leadtime_blowout"}});
  ASSERT_EQ(r->status, 200) << r->body;
  EXPECT_EQ(json::parse(r->body)["effective_from"], 7);
  const json s = json::parse(client_->Get("/sessions/" + id)->body);
  ASSERT_EQ(s["injections"].size(), 1u);
  EXPECT_EQ(s["injections"][0]["preset"], "leadtime_blowout");
}

TEST_F(Http, TransparencyOverHttp) {
  const auto id = create({{"overrides", {"structural.items=5", "structural.horizon=2000"}}, {"seed", 77}});
  post("/sessions/" + id + "/advance", {{"steps", 500}, {"events", false}});
  const json s = json::parse(client_->Get("/sessions/" + id)->body);
  Config c = desk_config();
  c.structural.seed = 77;
  Engine batch(c);
  for (int k = 0; k < 500; ++k) batch.step();
  EXPECT_EQ(s["view"]["state_hash"], state_hash(batch.state()));
  const auto snap = client_->Get("/sessions/" + id + "/snapshot");
  ASSERT_EQ(snap->status, 200);
  EXPECT_EQ(restore_snapshot(snap->body), batch.state());
}

TEST_F(Http, StreamDeliversOrderedEventsToEverySubscriber) {
  const auto id = create();
  std::promise<json> ready_a, ready_b;
  auto fut_a = ready_a.get_future(), fut_b = ready_b.get_future();
  auto a = std::async(std::launch::async, [&] { return read_stream(port_, id, 5, &ready_a); });
  auto b = std::async(std::launch::async, [&] { return read_stream(port_, id, 5, &ready_b); });
  ASSERT_EQ(fut_a.wait_for(std::chrono::seconds(30)), std::future_status::ready);
  ASSERT_EQ(fut_b.wait_for(std::chrono::seconds(30)), std::future_status::ready);
  post("/sessions/" + id + "/advance", {{"steps", 5}, {"events", false}});
  const auto ea = a.get(), eb = b.get();
  ASSERT_EQ(ea.size(), 6u);
  EXPECT_EQ(ea[0]["type"], "snapshot");
  for (std::size_t k = 1; k < 6; ++k) {
    EXPECT_EQ(ea[k]["type"], "step");
    EXPECT_EQ(ea[k]["t"], k - 1);
  }
  EXPECT_EQ(ea, eb);
}

TEST_F(Http, ReconnectReconstructsSameState) {
  const auto id = create();
  std::promise<json> ready_full;
  auto fut = ready_full.get_future();
  auto full = std::async(std::launch::async, [&] { return read_stream(port_, id, 40, &ready_full); });
  ASSERT_EQ(fut.wait_for(std::chrono::seconds(30)), std::future_status::ready);
  post("/sessions/" + id + "/advance", {{"steps", 15}, {"events", false}});
  // A late subscriber joins mid-run.
  std::promise<json> ready_late;
  auto fut_late = ready_late.get_future();
  auto late = std::async(std::launch::async, [&] { return read_stream(port_, id, 25, &ready_late); });
  ASSERT_EQ(fut_late.wait_for(std::chrono::seconds(30)), std::future_status::ready);
  const json snap = fut_late.get();
  EXPECT_EQ(snap["t"], 15);
  post("/sessions/" + id + "/advance", {{"steps", 25}, {"events", false}});
  const auto ef = full.get(), el = late.get();
  ASSERT_EQ(ef.size(), 41u);
  ASSERT_EQ(el.size(), 26u);
  // The snapshot view equals the continuous subscriber's view after step 14.
  EXPECT_EQ(snap["view"], ef[15]["view"]);
  for (std::size_t k = 1; k < el.size(); ++k) EXPECT_EQ(el[k], ef[15 + k]);
  EXPECT_EQ(el.back()["view"], ef.back()["view"]);
}
