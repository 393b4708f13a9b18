#include "echelon/engine.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "echelon/hash.hpp"

namespace echelon {

// ---- containers and packing -------------------------------------------------

EdgeContainers::EdgeContainers(const NetworkSpec& net) {
  std::size_t offset = 0;
  for (const auto& e : net.edges) {
    volume_.push_back(e.volume);
    count_.push_back(e.containers);
    offset_.push_back(offset);
    offset += static_cast<std::size_t>(e.containers);
  }
  residual_.assign(offset, 0.0);
  reset();
}

void EdgeContainers::reset() {
  for (std::size_t e = 0; e < volume_.size(); ++e) {
    auto span = edge(e);
    std::fill(span.begin(), span.end(), volume_[e]);
  }
}

double EdgeContainers::used(std::size_t e) const {
  double used = 0.0;
  for (const double r : edge(e)) used += volume_[e] - r;
  return used;
}

std::int64_t greedy_pack(double unit_volume, std::int64_t max_units, std::span<const std::size_t> path,
                         EdgeContainers& containers) {
  if (max_units <= 0 || path.empty()) return 0;
  // Within one call every unit has the same volume and residuals only shrink,
  // so the first container that fits on an edge never moves backwards. Keeping
  // a cursor per edge is the literal smallest-index first-fit scan.
  constexpr std::size_t kMaxInline = 16;
  std::size_t cursor_inline[kMaxInline] = {};
  std::vector<std::size_t> cursor_heap;
  std::size_t* cursor = cursor_inline;
  if (path.size() > kMaxInline) {
    cursor_heap.assign(path.size(), 0);
    cursor = cursor_heap.data();
  }

  std::int64_t placed = 0;
  for (; placed < max_units; ++placed) {
    for (std::size_t k = 0; k < path.size(); ++k) {
      const auto residual = containers.edge(path[k]);
      std::size_t j = cursor[k];
      while (j < residual.size() && residual[j] < unit_volume) ++j;
      cursor[k] = j;
      if (j == residual.size()) return placed;  // no slot on this edge; stop filling
    }
    for (std::size_t k = 0; k < path.size(); ++k) containers.edge(path[k])[cursor[k]] -= unit_volume;
  }
  return placed;
}

std::int64_t dispatch_target(std::int64_t backlog, double smoothed, double pipeline_multiplier,
                             std::int64_t in_transit, std::int64_t on_hand) {
  const double m = pipeline_multiplier > 0.0 ? pipeline_multiplier : kReactiveBufferUnits;
  const double raw = static_cast<double>(backlog) + m * smoothed - static_cast<double>(in_transit) -
                     static_cast<double>(on_hand);
  return std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(raw)));
}

std::int64_t draw_lead_time(double mean, Rng& rng) {
  const double x = rng.normal(mean, kLeadTimeCv * mean);
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(x)));
}

// ---- state ------------------------------------------------------------------

std::int64_t TwinState::in_transit_total(std::size_t item) const {
  std::int64_t total = 0;
  for (const auto& [due, qty] : in_transit) total += qty[item];
  return total;
}

TwinState init_state(const NetworkSpec& net, const PolicyTable& policies, const IntensityTensor& tensor) {
  TwinState s;
  s.nodes = net.nodes.size();
  s.items = static_cast<std::size_t>(tensor.items());
  s.on_hand.assign(s.nodes * s.items, 0);
  s.backlog.assign(s.nodes * s.items, 0);
  s.outstanding.assign(s.nodes * s.items, OutstandingOrder{});
  for (std::size_t n = 0; n < s.nodes; ++n) {
    for (std::size_t i = 0; i < s.items; ++i) s.on_hand[s.idx(n, i)] = policies.at(n, i).init;
  }
  s.smoothed.resize(s.items);
  for (std::size_t i = 0; i < s.items; ++i) s.smoothed[i] = tensor.item(static_cast<std::int64_t>(i)).base_rate;
  return s;
}

double RolloutSummary::fill_rate(std::size_t item) const {
  if (total_demand[item] == 0) return 0.0;
  return static_cast<double>(total_served[item]) / static_cast<double>(total_demand[item]);
}

double RolloutSummary::overall_fill_rate() const {
  const auto demand = std::accumulate(total_demand.begin(), total_demand.end(), std::int64_t{0});
  const auto served = std::accumulate(total_served.begin(), total_served.end(), std::int64_t{0});
  return demand == 0 ? 0.0 : static_cast<double>(served) / static_cast<double>(demand);
}

// ---- engine -----------------------------------------------------------------

Engine::Engine(const Config& config) : config_(config) {
  validate_config(config_);
  const auto& s = config_.structural;
  tensor_ = build_intensity(s.items, s.horizon, config_.knobs.demand, s.seed);
  mean_intensity_ = tensor_.mean_intensity();

  const auto& tk = config_.knobs.transport;
  const BacksolveParams bp{tk.mean_unit_volume, tk.load_factor, tk.packing_efficiency, tk.volume_rounding};
  network_ = backsolve_lastmile(effective_network(config_), s.items, mean_intensity_, bp);
  for (auto& e : network_.edges) {
    base_containers_.push_back(e.containers);
    e.containers = scale_container_count(e.containers, tk.container_count_scale);
  }
  destination_ = network_.destination();
  sources_ = network_.nodes_with_role(NodeRole::kSource);
  rebuild_routing();
  containers_ = EdgeContainers(network_);

  policies_ = materialize_policies(config_);
  sampler_ = DemandSampler(s.seed, s.items);
  for (std::int64_t i = 0; i < s.items; ++i) {
    item_ids_.push_back(item_id(i, s.items));
    unit_volumes_.push_back(tensor_.item(i).unit_volume);
  }
  const std::uint64_t lead_key = derive_key(s.seed, "leadtime");
  lead_keys_.resize(network_.nodes.size() * static_cast<std::size_t>(s.items));
  for (std::size_t n = 0; n < network_.nodes.size(); ++n) {
    const std::uint64_t node_key = derive_key(lead_key, network_.nodes[n].id);
    for (std::int64_t i = 0; i < s.items; ++i) {
      lead_keys_[n * static_cast<std::size_t>(s.items) + static_cast<std::size_t>(i)] =
          derive_key(node_key, static_cast<std::uint64_t>(i));
    }
  }

  state_ = init_state(network_, policies_, tensor_);
  initial_ = state_;

  const auto C = static_cast<std::size_t>(s.items);
  record_.demand.resize(C);
  record_.served.resize(C);
  record_.new_backlog.resize(C);
  record_.on_hand_before_ship.resize(C);
  record_.backlog_before_ship.resize(C);
  record_.destination_arrivals.resize(C);
  record_.edge_utilization.resize(network_.edges.size());
}

void Engine::rebuild_routing() { routing_ = std::make_shared<const RoutingTables>(build_routing(network_)); }

void Engine::scale_demand_from(std::int64_t from, double factor) { tensor_.scale_from(from, factor); }

void Engine::set_container_scale(std::size_t edge, double scale) {
  network_.edges.at(edge).containers = scale_container_count(base_containers_.at(edge), scale);
  rebuild_routing();
  containers_ = EdgeContainers(network_);
}

void Engine::set_lead_time_scale(double scale) {
  for (const std::size_t n : sources_) {
    for (std::size_t i = 0; i < policies_.items(); ++i) {
      auto& cell = policies_.at(n, i);
      cell.lead_mean = lead_mean_for(cell.lead_mean_raw, scale);
    }
  }
}

void Engine::restore(const TwinState& state) {
  if (state.nodes != state_.nodes || state.items != state_.items) {
    throw std::invalid_argument("snapshot shape does not match this configuration");
  }
  state_ = state;
}

const StepRecord& Engine::step() {
  if (done()) throw std::logic_error("engine stepped past the horizon");
  TwinState& st = state_;
  const std::int64_t t = st.t;
  const std::size_t C = st.items;
  const std::size_t N = st.nodes;
  const std::size_t d = destination_;
  StepRecord& rec = record_;
  rec.t = t;
  rec.shipments.clear();
  rec.source_orders.clear();
  rec.shock_level = tensor_.shock_path()[static_cast<std::size_t>(t)];
  const RoutingTables& routing = *routing_;

  // (1) Receive scheduled (s,S) replenishment at non-destination nodes.
  for (std::size_t n = 0; n < N; ++n) {
    if (n == d) continue;
    for (std::size_t i = 0; i < C; ++i) {
      auto& out = st.outstanding[st.idx(n, i)];
      if (!out.empty() && out.due <= t) {
        st.on_hand[st.idx(n, i)] += out.quantity;
        out = OutstandingOrder{};
      }
    }
  }

  // (2) Destination arrivals clear backlog first.
  std::fill(rec.destination_arrivals.begin(), rec.destination_arrivals.end(), 0);
  if (!st.in_transit.empty() && st.in_transit.begin()->first < t) {
    throw std::logic_error("in-transit arrival scheduled before the current step");
  }
  if (auto it = st.in_transit.find(t); it != st.in_transit.end()) {
    for (std::size_t i = 0; i < C; ++i) {
      const std::int64_t q = it->second[i];
      if (q <= 0) continue;
      rec.destination_arrivals[i] = q;
      std::int64_t& b = st.backlog[st.idx(d, i)];
      st.on_hand[st.idx(d, i)] += std::max<std::int64_t>(q - b, 0);
      b = std::max<std::int64_t>(b - q, 0);
    }
    st.in_transit.erase(it);
  }

  // (3) Fresh containers.
  containers_.reset();

  // (4) Demand and service at the destination, then the smoothed-demand update.
  sampler_.sample_row(tensor_, t, rec.demand);
  for (std::size_t i = 0; i < C; ++i) {
    const std::int64_t y = rec.demand[i];
    st.smoothed[i] = kSmoothingAlpha * static_cast<double>(y) + (1.0 - kSmoothingAlpha) * st.smoothed[i];
    std::int64_t& oh = st.on_hand[st.idx(d, i)];
    const std::int64_t served = std::min(oh, y);
    oh -= served;
    st.backlog[st.idx(d, i)] += y - served;
    rec.served[i] = served;
    rec.new_backlog[i] = y - served;
    rec.on_hand_before_ship[i] = oh;
    rec.backlog_before_ship[i] = st.backlog[st.idx(d, i)];
  }

  // (5) Dispatch warehouses -> destination, round-robin over items.
  std::vector<std::int64_t> in_transit_total(C, 0);
  for (const auto& [due, qty] : st.in_transit) {
    for (std::size_t i = 0; i < C; ++i) in_transit_total[i] += qty[i];
  }
  for (std::size_t k = 0; k < C; ++k) {
    const std::size_t i = (static_cast<std::size_t>(t) + k) % C;
    std::int64_t remaining = dispatch_target(st.backlog[st.idx(d, i)], st.smoothed[i],
                                             config_.structural.pipeline_multiplier, in_transit_total[i],
                                             st.on_hand[st.idx(d, i)]);
    for (const std::size_t w : routing.dispatch_order) {
      if (remaining <= 0) break;
      std::int64_t& oh_w = st.on_hand[st.idx(w, i)];
      const std::int64_t q_try = std::min(oh_w, remaining);
      if (q_try <= 0) continue;
      const ResolvedPath& path = routing.dispatch_path[w];
      const std::int64_t placed = greedy_pack(unit_volumes_[i], q_try, path.edges, containers_);
      if (placed <= 0) continue;
      oh_w -= placed;
      remaining -= placed;
      const std::int64_t arrival = t + path.transit;
      auto [slot, inserted] = st.in_transit.try_emplace(arrival);
      if (inserted) slot->second.assign(C, 0);
      slot->second[i] += placed;
      in_transit_total[i] += placed;
      rec.shipments.push_back({t, arrival, w, d, i, placed, &path});
    }
  }

  // (6) Inter-warehouse pull along real edges.
  for (const std::size_t n : routing.pull_node_order) {
    for (std::size_t i = 0; i < C; ++i) {
      const PolicyCell& pol = policies_.at(n, i);
      const std::int64_t oh = st.on_hand[st.idx(n, i)];
      OutstandingOrder& out = st.outstanding[st.idx(n, i)];
      if (oh >= pol.reorder || !out.empty()) continue;
      const std::int64_t qty = pol.order_up_to - oh;
      for (const PullSupplier& sup : routing.pull_order[n]) {
        std::int64_t& oh_u = st.on_hand[st.idx(sup.supplier, i)];
        const std::int64_t q_try = std::min(oh_u, qty);
        if (q_try <= 0) continue;
        const std::int64_t placed = greedy_pack(unit_volumes_[i], q_try, sup.path.edges, containers_);
        if (placed <= 0) continue;
        oh_u -= placed;
        const std::int64_t arrival = t + sup.path.transit;
        out = OutstandingOrder{arrival, placed};
        rec.shipments.push_back({t, arrival, sup.supplier, n, i, placed, &sup.path});
        break;
      }
    }
  }

  // (7) Source (s,S) orders with stochastic lead time.
  for (const std::size_t n : sources_) {
    for (std::size_t i = 0; i < C; ++i) {
      const PolicyCell& pol = policies_.at(n, i);
      const std::int64_t oh = st.on_hand[st.idx(n, i)];
      OutstandingOrder& out = st.outstanding[st.idx(n, i)];
      if (oh >= pol.reorder || !out.empty()) continue;
      Rng rng(derive_key(lead_keys_[n * C + i], static_cast<std::uint64_t>(t)));
      const std::int64_t lead = draw_lead_time(static_cast<double>(pol.lead_mean), rng);
      out = OutstandingOrder{t + lead, pol.order_up_to - oh};
      rec.source_orders.push_back({t, t + lead, n, i, pol.order_up_to - oh});
    }
  }

  for (std::size_t e = 0; e < rec.edge_utilization.size(); ++e) {
    rec.edge_utilization[e] = containers_.utilization(e);
  }
  st.t = t + 1;
  return rec;
}

// ---- rollout ----------------------------------------------------------------

RolloutSummary run_rollout(Engine& engine, std::span<RolloutSink* const> sinks) {
  const auto started = std::chrono::steady_clock::now();
  RolloutSummary summary;
  const std::size_t C = engine.item_ids().size();
  summary.total_demand.assign(C, 0);
  summary.total_served.assign(C, 0);
  summary.total_new_backlog.assign(C, 0);
  for (RolloutSink* sink : sinks) sink->begin(engine);
  while (!engine.done()) {
    const StepRecord& rec = engine.step();
    for (std::size_t i = 0; i < C; ++i) {
      summary.total_demand[i] += rec.demand[i];
      summary.total_served[i] += rec.served[i];
      summary.total_new_backlog[i] += rec.new_backlog[i];
    }
    summary.shipment_rows += static_cast<std::int64_t>(rec.shipments.size());
    summary.source_orders += static_cast<std::int64_t>(rec.source_orders.size());
    ++summary.steps;
    for (RolloutSink* sink : sinks) sink->on_step(engine, rec);
  }
  summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  for (RolloutSink* sink : sinks) sink->finish(engine, summary);
  return summary;
}

RolloutSummary run_rollout(const Config& config, std::span<RolloutSink* const> sinks) {
  Engine engine(config);
  return run_rollout(engine, sinks);
}

// ---- snapshots --------------------------------------------------------------

namespace {
constexpr int kSnapshotVersion = 1;
}

std::string snapshot_json(const TwinState& s, std::uint64_t seed) {
  nlohmann::json j;
  j["format"] = "echelon-state";
  j["version"] = kSnapshotVersion;
  j["seed"] = seed;
  j["rng"] = "philox4x32-10; demand and lead-time draws keyed by (stream, t)";
  j["t"] = s.t;
  j["nodes"] = s.nodes;
  j["items"] = s.items;
  j["on_hand"] = s.on_hand;
  j["backlog"] = s.backlog;
  auto out = nlohmann::json::array();
  for (std::size_t k = 0; k < s.outstanding.size(); ++k) {
    if (s.outstanding[k].empty()) continue;
    out.push_back({k / s.items, k % s.items, s.outstanding[k].due, s.outstanding[k].quantity});
  }
  j["outstanding"] = out;
  auto it = nlohmann::json::array();
  for (const auto& [due, qty] : s.in_transit) it.push_back({{"due", due}, {"units", qty}});
  j["in_transit"] = it;
  j["smoothed"] = s.smoothed;
  return j.dump();
}

TwinState restore_snapshot(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", "") != "echelon-state") throw std::invalid_argument("not a state snapshot");
  if (j.at("version").get<int>() != kSnapshotVersion) {
    throw std::invalid_argument("unsupported snapshot version " + j.at("version").dump());
  }
  TwinState s;
  s.t = j.at("t").get<std::int64_t>();
  s.nodes = j.at("nodes").get<std::size_t>();
  s.items = j.at("items").get<std::size_t>();
  s.on_hand = j.at("on_hand").get<std::vector<std::int64_t>>();
  s.backlog = j.at("backlog").get<std::vector<std::int64_t>>();
  s.outstanding.assign(s.nodes * s.items, OutstandingOrder{});
  for (const auto& o : j.at("outstanding")) {
    const auto n = o.at(0).get<std::size_t>();
    const auto i = o.at(1).get<std::size_t>();
    s.outstanding.at(s.idx(n, i)) = {o.at(2).get<std::int64_t>(), o.at(3).get<std::int64_t>()};
  }
  for (const auto& e : j.at("in_transit")) {
    s.in_transit[e.at("due").get<std::int64_t>()] = e.at("units").get<std::vector<std::int64_t>>();
  }
  s.smoothed = j.at("smoothed").get<std::vector<double>>();
  if (s.on_hand.size() != s.nodes * s.items || s.backlog.size() != s.on_hand.size() ||
      s.smoothed.size() != s.items) {
    throw std::invalid_argument("snapshot arrays do not match its declared shape");
  }
  return s;
}

std::string state_hash(const TwinState& s) {
  std::string bytes;
  const auto put = [&](const void* p, std::size_t n) { bytes.append(static_cast<const char*>(p), n); };
  put(&s.t, sizeof s.t);
  put(s.on_hand.data(), s.on_hand.size() * sizeof(std::int64_t));
  put(s.backlog.data(), s.backlog.size() * sizeof(std::int64_t));
  for (const auto& o : s.outstanding) {
    put(&o.due, sizeof o.due);
    put(&o.quantity, sizeof o.quantity);
  }
  for (const auto& [due, qty] : s.in_transit) {
    put(&due, sizeof due);
    put(qty.data(), qty.size() * sizeof(std::int64_t));
  }
  put(s.smoothed.data(), s.smoothed.size() * sizeof(double));
  return sha256_hex(bytes);
}

}  // namespace echelon
