#include "echelon/validate.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace echelon {

ReleaseLayout ReleaseLayout::from(const NetworkSpec& net, const std::vector<std::string>& items) {
  ReleaseLayout l;
  for (const auto& n : net.nodes) {
    l.nodes.push_back(n.id);
    l.tiers.push_back(n.tier);
    l.roles.push_back(n.role);
  }
  l.items = items;
  l.destination = net.destination();
  return l;
}

void StepObservation::resize(std::size_t nodes, std::size_t items) {
  demand.assign(items, 0);
  served.assign(items, 0);
  new_backlog.assign(items, 0);
  on_hand_before_ship.assign(items, 0);
  backlog_before_ship.assign(items, 0);
  dest_in_transit.assign(items, 0);
  on_hand.assign(nodes * items, 0);
  backlog.assign(nodes * items, 0);
  shipments.clear();
  source_orders.clear();
}

void observe_engine_step(const Engine& engine, const StepRecord& rec, StepObservation& obs) {
  const TwinState& s = engine.state();
  obs.t = rec.t;
  obs.demand = rec.demand;
  obs.served = rec.served;
  obs.new_backlog = rec.new_backlog;
  obs.on_hand_before_ship = rec.on_hand_before_ship;
  obs.backlog_before_ship = rec.backlog_before_ship;
  obs.on_hand = s.on_hand;
  obs.backlog = s.backlog;
  obs.dest_in_transit.assign(s.items, 0);
  for (const auto& [due, qty] : s.in_transit) {
    for (std::size_t i = 0; i < s.items; ++i) obs.dest_in_transit[i] += qty[i];
  }
  obs.shipments = rec.shipments;
  obs.source_orders = rec.source_orders;
  obs.has_source_orders = true;
}

void ObservationSink::on_step(const Engine& engine, const StepRecord& record) {
  observe_engine_step(engine, record, obs_);
  for (const auto& c : consumers_) c(obs_);
}

// ---- conservation -----------------------------------------------------------

void LawStats::record(std::int64_t residual, const ViolationCoord& where) {
  ++checks;
  if (residual == 0) return;
  ++violations;
  max_abs_residual = std::max(max_abs_residual, residual < 0 ? -residual : residual);
  if (!first) first = where;
}

bool ConservationReport::passed() const {
  for (const LawStats* l : {&node_mass, &global_mass, &backlog, &row_identity, &snapshot, &in_transit, &backlog_zero}) {
    if (l->violations != 0) return false;
  }
  return true;
}

namespace {

struct NamedLaw {
  const char* name;
  const LawStats* stats;
};

std::vector<NamedLaw> laws(const ConservationReport& r) {
  return {{"node_mass", &r.node_mass},         {"global_mass", &r.global_mass},
          {"backlog", &r.backlog},             {"row_identity", &r.row_identity},
          {"before_ship_snapshot", &r.snapshot}, {"in_transit_replay", &r.in_transit},
          {"backlog_off_destination", &r.backlog_zero}};
}

std::string describe(const ViolationCoord& c, const ReleaseLayout& layout) {
  std::string s = "t=" + std::to_string(c.t);
  if (c.node) s += " node=" + layout.nodes[*c.node];
  s += " item=" + layout.items[c.item];
  return s;
}

}  // namespace

std::string ConservationReport::to_text(const ReleaseLayout& layout) const {
  std::ostringstream out;
  out << "conservation audit, steps " << first_step << ".." << last_step << "\n";
  for (const auto& [name, l] : laws(*this)) {
    char line[160];
    if (l->skipped) {
      std::snprintf(line, sizeof line, "  %-24s skipped\n", name);
      out << line;
      continue;
    }
    std::snprintf(line, sizeof line, "  %-24s %s  checks=%lld violations=%lld max|residual|=%lld", name,
                  l->violations == 0 ? "PASS" : "FAIL", static_cast<long long>(l->checks),
                  static_cast<long long>(l->violations), static_cast<long long>(l->max_abs_residual));
    out << line;
    if (l->first) out << "  first at " << describe(*l->first, layout);
    out << "\n";
  }
  for (const auto& n : notes) out << "  note: " << n << "\n";
  out << (passed() ? "PASS" : "FAIL") << "\n";
  return out.str();
}

std::string ConservationReport::to_json(const ReleaseLayout& layout) const {
  nlohmann::json j;
  j["first_step"] = first_step;
  j["last_step"] = last_step;
  j["passed"] = passed();
  for (const auto& [name, l] : laws(*this)) {
    nlohmann::json e;
    e["skipped"] = l->skipped;
    e["checks"] = l->checks;
    e["violations"] = l->violations;
    e["max_abs_residual"] = l->max_abs_residual;
    if (l->first) {
      e["first"] = {{"t", l->first->t},
                    {"node", l->first->node ? nlohmann::json(layout.nodes[*l->first->node]) : nlohmann::json()},
                    {"item", layout.items[l->first->item]}};
    }
    j["laws"][name] = e;
  }
  j["notes"] = notes;
  return j.dump(2);
}

ConservationAuditor::ConservationAuditor(ReleaseLayout layout, const TwinState* initial)
    : layout_(std::move(layout)) {
  const std::size_t N = layout_.node_count(), C = layout_.item_count();
  pull_in_flight_.assign(C, 0);
  replay_in_transit_.assign(C, 0);
  prev_it_drift_.assign(C, 0);
  residuals_.node_mass.assign(N * C, 0);
  residuals_.global_mass.assign(C, 0);
  residuals_.backlog.assign(C, 0);
  residuals_.in_transit_drift.assign(C, 0);
  if (!initial) return;
  if (initial->nodes != N || initial->items != C) {
    throw std::invalid_argument("initial state does not match the release layout");
  }
  const std::size_t d = layout_.destination;
  primed_ = true;
  expected_t_ = initial->t;
  prev_on_hand_ = initial->on_hand;
  prev_backlog_.assign(C, 0);
  for (std::size_t i = 0; i < C; ++i) prev_backlog_[i] = initial->backlog[initial->idx(d, i)];
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t i = 0; i < C; ++i) {
      const auto& out = initial->outstanding[initial->idx(n, i)];
      if (out.empty()) continue;
      pending_node_[out.due].push_back({n, i, out.quantity});
      if (layout_.roles[n] != NodeRole::kSource) pull_in_flight_[i] += out.quantity;
    }
  }
  for (const auto& [due, qty] : initial->in_transit) {
    pending_dest_[due] = qty;
    for (std::size_t i = 0; i < C; ++i) replay_in_transit_[i] += qty[i];
  }
  prev_internal_.assign(C, 0);
  for (std::size_t i = 0; i < C; ++i) {
    std::int64_t total = pull_in_flight_[i] + replay_in_transit_[i];
    for (std::size_t n = 0; n < N; ++n) total += initial->on_hand[initial->idx(n, i)];
    prev_internal_[i] = total;
  }
}

const StepResiduals& ConservationAuditor::observe(const StepObservation& obs) {
  const std::size_t N = layout_.node_count(), C = layout_.item_count();
  const std::size_t d = layout_.destination;
  const std::int64_t t = obs.t;
  if (obs.on_hand.size() != N * C || obs.demand.size() != C) {
    throw std::invalid_argument("observation shape does not match the release layout");
  }
  if (started_ || primed_) {
    if (t != expected_t_) {
      throw std::runtime_error("non-contiguous time index: expected step " + std::to_string(expected_t_) +
                               ", got " + std::to_string(t));
    }
  }
  if (!started_) report_.first_step = t;
  started_ = true;
  report_.last_step = t;
  expected_t_ = t + 1;
  if (!obs.has_source_orders && source_orders_seen_) {
    source_orders_seen_ = false;
    report_.notes.push_back(
        "source orders unavailable: node mass at sources and global mass not checked");
  }
  const bool with_sources = source_orders_seen_;

  // Receipts due this step.
  std::vector<std::int64_t> receipts(N * C, 0);
  std::vector<std::int64_t> source_arrivals(C, 0);
  std::vector<std::int64_t> dest_arrivals(C, 0);
  if (auto it = pending_node_.find(t); it != pending_node_.end()) {
    for (const Pending& p : it->second) {
      receipts[p.node * C + p.item] += p.units;
      if (layout_.roles[p.node] == NodeRole::kSource) {
        source_arrivals[p.item] += p.units;
      } else {
        pull_in_flight_[p.item] -= p.units;
      }
    }
    pending_node_.erase(it);
  }
  if (auto it = pending_dest_.find(t); it != pending_dest_.end()) {
    dest_arrivals = it->second;
    for (std::size_t i = 0; i < C; ++i) replay_in_transit_[i] -= dest_arrivals[i];
    pending_dest_.erase(it);
  }
  pending_node_.erase(pending_node_.begin(), pending_node_.lower_bound(t));
  pending_dest_.erase(pending_dest_.begin(), pending_dest_.lower_bound(t));

  // Dispatches this step.
  std::vector<std::int64_t> shipped(N * C, 0);
  for (const auto& s : obs.shipments) {
    shipped[s.from * C + s.item] += s.units;
    if (s.to == d) {
      auto [slot, inserted] = pending_dest_.try_emplace(s.arrival_day);
      if (inserted) slot->second.assign(C, 0);
      slot->second[s.item] += s.units;
      replay_in_transit_[s.item] += s.units;
    } else {
      pending_node_[s.arrival_day].push_back({s.to, s.item, s.units});
      pull_in_flight_[s.item] += s.units;
    }
  }
  if (with_sources) {
    for (const auto& o : obs.source_orders) pending_node_[o.arrival_day].push_back({o.node, o.item, o.units});
  }

  for (std::size_t i = 0; i < C; ++i) {
    report_.row_identity.record(obs.served[i] + obs.new_backlog[i] - obs.demand[i], {t, d, i});
    report_.snapshot.record(obs.on_hand[d * C + i] - obs.on_hand_before_ship[i], {t, d, i});
    report_.snapshot.record(obs.backlog[d * C + i] - obs.backlog_before_ship[i], {t, d, i});
    report_.in_transit.record(obs.dest_in_transit[i] - replay_in_transit_[i], {t, d, i});
    const std::int64_t drift = obs.dest_in_transit[i] - replay_in_transit_[i];
    residuals_.in_transit_drift[i] = drift - prev_it_drift_[i];
    prev_it_drift_[i] = drift;
    for (std::size_t n = 0; n < N; ++n) {
      if (n != d) report_.backlog_zero.record(obs.backlog[n * C + i], {t, n, i});
    }
  }

  std::vector<std::int64_t> internal(C, 0);
  for (std::size_t i = 0; i < C; ++i) {
    std::int64_t total = pull_in_flight_[i] + obs.dest_in_transit[i];
    for (std::size_t n = 0; n < N; ++n) total += obs.on_hand[n * C + i];
    internal[i] = total;
  }

  if (primed_) {
    for (std::size_t i = 0; i < C; ++i) {
      const std::int64_t b_prev = prev_backlog_[i];
      const std::int64_t a = dest_arrivals[i];
      for (std::size_t n = 0; n < N; ++n) {
        std::int64_t& res = residuals_.node_mass[n * C + i];
        res = 0;
        if (n == d) {
          res = obs.on_hand[n * C + i] - (prev_on_hand_[n * C + i] + std::max<std::int64_t>(a - b_prev, 0) -
                                          obs.served[i]);
        } else if (with_sources || layout_.roles[n] != NodeRole::kSource) {
          res = obs.on_hand[n * C + i] - (prev_on_hand_[n * C + i] + receipts[n * C + i] - shipped[n * C + i]);
        } else {
          continue;
        }
        report_.node_mass.record(res, {t, n, i});
      }
      residuals_.backlog[i] =
          obs.backlog[d * C + i] - (std::max<std::int64_t>(b_prev - a, 0) + obs.new_backlog[i]);
      report_.backlog.record(residuals_.backlog[i], {t, d, i});
      if (with_sources) {
        const std::int64_t leaving = std::min(a, b_prev) + obs.served[i];
        residuals_.global_mass[i] = internal[i] - (prev_internal_[i] + source_arrivals[i] - leaving);
        report_.global_mass.record(residuals_.global_mass[i], {t, std::nullopt, i});
      } else {
        residuals_.global_mass[i] = 0;
      }
    }
  }
  report_.global_mass.skipped = !with_sources;

  prev_on_hand_ = obs.on_hand;
  prev_backlog_.assign(C, 0);
  for (std::size_t i = 0; i < C; ++i) prev_backlog_[i] = obs.backlog[d * C + i];
  prev_internal_ = internal;
  primed_ = true;
  return residuals_;
}

ConservationReport ConservationAuditor::report() const { return report_; }

// ---- bullwhip ---------------------------------------------------------------

void BullwhipAccumulator::Moments::add(double x) {
  ++n;
  const double delta = x - mean;
  mean += delta / static_cast<double>(n);
  m2 += delta * (x - mean);
}

std::optional<double> BullwhipAccumulator::Moments::variance() const {
  if (n < 2) return std::nullopt;
  return m2 / static_cast<double>(n - 1);
}

BullwhipAccumulator::BullwhipAccumulator(ReleaseLayout layout, BullwhipOptions options)
    : layout_(std::move(layout)), options_(options) {
  if (options_.window < 1 || options_.warmup < 0) throw std::invalid_argument("bad bullwhip window or warmup");
  const std::size_t cells = layout_.node_count() * layout_.item_count();
  series_.resize(cells);
  inflow_.assign(cells, 0);
  outflow_.assign(cells, 0);
}

void BullwhipAccumulator::observe(const StepObservation& obs) {
  const std::size_t N = layout_.node_count(), C = layout_.item_count();
  const std::size_t d = layout_.destination;
  const std::int64_t t = obs.t;
  std::fill(inflow_.begin(), inflow_.end(), 0);
  std::fill(outflow_.begin(), outflow_.end(), 0);
  if (auto it = arrivals_.find(t); it != arrivals_.end()) {
    for (const auto& [cell, units] : it->second) inflow_[cell] += units;
    arrivals_.erase(it);
  }
  arrivals_.erase(arrivals_.begin(), arrivals_.lower_bound(t));
  for (const auto& s : obs.shipments) {
    outflow_[s.from * C + s.item] += s.units;
    arrivals_[s.arrival_day].emplace_back(s.to * C + s.item, s.units);
  }
  for (const auto& o : obs.source_orders) arrivals_[o.arrival_day].emplace_back(o.node * C + o.item, o.units);
  for (std::size_t i = 0; i < C; ++i) outflow_[d * C + i] = obs.demand[i];

  if (t < options_.warmup) return;
  ++steps_used_;
  const bool close_bin = (t - options_.warmup + 1) % options_.window == 0;
  if (close_bin) ++bins_used_;
  for (std::size_t n = 0; n < N; ++n) {
    if (layout_.roles[n] == NodeRole::kSource) continue;
    for (std::size_t i = 0; i < C; ++i) {
      Series& s = series_[n * C + i];
      const auto in = static_cast<double>(inflow_[n * C + i]);
      const auto out = static_cast<double>(outflow_[n * C + i]);
      s.daily_in.add(in);
      s.daily_out.add(out);
      s.bin_in += in;
      s.bin_out += out;
      if (close_bin) {
        s.monthly_in.add(s.bin_in);
        s.monthly_out.add(s.bin_out);
        s.bin_in = s.bin_out = 0.0;
      }
    }
  }
}

namespace {

std::optional<double> ratio(std::optional<double> in, std::optional<double> out) {
  if (!in || !out || *out <= 0.0) return std::nullopt;
  return *in / *out;
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& xs) {
  double sum = 0.0;
  int n = 0;
  for (const auto& x : xs) {
    if (!x) continue;
    sum += *x;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace

BullwhipTable BullwhipAccumulator::table() const {
  const std::size_t N = layout_.node_count(), C = layout_.item_count();
  BullwhipTable tab;
  tab.options = options_;
  tab.steps_used = steps_used_;
  tab.bins_used = bins_used_;
  tab.entries.resize(N);
  tab.node_daily.resize(N);
  tab.node_monthly.resize(N);
  for (std::size_t n = 0; n < N; ++n) {
    if (layout_.roles[n] == NodeRole::kSource) continue;
    std::vector<std::optional<double>> daily, monthly;
    for (std::size_t i = 0; i < C; ++i) {
      const Series& s = series_[n * C + i];
      BullwhipEntry e{ratio(s.daily_in.variance(), s.daily_out.variance()),
                      ratio(s.monthly_in.variance(), s.monthly_out.variance())};
      if (!e.daily) ++tab.undefined_daily;
      if (!e.monthly) ++tab.undefined_monthly;
      daily.push_back(e.daily);
      monthly.push_back(e.monthly);
      tab.entries[n].push_back(e);
    }
    tab.node_daily[n] = mean_of(daily);
    tab.node_monthly[n] = mean_of(monthly);
  }
  for (std::size_t n = 0; n < N; ++n) {
    if (layout_.roles[n] == NodeRole::kSource) continue;
    auto it = std::find_if(tab.tiers.begin(), tab.tiers.end(),
                           [&](const TierRow& r) { return r.tier == layout_.tiers[n]; });
    if (it == tab.tiers.end()) {
      tab.tiers.push_back({layout_.tiers[n], {}, std::nullopt, std::nullopt});
      it = std::prev(tab.tiers.end());
    }
    it->nodes.push_back(layout_.nodes[n]);
  }
  for (auto& row : tab.tiers) {
    std::vector<std::optional<double>> daily, monthly;
    for (const auto& id : row.nodes) {
      const auto n = static_cast<std::size_t>(
          std::find(layout_.nodes.begin(), layout_.nodes.end(), id) - layout_.nodes.begin());
      daily.push_back(tab.node_daily[n]);
      monthly.push_back(tab.node_monthly[n]);
    }
    row.daily = mean_of(daily);
    row.monthly = mean_of(monthly);
  }
  return tab;
}

namespace {
std::string fmt3(std::optional<double> v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}
}  // namespace

std::string BullwhipTable::to_text(const ReleaseLayout&) const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "bullwhip ratio Var(inflow)/Var(outflow), warmup %lld, window %lld (%lld bins)\n",
                static_cast<long long>(options.warmup), static_cast<long long>(options.window),
                static_cast<long long>(bins_used));
  out << line;
  std::snprintf(line, sizeof line, "%-14s %-40s %8s %8s\n", "tier", "nodes", "daily", "monthly");
  out << line;
  for (const auto& r : tiers) {
    std::string nodes;
    for (const auto& n : r.nodes) nodes += (nodes.empty() ? "" : ", ") + n;
    std::snprintf(line, sizeof line, "%-14s %-40s %8s %8s\n", r.tier.c_str(), nodes.c_str(),
                  fmt3(r.daily).c_str(), fmt3(r.monthly).c_str());
    out << line;
  }
  if (undefined_daily + undefined_monthly > 0) {
    out << "undefined entries (zero outflow variance): daily " << undefined_daily << ", monthly "
        << undefined_monthly << "\n";
  }
  return out.str();
}

std::string BullwhipTable::to_json(const ReleaseLayout& layout) const {
  const auto opt = [](std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  nlohmann::json j;
  j["window"] = options.window;
  j["warmup"] = options.warmup;
  j["steps_used"] = steps_used;
  j["bins_used"] = bins_used;
  j["undefined_daily"] = undefined_daily;
  j["undefined_monthly"] = undefined_monthly;
  for (const auto& r : tiers) {
    j["tiers"].push_back({{"tier", r.tier}, {"nodes", r.nodes}, {"daily", opt(r.daily)}, {"monthly", opt(r.monthly)}});
  }
  for (std::size_t n = 0; n < node_daily.size(); ++n) {
    if (layout.roles[n] == NodeRole::kSource) continue;
    j["nodes"][layout.nodes[n]] = {{"daily", opt(node_daily[n])}, {"monthly", opt(node_monthly[n])}};
  }
  return j.dump(2);
}

}  // namespace echelon
