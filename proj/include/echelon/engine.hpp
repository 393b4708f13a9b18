#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "echelon/config.hpp"
#include "echelon/demand.hpp"
#include "echelon/network.hpp"
#include "echelon/rng.hpp"

namespace echelon {

inline constexpr double kSmoothingAlpha = 0.05;
// Reactive shipping rule (m = 0) keeps this many time units of smoothed demand.
inline constexpr double kReactiveBufferUnits = 3.0;
inline constexpr double kLeadTimeCv = 0.2;

// Per-step residual volumes of every container on every edge.
class EdgeContainers {
 public:
  EdgeContainers() = default;
  explicit EdgeContainers(const NetworkSpec& net);

  void reset();
  std::span<double> edge(std::size_t e) {
    return {residual_.data() + offset_[e], static_cast<std::size_t>(count_[e])};
  }
  std::span<const double> edge(std::size_t e) const {
    return {residual_.data() + offset_[e], static_cast<std::size_t>(count_[e])};
  }
  std::size_t edge_count() const { return volume_.size(); }
  double volume(std::size_t e) const { return volume_[e]; }
  std::int64_t containers(std::size_t e) const { return count_[e]; }
  double capacity(std::size_t e) const { return volume_[e] * static_cast<double>(count_[e]); }
  double used(std::size_t e) const;
  double utilization(std::size_t e) const { return used(e) / capacity(e); }

 private:
  std::vector<double> volume_;
  std::vector<std::int64_t> count_;
  std::vector<std::size_t> offset_;
  std::vector<double> residual_;
};

// First-fit placement of up to `max_units` units of volume `unit_volume` along
// `path`, one unit at a time; a unit is committed only if every edge has a
// container with enough residual, and the first unit that does not fit stops
// the call. Returns the number of units placed.
std::int64_t greedy_pack(double unit_volume, std::int64_t max_units, std::span<const std::size_t> path,
                         EdgeContainers& containers);

// Units to ship toward the destination for one item:
// max(0, ceil(backlog + m * smoothed - in_transit - on_hand)), where m = 0
// selects the reactive buffer of kReactiveBufferUnits.
std::int64_t dispatch_target(std::int64_t backlog, double smoothed, double pipeline_multiplier,
                             std::int64_t in_transit, std::int64_t on_hand);

// L = max(1, ceil(X)), X ~ N(mu, (0.2 mu)^2).
std::int64_t draw_lead_time(double mean, Rng& rng);

struct OutstandingOrder {
  std::int64_t due = -1;  // -1: empty slot
  std::int64_t quantity = 0;
  bool empty() const { return due < 0; }
  bool operator==(const OutstandingOrder&) const = default;
};

// Markov state at the end of step t - 1 (t = number of completed steps).
struct TwinState {
  std::int64_t t = 0;
  std::size_t nodes = 0;
  std::size_t items = 0;
  std::vector<std::int64_t> on_hand;  // node-major
  std::vector<std::int64_t> backlog;
  std::vector<OutstandingOrder> outstanding;
  // Arrival time -> per-item units bound for the destination.
  std::map<std::int64_t, std::vector<std::int64_t>> in_transit;
  std::vector<double> smoothed;

  std::size_t idx(std::size_t node, std::size_t item) const { return node * items + item; }
  std::int64_t in_transit_total(std::size_t item) const;
  // Fixed scalar dimension C(3|N| + 1): OH, B, Out slot per (n, i) plus smoothed demand.
  std::size_t fixed_dimension() const { return items * (3 * nodes + 1); }

  bool operator==(const TwinState&) const = default;
};

struct DispatchRecord {
  std::int64_t day = 0;
  std::int64_t arrival_day = 0;
  std::size_t from = 0;
  std::size_t to = 0;
  std::size_t item = 0;
  std::int64_t units = 0;
  const ResolvedPath* path = nullptr;  // valid for the duration of the step callback
};

struct SourceOrder {
  std::int64_t day = 0;
  std::int64_t arrival_day = 0;
  std::size_t node = 0;
  std::size_t item = 0;
  std::int64_t units = 0;
};

// Everything one transition emits, reused across steps.
struct StepRecord {
  std::int64_t t = 0;
  std::vector<std::int64_t> demand;
  std::vector<std::int64_t> served;
  std::vector<std::int64_t> new_backlog;
  std::vector<std::int64_t> on_hand_before_ship;  // destination, between sub-steps 4 and 5
  std::vector<std::int64_t> backlog_before_ship;
  std::vector<std::int64_t> destination_arrivals;  // IT units due this step
  std::vector<DispatchRecord> shipments;
  std::vector<SourceOrder> source_orders;
  std::vector<double> edge_utilization;
  double shock_level = 0.0;
};

struct RolloutSummary {
  std::int64_t steps = 0;
  std::vector<std::int64_t> total_demand;
  std::vector<std::int64_t> total_served;
  std::vector<std::int64_t> total_new_backlog;
  std::int64_t shipment_rows = 0;
  std::int64_t source_orders = 0;
  double wall_seconds = 0.0;

  double fill_rate(std::size_t item) const;
  double overall_fill_rate() const;
};

// Immutable run setup plus the mid-run scalers a session may change.
class Engine {
 public:
  explicit Engine(const Config& config);

  const Config& config() const { return config_; }
  const NetworkSpec& network() const { return network_; }
  const RoutingTables& routing() const { return *routing_; }
  const PolicyTable& policies() const { return policies_; }
  const IntensityTensor& tensor() const { return tensor_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }
  const std::vector<double>& unit_volumes() const { return unit_volumes_; }
  double mean_intensity() const { return mean_intensity_; }
  std::size_t destination() const { return destination_; }
  std::int64_t horizon() const { return tensor_.horizon(); }

  const TwinState& state() const { return state_; }
  const TwinState& initial_state() const { return initial_; }
  bool done() const { return state_.t >= horizon(); }

  // Executes sub-steps (1)-(7) for step state().t and returns what it emitted.
  const StepRecord& step();

  // Mid-run controls. Demand scaling applies to lambda from step `from` on;
  // capacity and lead-time changes apply from the next executed step.
  void scale_demand_from(std::int64_t from, double factor);
  void set_container_scale(std::size_t edge, double scale);
  void set_lead_time_scale(double scale);

  void restore(const TwinState& state);

 private:
  void rebuild_routing();

  Config config_;
  NetworkSpec network_;
  std::vector<std::int64_t> base_containers_;
  std::shared_ptr<const RoutingTables> routing_;
  PolicyTable policies_;
  IntensityTensor tensor_;
  DemandSampler sampler_;
  std::vector<std::string> item_ids_;
  std::vector<double> unit_volumes_;
  std::vector<std::uint64_t> lead_keys_;  // per (node, item)
  double mean_intensity_ = 0.0;
  std::size_t destination_ = 0;
  std::vector<std::size_t> sources_;
  EdgeContainers containers_;
  TwinState state_;
  TwinState initial_;
  StepRecord record_;
};

TwinState init_state(const NetworkSpec& net, const PolicyTable& policies, const IntensityTensor& tensor);

// Consumers of a rollout. `begin` sees the engine before the first step.
class RolloutSink {
 public:
  virtual ~RolloutSink() = default;
  virtual void begin(const Engine&) {}
  virtual void on_step(const Engine& engine, const StepRecord& record) = 0;
  virtual void finish(const Engine&, const RolloutSummary&) {}
};

RolloutSummary run_rollout(Engine& engine, std::span<RolloutSink* const> sinks);
RolloutSummary run_rollout(const Config& config, std::span<RolloutSink* const> sinks);

// Versioned JSON snapshot of the Markov state. Demand and lead-time draws are
// keyed by (stream, t), so the state alone fixes the remaining trajectory for
// a given configuration.
std::string snapshot_json(const TwinState& state, std::uint64_t seed);
TwinState restore_snapshot(const std::string& json);
std::string state_hash(const TwinState& state);

}  // namespace echelon
