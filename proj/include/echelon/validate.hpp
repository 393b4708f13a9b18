#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "echelon/engine.hpp"
#include "echelon/network.hpp"

namespace echelon {

// Names and roles needed to interpret a stream of steps.
struct ReleaseLayout {
  std::vector<std::string> nodes;
  std::vector<std::string> tiers;
  std::vector<NodeRole> roles;
  std::vector<std::string> items;
  std::size_t destination = 0;

  static ReleaseLayout from(const NetworkSpec& net, const std::vector<std::string>& items);
  std::size_t node_count() const { return nodes.size(); }
  std::size_t item_count() const { return items.size(); }
};

// Everything observable about one step, either from a live engine or from the
// release files. Node/item fields are indices into a ReleaseLayout.
struct StepObservation {
  std::int64_t t = 0;
  std::vector<std::int64_t> demand;  // per item
  std::vector<std::int64_t> served;
  std::vector<std::int64_t> new_backlog;
  std::vector<std::int64_t> on_hand_before_ship;
  std::vector<std::int64_t> backlog_before_ship;
  std::vector<std::int64_t> on_hand;  // end of step, node-major
  std::vector<std::int64_t> backlog;
  std::vector<std::int64_t> dest_in_transit;  // end of step, per item
  std::vector<DispatchRecord> shipments;      // path may be null
  std::vector<SourceOrder> source_orders;
  bool has_source_orders = true;

  void resize(std::size_t nodes, std::size_t items);
};

// Fills `obs` from an engine record and the engine's post-step state.
void observe_engine_step(const Engine& engine, const StepRecord& record, StepObservation& obs);

struct ViolationCoord {
  std::int64_t t = 0;
  std::optional<std::size_t> node;
  std::size_t item = 0;
};

struct LawStats {
  std::int64_t checks = 0;
  std::int64_t violations = 0;
  std::int64_t max_abs_residual = 0;
  std::optional<ViolationCoord> first;
  bool skipped = false;

  void record(std::int64_t residual, const ViolationCoord& where);
};

struct ConservationReport {
  std::int64_t first_step = 0;
  std::int64_t last_step = -1;
  LawStats node_mass;     // law (a)
  LawStats global_mass;   // law (b)
  LawStats backlog;       // law (c)
  LawStats row_identity;  // served + new_backlog = demand
  LawStats snapshot;      // before-ship snapshot vs end-of-step state
  LawStats in_transit;    // history in-transit vs replayed destination shipments
  LawStats backlog_zero;  // backlog is zero off the destination
  std::vector<std::string> notes;

  bool passed() const;
  std::string to_text(const ReleaseLayout& layout) const;
  std::string to_json(const ReleaseLayout& layout) const;
};

// Per-step residuals, exposed so tests can check the checker's algebra.
struct StepResiduals {
  std::vector<std::int64_t> node_mass;    // node-major, 0 where not checked
  std::vector<std::int64_t> global_mass;  // per item
  std::vector<std::int64_t> backlog;      // per item
  // Change of (history in-transit - replayed in-transit) over the step.
  std::vector<std::int64_t> in_transit_drift;
};

// Streaming audit of the three conservation laws. Each identity compares the
// end of step t with the end of step t - 1 under the engine's arrival
// convention (anything due at t is received during step t). Without an
// initial state the first observed step only seeds the comparison.
class ConservationAuditor {
 public:
  explicit ConservationAuditor(ReleaseLayout layout, const TwinState* initial = nullptr);

  const StepResiduals& observe(const StepObservation& obs);
  ConservationReport report() const;
  const ReleaseLayout& layout() const { return layout_; }

 private:
  struct Pending {
    std::size_t node;
    std::size_t item;
    std::int64_t units;
  };

  ReleaseLayout layout_;
  bool primed_ = false;
  bool started_ = false;
  std::int64_t expected_t_ = 0;
  std::vector<std::int64_t> prev_on_hand_;
  std::vector<std::int64_t> prev_backlog_;  // destination, per item
  std::vector<std::int64_t> prev_internal_;
  std::vector<std::int64_t> prev_it_drift_;
  // Arrival step -> pending receipts (pull shipments and source orders) and
  // destination arrivals.
  std::map<std::int64_t, std::vector<Pending>> pending_node_;
  std::map<std::int64_t, std::vector<std::int64_t>> pending_dest_;
  std::vector<std::int64_t> pull_in_flight_;  // per item
  std::vector<std::int64_t> replay_in_transit_;
  bool source_orders_seen_ = true;
  ConservationReport report_;
  StepResiduals residuals_;
};

// Flow statistics for the amplification ratio Var(inflow) / Var(outflow),
// accumulated online at step resolution and in complete `window`-step bins
// after `warmup` steps.
struct BullwhipOptions {
  std::int64_t window = 30;
  std::int64_t warmup = 365;
};

struct BullwhipEntry {
  std::optional<double> daily;
  std::optional<double> monthly;
};

struct TierRow {
  std::string tier;
  std::vector<std::string> nodes;
  std::optional<double> daily;
  std::optional<double> monthly;
};

struct BullwhipTable {
  BullwhipOptions options;
  std::int64_t steps_used = 0;
  std::int64_t bins_used = 0;
  std::vector<std::vector<BullwhipEntry>> entries;  // [node][item]; empty for sources
  std::vector<std::optional<double>> node_daily;
  std::vector<std::optional<double>> node_monthly;
  std::vector<TierRow> tiers;  // in first-appearance order, sources excluded
  std::int64_t undefined_daily = 0;
  std::int64_t undefined_monthly = 0;

  std::string to_text(const ReleaseLayout& layout) const;
  std::string to_json(const ReleaseLayout& layout) const;
};

class BullwhipAccumulator {
 public:
  BullwhipAccumulator(ReleaseLayout layout, BullwhipOptions options = {});

  void observe(const StepObservation& obs);
  BullwhipTable table() const;

 private:
  struct Moments {
    std::int64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;
    void add(double x);
    std::optional<double> variance() const;
  };
  struct Series {
    Moments daily_in, daily_out, monthly_in, monthly_out;
    double bin_in = 0.0;
    double bin_out = 0.0;
  };

  ReleaseLayout layout_;
  BullwhipOptions options_;
  std::vector<Series> series_;  // node-major
  std::map<std::int64_t, std::vector<std::pair<std::size_t, std::int64_t>>> arrivals_;  // t -> (n*C+i, units)
  std::vector<std::int64_t> inflow_;
  std::vector<std::int64_t> outflow_;
  std::int64_t steps_used_ = 0;
  std::int64_t bins_used_ = 0;
};

// Adapts engine steps into observations for any number of consumers.
class ObservationSink : public RolloutSink {
 public:
  using Consumer = std::function<void(const StepObservation&)>;
  explicit ObservationSink(std::vector<Consumer> consumers) : consumers_(std::move(consumers)) {}
  void on_step(const Engine& engine, const StepRecord& record) override;

 private:
  std::vector<Consumer> consumers_;
  StepObservation obs_;
};

}  // namespace echelon
