#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "echelon/network.hpp"

namespace echelon {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Range&) const = default;
};

struct IntRange {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  bool operator==(const IntRange&) const = default;
};

struct StructuralParams {
  std::int64_t items = 50;        // C
  std::int64_t horizon = 52560;   // T
  std::uint64_t seed = 2025;
  double pipeline_multiplier = 7.0;  // m; 0 selects the reactive rule
  std::string step_label = "day";
  bool operator==(const StructuralParams&) const = default;
};

struct DemandKnobs {
  Range base_rate{80.0, 250.0};
  Range yearly_amp1{0.12, 0.28};
  Range yearly_amp2{0.04, 0.10};
  Range weekly_amp{0.04, 0.10};
  Range ar_coeff{0.9990, 0.9996};
  // Single shared AR(1) coefficient for every item (drift sweep).
  std::optional<double> ar_coeff_override;
  Range ar_sigma{0.008, 0.018};
  double ar_init_sd = 0.10;
  Range burst_rate{2e-4, 1e-3};
  double burst_rate_mult = 1.0;
  IntRange burst_duration{30, 179};
  Range burst_height{0.20, 0.70};
  double burst_height_mult = 1.0;
  IntRange shock_count{5, 11};
  double shock_count_mult = 1.0;
  IntRange shock_duration{180, 1099};
  Range shock_height{0.20, 0.60};
  double shock_height_mult = 1.0;
  Range sensitivity{0.4, 1.2};
  Range unit_volume{1.0, 4.0};
  bool operator==(const DemandKnobs&) const = default;
};

struct InventoryKnobs {
  double sS_scale = 1.0;         // rho_sS, applied to every policy level
  double lead_time_scale = 1.0;  // rho_lt, applied to source lead-time means
  bool operator==(const InventoryKnobs&) const = default;
};

struct TransportKnobs {
  double container_count_scale = 1.0;  // rho_K
  double load_factor = 1.20;           // rho in the last-mile back-solve
  double packing_efficiency = 0.93;    // eta
  double mean_unit_volume = 2.5;
  double volume_rounding = 100.0;
  // Overrides the per-edge shares of back-solved edges, in edge order.
  std::vector<double> lastmile_split;
  // Non-backsolved volumes are quoted at this many items and scale linearly
  // with C; 0 disables the scaling.
  std::int64_t volume_reference_items = kVolumeReferenceItems;
  bool operator==(const TransportKnobs&) const = default;
};

struct ScenarioKnobs {
  DemandKnobs demand;
  InventoryKnobs inventory;
  TransportKnobs transport;
  bool operator==(const ScenarioKnobs&) const = default;
};

struct BaseVar {
  double base = 0.0;
  double var = 0.0;
  bool operator==(const BaseVar&) const = default;
};

struct NodePolicy {
  std::string node;
  BaseVar init;
  BaseVar reorder;      // s
  BaseVar order_up_to;  // S
  BaseVar lead_mean;    // mu, sources only
  bool operator==(const NodePolicy&) const = default;
};

struct Config {
  StructuralParams structural;
  ScenarioKnobs knobs;
  NetworkSpec network;
  std::vector<NodePolicy> policies;
  // Initial on-hand at the destination (no (s,S) policy there).
  double destination_initial = 0.0;
};

// Baseline: released runtime parameters, default knob distributions, the
// thirteen-node network and its node policy table.
Config baseline_config();
std::vector<NodePolicy> baseline_policies();

// Parses a YAML document with optional sections `structural`, `demand`,
// `inventory`, `transport`, `network`. Absent fields keep baseline values.
// `overrides` holds dotted-path assignments ("demand.burst_rate_mult=2") applied
// last. Validates the result.
Config load_config(const std::string& path, const std::vector<std::string>& overrides = {});
Config parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides = {});
// Applies overrides onto an existing config (same syntax as above).
Config apply_overrides(const Config& base, const std::vector<std::string>& overrides);

std::string to_yaml(const Config& config);

void validate_config(const Config& config);

// Effective network for a run: per-edge last-mile shares and upstream
// volumes scaled from the reference catalogue size. Back-solved edges stay
// marked; their volume is resolved from the intensity tensor at run time.
NetworkSpec effective_network(const Config& config);
std::int64_t scale_container_count(std::int64_t base, double scale);

std::string item_id(std::int64_t index, std::int64_t items);

// Per-(node, item) realized policy values.
struct PolicyCell {
  std::int64_t init = 0;
  std::int64_t reorder = 0;
  std::int64_t order_up_to = 0;
  std::int64_t lead_mean = 1;
  double lead_mean_raw = 0.0;  // before rho_lt and rounding
  bool operator==(const PolicyCell&) const = default;
};

class PolicyTable {
 public:
  PolicyTable() = default;
  PolicyTable(std::size_t nodes, std::size_t items)
      : nodes_(nodes), items_(items), cells_(nodes * items) {}

  const PolicyCell& at(std::size_t node, std::size_t item) const { return cells_[node * items_ + item]; }
  PolicyCell& at(std::size_t node, std::size_t item) { return cells_[node * items_ + item]; }
  std::size_t nodes() const { return nodes_; }
  std::size_t items() const { return items_; }

  bool operator==(const PolicyTable&) const = default;

 private:
  std::size_t nodes_ = 0;
  std::size_t items_ = 0;
  std::vector<PolicyCell> cells_;
};

struct PolicyWarning {
  std::string node;
  std::string message;
};

// Draws x = base + U[-var, var] per (node, item) from the isolated "policy"
// stream, scales, rounds to nearest, then clips to 0 <= s < S, s <= init <= S.
PolicyTable materialize_policies(const Config& config, std::vector<PolicyWarning>* warnings = nullptr);

std::int64_t lead_mean_for(double raw, double lead_time_scale);

}  // namespace echelon
