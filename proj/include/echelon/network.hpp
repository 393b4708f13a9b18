#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace echelon {

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NodeRole { kSource, kIntermediate, kDestination };

const char* to_string(NodeRole role);
NodeRole parse_node_role(const std::string& text);

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
};

struct NodeSpec {
  std::string id;
  NodeRole role = NodeRole::kIntermediate;
  std::string tier;
  // Display only; never used for routing.
  std::optional<GeoPoint> location;
};

struct EdgeSpec {
  std::string from;
  std::string to;
  std::int64_t transit = 1;  // tau_e, whole time units
  double volume = 0.0;       // V_e per container; meaningless while `backsolved`
  std::int64_t containers = 1;
  bool backsolved = false;
  // Share of the combined last-mile volume assigned to this edge.
  double lastmile_share = 0.0;

  double capacity() const { return static_cast<double>(containers) * volume; }
};

struct NetworkSpec {
  std::vector<NodeSpec> nodes;
  std::vector<EdgeSpec> edges;

  std::optional<std::size_t> find_node(const std::string& id) const;
  std::size_t node_index(const std::string& id) const;  // throws NetworkError
  std::size_t destination() const;                      // throws NetworkError
  std::vector<std::size_t> nodes_with_role(NodeRole role) const;
  bool has_backsolved_edges() const;
};

// Structural checks: unique ids, exactly one destination, edges reference known
// nodes, tau >= 1, K >= 1, V > 0 (or backsolved), DAG, and every node lies on a
// path from a source to the destination.
void validate_network(const NetworkSpec& spec);

// The thirteen-node U.S. network at the released parameters (volumes at C = 50,
// last-mile edges marked for back-solve, K = 3 everywhere).
NetworkSpec baseline_network();

// Upstream volumes in the baseline table are quoted at 50 items and scale
// linearly with the catalogue (x4 at C = 200).
inline constexpr std::int64_t kVolumeReferenceItems = 50;

struct BacksolveParams {
  double mean_unit_volume = 2.5;  // midpoint of U[1, 4]
  double load_factor = 1.20;
  double packing_efficiency = 0.93;
  double rounding = 100.0;
};

// Combined last-mile volume before the split: C * mean_intensity * v * rho / eta.
double lastmile_raw_volume(std::int64_t items, double mean_intensity, const BacksolveParams& p);

// Resolves every `backsolved` edge: its share of the raw volume is divided by the
// edge's container count and rounded to the nearest `rounding`, floor `rounding`.
// Without backsolved edges the spec is returned unchanged and `warning` is set.
NetworkSpec backsolve_lastmile(const NetworkSpec& spec, std::int64_t items, double mean_intensity,
                               const BacksolveParams& params, std::string* warning = nullptr);

struct ResolvedPath {
  std::vector<std::size_t> nodes;  // v0 ... vk
  std::vector<std::size_t> edges;  // indices into NetworkSpec::edges
  std::int64_t transit = 0;        // sum of tau over the path
  double distance = 0.0;           // under the weight that resolved the path
};

struct PullSupplier {
  std::size_t supplier = 0;
  ResolvedPath path;
};

struct RoutingTables {
  // Intermediate nodes in increasing tau/(K V) distance to the destination.
  std::vector<std::size_t> dispatch_order;
  // Indexed by node; populated for intermediates.
  std::vector<double> dispatch_distance;
  std::vector<ResolvedPath> dispatch_path;
  // Intermediate nodes, feeders first (pure-tau distance from nearest source).
  std::vector<std::size_t> pull_node_order;
  // Indexed by node; ancestors sorted by total transit time, ties by id.
  std::vector<std::vector<PullSupplier>> pull_order;
};

// Dispatch paths use the tau/(K V) weight, pull paths pure tau. Distance ties
// resolve by lexicographic node id. Requires all volumes resolved.
RoutingTables build_routing(const NetworkSpec& spec);

double dispatch_weight(const EdgeSpec& edge);

}  // namespace echelon
