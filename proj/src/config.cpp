#include "echelon/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "echelon/rng.hpp"

namespace echelon {

namespace {

NodePolicy policy(const char* node, BaseVar init, BaseVar s, BaseVar S, BaseVar mu) {
  return NodePolicy{node, init, s, S, mu};
}

// ---- YAML -> Config ---------------------------------------------------------

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& where) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail(where, "expected a scalar of the right type");
  }
}

Range read_range(const YAML::Node& node, const std::string& where) {
  if (!node.IsSequence() || node.size() != 2) fail(where, "expected [lo, hi]");
  return {scalar<double>(node[0], where), scalar<double>(node[1], where)};
}

IntRange read_int_range(const YAML::Node& node, const std::string& where) {
  if (!node.IsSequence() || node.size() != 2) fail(where, "expected [lo, hi]");
  return {scalar<std::int64_t>(node[0], where), scalar<std::int64_t>(node[1], where)};
}

BaseVar read_base_var(const YAML::Node& node, const std::string& where) {
  if (node.IsScalar()) return {scalar<double>(node, where), 0.0};
  if (!node.IsSequence() || node.size() != 2) fail(where, "expected [base, var]");
  return {scalar<double>(node[0], where), scalar<double>(node[1], where)};
}

void check_keys(const YAML::Node& map, const std::string& section,
                std::initializer_list<const char*> allowed) {
  if (!map.IsMap()) fail(section, "expected a mapping");
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      fail(section, "unknown field '" + key + "'");
    }
  }
}

#define ECHELON_READ(map, key, section, setter)          \
  if (const YAML::Node n_ = (map)[key]; n_) {            \
    const std::string where_ = std::string(section) + "." + (key); \
    setter;                                              \
  }

void read_structural(const YAML::Node& y, StructuralParams& s) {
  check_keys(y, "structural", {"items", "horizon", "seed", "pipeline_multiplier", "step_label"});
  ECHELON_READ(y, "items", "structural", s.items = scalar<std::int64_t>(n_, where_));
  ECHELON_READ(y, "horizon", "structural", s.horizon = scalar<std::int64_t>(n_, where_));
  ECHELON_READ(y, "seed", "structural", s.seed = scalar<std::uint64_t>(n_, where_));
  ECHELON_READ(y, "pipeline_multiplier", "structural",
               s.pipeline_multiplier = scalar<double>(n_, where_));
  ECHELON_READ(y, "step_label", "structural", s.step_label = scalar<std::string>(n_, where_));
}

void read_demand(const YAML::Node& y, DemandKnobs& d) {
  check_keys(y, "demand",
             {"base_rate", "yearly_amp1", "yearly_amp2", "weekly_amp", "ar_coeff", "ar_coeff_override",
              "ar_sigma", "ar_init_sd", "burst_rate", "burst_rate_mult", "burst_duration", "burst_height",
              "burst_height_mult", "shock_count", "shock_count_mult", "shock_duration", "shock_height",
              "shock_height_mult", "sensitivity", "unit_volume"});
  ECHELON_READ(y, "base_rate", "demand", d.base_rate = read_range(n_, where_));
  ECHELON_READ(y, "yearly_amp1", "demand", d.yearly_amp1 = read_range(n_, where_));
  ECHELON_READ(y, "yearly_amp2", "demand", d.yearly_amp2 = read_range(n_, where_));
  ECHELON_READ(y, "weekly_amp", "demand", d.weekly_amp = read_range(n_, where_));
  ECHELON_READ(y, "ar_coeff", "demand", d.ar_coeff = read_range(n_, where_));
  ECHELON_READ(y, "ar_coeff_override", "demand", {
    if (n_.IsNull()) {
      d.ar_coeff_override.reset();
    } else {
      d.ar_coeff_override = scalar<double>(n_, where_);
    }
  });
  ECHELON_READ(y, "ar_sigma", "demand", d.ar_sigma = read_range(n_, where_));
  ECHELON_READ(y, "ar_init_sd", "demand", d.ar_init_sd = scalar<double>(n_, where_));
  ECHELON_READ(y, "burst_rate", "demand", d.burst_rate = read_range(n_, where_));
  ECHELON_READ(y, "burst_rate_mult", "demand", d.burst_rate_mult = scalar<double>(n_, where_));
  ECHELON_READ(y, "burst_duration", "demand", d.burst_duration = read_int_range(n_, where_));
  ECHELON_READ(y, "burst_height", "demand", d.burst_height = read_range(n_, where_));
  ECHELON_READ(y, "burst_height_mult", "demand", d.burst_height_mult = scalar<double>(n_, where_));
  ECHELON_READ(y, "shock_count", "demand", d.shock_count = read_int_range(n_, where_));
  ECHELON_READ(y, "shock_count_mult", "demand", d.shock_count_mult = scalar<double>(n_, where_));
  ECHELON_READ(y, "shock_duration", "demand", d.shock_duration = read_int_range(n_, where_));
  ECHELON_READ(y, "shock_height", "demand", d.shock_height = read_range(n_, where_));
  ECHELON_READ(y, "shock_height_mult", "demand", d.shock_height_mult = scalar<double>(n_, where_));
  ECHELON_READ(y, "sensitivity", "demand", d.sensitivity = read_range(n_, where_));
  ECHELON_READ(y, "unit_volume", "demand", d.unit_volume = read_range(n_, where_));
}

void read_inventory(const YAML::Node& y, Config& c) {
  check_keys(y, "inventory", {"sS_scale", "lead_time_scale", "destination_initial", "policies"});
  auto& inv = c.knobs.inventory;
  ECHELON_READ(y, "sS_scale", "inventory", inv.sS_scale = scalar<double>(n_, where_));
  ECHELON_READ(y, "lead_time_scale", "inventory", inv.lead_time_scale = scalar<double>(n_, where_));
  ECHELON_READ(y, "destination_initial", "inventory",
               c.destination_initial = scalar<double>(n_, where_));
  if (const YAML::Node list = y["policies"]; list) {
    if (!list.IsSequence()) fail("inventory.policies", "expected a list");
    c.policies.clear();
    for (std::size_t k = 0; k < list.size(); ++k) {
      const YAML::Node p = list[k];
      const std::string where = "inventory.policies[" + std::to_string(k) + "]";
      check_keys(p, where, {"node", "init", "s", "S", "lead_mean"});
      NodePolicy np;
      if (!p["node"]) fail(where, "missing 'node'");
      np.node = scalar<std::string>(p["node"], where + ".node");
      if (p["init"]) np.init = read_base_var(p["init"], where + ".init");
      if (p["s"]) np.reorder = read_base_var(p["s"], where + ".s");
      if (p["S"]) np.order_up_to = read_base_var(p["S"], where + ".S");
      np.lead_mean = {1.0, 0.0};
      if (p["lead_mean"]) np.lead_mean = read_base_var(p["lead_mean"], where + ".lead_mean");
      c.policies.push_back(np);
    }
  }
}

void read_transport(const YAML::Node& y, TransportKnobs& t) {
  check_keys(y, "transport",
             {"container_count_scale", "load_factor", "packing_efficiency", "mean_unit_volume",
              "volume_rounding", "lastmile_split", "volume_reference_items"});
  ECHELON_READ(y, "container_count_scale", "transport",
               t.container_count_scale = scalar<double>(n_, where_));
  ECHELON_READ(y, "load_factor", "transport", t.load_factor = scalar<double>(n_, where_));
  ECHELON_READ(y, "packing_efficiency", "transport", t.packing_efficiency = scalar<double>(n_, where_));
  ECHELON_READ(y, "mean_unit_volume", "transport", t.mean_unit_volume = scalar<double>(n_, where_));
  ECHELON_READ(y, "volume_rounding", "transport", t.volume_rounding = scalar<double>(n_, where_));
  ECHELON_READ(y, "volume_reference_items", "transport",
               t.volume_reference_items = scalar<std::int64_t>(n_, where_));
  ECHELON_READ(y, "lastmile_split", "transport", {
    if (!n_.IsSequence()) fail(where_, "expected a list of shares");
    t.lastmile_split.clear();
    for (const auto& v : n_) t.lastmile_split.push_back(scalar<double>(v, where_));
  });
}

void read_network(const YAML::Node& y, NetworkSpec& net) {
  check_keys(y, "network", {"nodes", "edges"});
  const YAML::Node nodes = y["nodes"];
  const YAML::Node edges = y["edges"];
  if (!nodes || !nodes.IsSequence()) fail("network.nodes", "expected a list");
  if (!edges || !edges.IsSequence()) fail("network.edges", "expected a list");
  net = NetworkSpec{};
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const YAML::Node n = nodes[k];
    const std::string where = "network.nodes[" + std::to_string(k) + "]";
    check_keys(n, where, {"id", "role", "tier", "lat", "lon"});
    NodeSpec spec;
    if (!n["id"] || !n["role"]) fail(where, "requires 'id' and 'role'");
    spec.id = scalar<std::string>(n["id"], where + ".id");
    try {
      spec.role = parse_node_role(scalar<std::string>(n["role"], where + ".role"));
    } catch (const NetworkError& e) {
      fail(where, e.what());
    }
    if (n["tier"]) spec.tier = scalar<std::string>(n["tier"], where + ".tier");
    if (n["lat"] && n["lon"]) {
      spec.location = GeoPoint{scalar<double>(n["lat"], where), scalar<double>(n["lon"], where)};
    }
    net.nodes.push_back(spec);
  }
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const YAML::Node e = edges[k];
    const std::string where = "network.edges[" + std::to_string(k) + "]";
    check_keys(e, where, {"from", "to", "transit", "volume", "containers", "share"});
    if (!e["from"] || !e["to"] || !e["transit"] || !e["volume"]) {
      fail(where, "requires 'from', 'to', 'transit' and 'volume'");
    }
    EdgeSpec spec;
    spec.from = scalar<std::string>(e["from"], where + ".from");
    spec.to = scalar<std::string>(e["to"], where + ".to");
    spec.transit = scalar<std::int64_t>(e["transit"], where + ".transit");
    if (e["volume"].IsScalar() && e["volume"].Scalar() == "backsolved") {
      spec.backsolved = true;
    } else {
      spec.volume = scalar<double>(e["volume"], where + ".volume");
    }
    spec.containers = e["containers"] ? scalar<std::int64_t>(e["containers"], where + ".containers") : 3;
    if (e["share"]) spec.lastmile_share = scalar<double>(e["share"], where + ".share");
    net.edges.push_back(spec);
  }
}

Config from_yaml(const YAML::Node& root) {
  Config c = baseline_config();
  if (!root || root.IsNull()) return c;
  check_keys(root, "config", {"structural", "demand", "inventory", "transport", "network"});
  if (root["structural"]) read_structural(root["structural"], c.structural);
  if (root["demand"]) read_demand(root["demand"], c.knobs.demand);
  if (root["inventory"]) read_inventory(root["inventory"], c);
  if (root["transport"]) read_transport(root["transport"], c.knobs.transport);
  if (root["network"]) read_network(root["network"], c.network);
  return c;
}

YAML::Node parse_yaml(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
}

void apply_override(YAML::Node& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty path segment");
    parts.push_back(part);
  }
  YAML::Node parsed = parse_yaml(value);
  // yaml-cpp node assignment aliases rather than copies, so walk with a
  // vector of handles and assign at the leaf.
  std::vector<YAML::Node> chain{root};
  for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
    YAML::Node cur = chain.back();
    const std::string& key = parts[k];
    if (cur.IsSequence()) {
      const auto idx = std::stoul(key);
      if (idx >= cur.size()) throw ConfigError("override '" + assignment + "': index out of range");
      chain.push_back(cur[idx]);
    } else {
      chain.push_back(cur[key]);
    }
  }
  YAML::Node leaf_parent = chain.back();
  if (leaf_parent.IsSequence()) {
    const auto idx = std::stoul(parts.back());
    if (idx >= leaf_parent.size()) throw ConfigError("override '" + assignment + "': index out of range");
    leaf_parent[idx] = parsed;
  } else {
    leaf_parent[parts.back()] = parsed;
  }
}

// ---- Config -> YAML ---------------------------------------------------------

void emit_range(YAML::Emitter& out, const char* key, Range r) {
  out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq << r.lo << r.hi << YAML::EndSeq;
}

void emit_range(YAML::Emitter& out, const char* key, IntRange r) {
  out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq << r.lo << r.hi << YAML::EndSeq;
}

void emit_base_var(YAML::Emitter& out, const char* key, BaseVar b) {
  out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq << b.base << b.var << YAML::EndSeq;
}

}  // namespace

std::vector<NodePolicy> baseline_policies() {
  return {
      policy("SanFrancisco", {4000, 400}, {400, 60}, {4000, 400}, {3, 1}),
      policy("StLouis", {4000, 400}, {400, 60}, {4000, 400}, {3, 1}),
      policy("Orlando", {4000, 400}, {400, 60}, {4000, 400}, {3, 1}),
      policy("Nashville", {8000, 800}, {1000, 150}, {8000, 800}, {3, 1}),
      policy("Atlanta", {6000, 600}, {500, 80}, {6000, 600}, {1, 0}),
      policy("Chicago", {5000, 500}, {1000, 150}, {5000, 500}, {8, 1}),
      policy("Charlotte", {5000, 500}, {1000, 150}, {5000, 500}, {7, 1}),
      policy("Memphis", {3000, 300}, {500, 80}, {3000, 300}, {7, 1}),
      policy("Columbus", {4000, 400}, {500, 80}, {4000, 400}, {2, 0}),
      policy("Richmond", {4000, 400}, {500, 80}, {4000, 400}, {2, 0}),
      policy("Philadelphia", {3000, 300}, {500, 80}, {3000, 300}, {1, 0}),
      policy("Baltimore", {3000, 300}, {500, 80}, {3000, 300}, {2, 0}),
  };
}

Config baseline_config() {
  Config c;
  c.network = baseline_network();
  c.policies = baseline_policies();
  return c;
}

void validate_config(const Config& c) {
  const auto& s = c.structural;
  if (s.items < 1) throw ConfigError("structural.items must be >= 1");
  if (s.horizon < 2) throw ConfigError("structural.horizon must be >= 2");
  if (!(s.pipeline_multiplier >= 0.0)) throw ConfigError("structural.pipeline_multiplier must be >= 0");

  const auto check_range = [](const char* name, double lo, double hi) {
    if (!(lo <= hi)) throw ConfigError(std::string("demand.") + name + ": lower bound exceeds upper bound");
  };
  const auto check_positive = [](const std::string& name, double v) {
    if (!(v > 0.0)) throw ConfigError(name + " must be > 0");
  };
  const auto& d = c.knobs.demand;
  check_range("base_rate", d.base_rate.lo, d.base_rate.hi);
  check_range("yearly_amp1", d.yearly_amp1.lo, d.yearly_amp1.hi);
  check_range("yearly_amp2", d.yearly_amp2.lo, d.yearly_amp2.hi);
  check_range("weekly_amp", d.weekly_amp.lo, d.weekly_amp.hi);
  check_range("ar_coeff", d.ar_coeff.lo, d.ar_coeff.hi);
  check_range("ar_sigma", d.ar_sigma.lo, d.ar_sigma.hi);
  check_range("burst_rate", d.burst_rate.lo, d.burst_rate.hi);
  check_range("burst_duration", static_cast<double>(d.burst_duration.lo), static_cast<double>(d.burst_duration.hi));
  check_range("burst_height", d.burst_height.lo, d.burst_height.hi);
  check_range("shock_count", static_cast<double>(d.shock_count.lo), static_cast<double>(d.shock_count.hi));
  check_range("shock_duration", static_cast<double>(d.shock_duration.lo), static_cast<double>(d.shock_duration.hi));
  check_range("shock_height", d.shock_height.lo, d.shock_height.hi);
  check_range("sensitivity", d.sensitivity.lo, d.sensitivity.hi);
  check_range("unit_volume", d.unit_volume.lo, d.unit_volume.hi);
  if (d.base_rate.lo <= 0.0) throw ConfigError("demand.base_rate must be positive");
  if (d.unit_volume.lo <= 0.0) throw ConfigError("demand.unit_volume must be positive");
  if (d.burst_duration.lo < 1 || d.shock_duration.lo < 1) {
    throw ConfigError("pulse durations must be >= 1");
  }
  if (d.shock_count.lo < 0) throw ConfigError("demand.shock_count must be >= 0");
  if (d.ar_sigma.lo < 0.0 || d.ar_init_sd < 0.0) throw ConfigError("AR(1) scales must be >= 0");
  if (d.burst_rate.lo < 0.0) throw ConfigError("demand.burst_rate must be >= 0");
  check_positive("demand.burst_rate_mult", d.burst_rate_mult);
  check_positive("demand.burst_height_mult", d.burst_height_mult);
  // The shock sweep's (0, 1) setting disables macro shocks entirely.
  if (!(d.shock_count_mult >= 0.0)) throw ConfigError("demand.shock_count_mult must be >= 0");
  check_positive("demand.shock_height_mult", d.shock_height_mult);

  check_positive("inventory.sS_scale", c.knobs.inventory.sS_scale);
  check_positive("inventory.lead_time_scale", c.knobs.inventory.lead_time_scale);
  if (c.destination_initial < 0.0) throw ConfigError("inventory.destination_initial must be >= 0");

  const auto& t = c.knobs.transport;
  check_positive("transport.container_count_scale", t.container_count_scale);
  check_positive("transport.load_factor", t.load_factor);
  check_positive("transport.packing_efficiency", t.packing_efficiency);
  check_positive("transport.mean_unit_volume", t.mean_unit_volume);
  check_positive("transport.volume_rounding", t.volume_rounding);
  if (t.volume_reference_items < 0) throw ConfigError("transport.volume_reference_items must be >= 0");
  for (const double share : t.lastmile_split) {
    if (share < 0.0) throw ConfigError("transport.lastmile_split entries must be >= 0");
  }

  try {
    validate_network(c.network);
  } catch (const NetworkError& e) {
    throw ConfigError(std::string("network: ") + e.what());
  }
  const auto backsolved = std::count_if(c.network.edges.begin(), c.network.edges.end(),
                                        [](const EdgeSpec& e) { return e.backsolved; });
  if (!t.lastmile_split.empty() && static_cast<std::int64_t>(t.lastmile_split.size()) != backsolved) {
    throw ConfigError("transport.lastmile_split has " + std::to_string(t.lastmile_split.size()) +
                      " entries but the network has " + std::to_string(backsolved) + " back-solved edges");
  }

  for (const auto& node : c.network.nodes) {
    if (node.role == NodeRole::kDestination) continue;
    const auto it = std::find_if(c.policies.begin(), c.policies.end(),
                                 [&](const NodePolicy& p) { return p.node == node.id; });
    if (it == c.policies.end()) throw ConfigError("node '" + node.id + "' has no inventory policy");
    const auto check_bv = [&](const char* what, BaseVar b) {
      if (b.var < 0.0) throw ConfigError("policy " + node.id + "." + what + ": var must be >= 0");
    };
    check_bv("init", it->init);
    check_bv("s", it->reorder);
    check_bv("S", it->order_up_to);
    check_bv("lead_mean", it->lead_mean);
    if (node.role == NodeRole::kSource && it->lead_mean.base - it->lead_mean.var <= 0.0) {
      throw ConfigError("policy " + node.id + ".lead_mean must stay positive");
    }
  }
  for (const auto& p : c.policies) {
    if (!c.network.find_node(p.node)) throw ConfigError("policy references unknown node '" + p.node + "'");
  }
}

Config parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides) {
  YAML::Node root = parse_yaml(yaml_text);
  if (!overrides.empty()) {
    if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    for (const auto& o : overrides) apply_override(root, o);
  }
  Config c = from_yaml(root);
  validate_config(c);
  return c;
}

Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides);
}

Config apply_overrides(const Config& base, const std::vector<std::string>& overrides) {
  if (overrides.empty()) return base;
  return parse_config(to_yaml(base), overrides);
}

std::string to_yaml(const Config& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;

  out << YAML::Key << "structural" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "items" << YAML::Value << c.structural.items;
  out << YAML::Key << "horizon" << YAML::Value << c.structural.horizon;
  out << YAML::Key << "seed" << YAML::Value << c.structural.seed;
  out << YAML::Key << "pipeline_multiplier" << YAML::Value << c.structural.pipeline_multiplier;
  out << YAML::Key << "step_label" << YAML::Value << c.structural.step_label;
  out << YAML::EndMap;

  const auto& d = c.knobs.demand;
  out << YAML::Key << "demand" << YAML::Value << YAML::BeginMap;
  emit_range(out, "base_rate", d.base_rate);
  emit_range(out, "yearly_amp1", d.yearly_amp1);
  emit_range(out, "yearly_amp2", d.yearly_amp2);
  emit_range(out, "weekly_amp", d.weekly_amp);
  emit_range(out, "ar_coeff", d.ar_coeff);
  out << YAML::Key << "ar_coeff_override" << YAML::Value;
  if (d.ar_coeff_override) {
    out << *d.ar_coeff_override;
  } else {
    out << YAML::Null;
  }
  emit_range(out, "ar_sigma", d.ar_sigma);
  out << YAML::Key << "ar_init_sd" << YAML::Value << d.ar_init_sd;
  emit_range(out, "burst_rate", d.burst_rate);
  out << YAML::Key << "burst_rate_mult" << YAML::Value << d.burst_rate_mult;
  emit_range(out, "burst_duration", d.burst_duration);
  emit_range(out, "burst_height", d.burst_height);
  out << YAML::Key << "burst_height_mult" << YAML::Value << d.burst_height_mult;
  emit_range(out, "shock_count", d.shock_count);
  out << YAML::Key << "shock_count_mult" << YAML::Value << d.shock_count_mult;
  emit_range(out, "shock_duration", d.shock_duration);
  emit_range(out, "shock_height", d.shock_height);
  out << YAML::Key << "shock_height_mult" << YAML::Value << d.shock_height_mult;
  emit_range(out, "sensitivity", d.sensitivity);
  emit_range(out, "unit_volume", d.unit_volume);
  out << YAML::EndMap;

  out << YAML::Key << "inventory" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "sS_scale" << YAML::Value << c.knobs.inventory.sS_scale;
  out << YAML::Key << "lead_time_scale" << YAML::Value << c.knobs.inventory.lead_time_scale;
  out << YAML::Key << "destination_initial" << YAML::Value << c.destination_initial;
  out << YAML::Key << "policies" << YAML::Value << YAML::BeginSeq;
  for (const auto& p : c.policies) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "node" << YAML::Value << p.node;
    emit_base_var(out, "init", p.init);
    emit_base_var(out, "s", p.reorder);
    emit_base_var(out, "S", p.order_up_to);
    emit_base_var(out, "lead_mean", p.lead_mean);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;

  const auto& t = c.knobs.transport;
  out << YAML::Key << "transport" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "container_count_scale" << YAML::Value << t.container_count_scale;
  out << YAML::Key << "load_factor" << YAML::Value << t.load_factor;
  out << YAML::Key << "packing_efficiency" << YAML::Value << t.packing_efficiency;
  out << YAML::Key << "mean_unit_volume" << YAML::Value << t.mean_unit_volume;
  out << YAML::Key << "volume_rounding" << YAML::Value << t.volume_rounding;
  out << YAML::Key << "volume_reference_items" << YAML::Value << t.volume_reference_items;
  out << YAML::Key << "lastmile_split" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (const double s : t.lastmile_split) out << s;
  out << YAML::EndSeq;
  out << YAML::EndMap;

  out << YAML::Key << "network" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "nodes" << YAML::Value << YAML::BeginSeq;
  for (const auto& n : c.network.nodes) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "id" << YAML::Value << n.id;
    out << YAML::Key << "role" << YAML::Value << to_string(n.role);
    out << YAML::Key << "tier" << YAML::Value << n.tier;
    if (n.location) {
      out << YAML::Key << "lat" << YAML::Value << n.location->lat;
      out << YAML::Key << "lon" << YAML::Value << n.location->lon;
    }
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "edges" << YAML::Value << YAML::BeginSeq;
  for (const auto& e : c.network.edges) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "from" << YAML::Value << e.from;
    out << YAML::Key << "to" << YAML::Value << e.to;
    out << YAML::Key << "transit" << YAML::Value << e.transit;
    out << YAML::Key << "volume" << YAML::Value;
    if (e.backsolved) {
      out << "backsolved";
    } else {
      out << e.volume;
    }
    out << YAML::Key << "containers" << YAML::Value << e.containers;
    if (e.backsolved) out << YAML::Key << "share" << YAML::Value << e.lastmile_share;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::int64_t scale_container_count(std::int64_t base, double scale) {
  return std::max<std::int64_t>(1, std::llround(static_cast<double>(base) * scale));
}

NetworkSpec effective_network(const Config& config) {
  NetworkSpec net = config.network;
  const auto& t = config.knobs.transport;
  std::size_t split_index = 0;
  for (auto& e : net.edges) {
    if (e.backsolved) {
      if (!t.lastmile_split.empty()) e.lastmile_share = t.lastmile_split[split_index];
      ++split_index;
    } else if (t.volume_reference_items > 0) {
      e.volume = e.volume * static_cast<double>(config.structural.items) /
                 static_cast<double>(t.volume_reference_items);
    }
  }
  // Container scaling is applied after the back-solve (see the engine); the
  // back-solve divides by the configured base count.
  return net;
}

std::string item_id(std::int64_t index, std::int64_t items) {
  const int width = std::max<int>(2, static_cast<int>(std::to_string(items).size()));
  std::string digits = std::to_string(index + 1);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, width - digits.size(), '0');
  return "I" + digits;
}

std::int64_t lead_mean_for(double raw, double lead_time_scale) {
  return std::max<std::int64_t>(1, std::llround(raw * lead_time_scale));
}

PolicyTable materialize_policies(const Config& config, std::vector<PolicyWarning>* warnings) {
  const auto& net = config.network;
  const auto items = static_cast<std::size_t>(config.structural.items);
  PolicyTable table(net.nodes.size(), items);
  const std::uint64_t policy_key = derive_key(config.structural.seed, "policy");
  const double rho = config.knobs.inventory.sS_scale;
  const double rho_lt = config.knobs.inventory.lead_time_scale;

  for (std::size_t n = 0; n < net.nodes.size(); ++n) {
    const auto& node = net.nodes[n];
    if (node.role == NodeRole::kDestination) {
      const auto init = std::max<std::int64_t>(0, std::llround(config.destination_initial));
      for (std::size_t i = 0; i < items; ++i) table.at(n, i) = PolicyCell{init, 0, 0, 1, 0.0};
      continue;
    }
    const auto it = std::find_if(config.policies.begin(), config.policies.end(),
                                 [&](const NodePolicy& p) { return p.node == node.id; });
    if (it == config.policies.end()) throw ConfigError("node '" + node.id + "' has no inventory policy");
    const NodePolicy& p = *it;
    if (warnings) {
      for (const auto& [name, bv] : {std::pair{"init", p.init}, std::pair{"s", p.reorder},
                                     std::pair{"S", p.order_up_to}}) {
        if (bv.var >= bv.base && bv.var > 0.0) {
          warnings->push_back({node.id, std::string(name) + " var >= base; negative draws clip at 0"});
        }
      }
    }
    const std::uint64_t node_key = derive_key(policy_key, node.id);
    for (std::size_t i = 0; i < items; ++i) {
      Rng rng(derive_key(node_key, static_cast<std::uint64_t>(i)));
      const auto draw = [&](BaseVar bv) { return bv.base + rng.uniform(-bv.var, bv.var); };
      const double init_raw = draw(p.init);
      const double s_raw = draw(p.reorder);
      const double S_raw = draw(p.order_up_to);
      const double mu_raw = draw(p.lead_mean);

      PolicyCell cell;
      cell.order_up_to = std::max<std::int64_t>(1, std::llround(rho * S_raw));
      cell.reorder = std::clamp<std::int64_t>(std::llround(rho * s_raw), 0, cell.order_up_to - 1);
      cell.init = std::clamp<std::int64_t>(std::llround(rho * init_raw), cell.reorder, cell.order_up_to);
      cell.lead_mean_raw = mu_raw;
      cell.lead_mean = lead_mean_for(mu_raw, rho_lt);
      table.at(n, i) = cell;
    }
  }
  return table;
}

}  // namespace echelon
