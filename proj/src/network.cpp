#include "echelon/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <utility>

namespace echelon {

const char* to_string(NodeRole role) {
  switch (role) {
    case NodeRole::kSource:
      return "source";
    case NodeRole::kIntermediate:
      return "intermediate";
    case NodeRole::kDestination:
      return "destination";
  }
  return "intermediate";
}

NodeRole parse_node_role(const std::string& text) {
  if (text == "source") return NodeRole::kSource;
  if (text == "intermediate") return NodeRole::kIntermediate;
  if (text == "destination") return NodeRole::kDestination;
  throw NetworkError("unknown node role '" + text + "'");
}

std::optional<std::size_t> NetworkSpec::find_node(const std::string& id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id == id) return i;
  }
  return std::nullopt;
}

std::size_t NetworkSpec::node_index(const std::string& id) const {
  if (auto idx = find_node(id)) return *idx;
  throw NetworkError("unknown node '" + id + "'");
}

std::size_t NetworkSpec::destination() const {
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].role != NodeRole::kDestination) continue;
    if (found) throw NetworkError("network has more than one destination node");
    found = i;
  }
  if (!found) throw NetworkError("network has no destination node");
  return *found;
}

std::vector<std::size_t> NetworkSpec::nodes_with_role(NodeRole role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].role == role) out.push_back(i);
  }
  return out;
}

bool NetworkSpec::has_backsolved_edges() const {
  return std::any_of(edges.begin(), edges.end(), [](const EdgeSpec& e) { return e.backsolved; });
}

double dispatch_weight(const EdgeSpec& edge) {
  return static_cast<double>(edge.transit) / edge.capacity();
}

void validate_network(const NetworkSpec& spec) {
  if (spec.nodes.empty()) throw NetworkError("network has no nodes");
  std::set<std::string> ids;
  for (const auto& n : spec.nodes) {
    if (n.id.empty()) throw NetworkError("node with empty id");
    if (!ids.insert(n.id).second) throw NetworkError("duplicate node id '" + n.id + "'");
  }
  const std::size_t dest = spec.destination();

  const std::size_t n = spec.nodes.size();
  std::vector<std::vector<std::size_t>> out(n), in(n);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& e : spec.edges) {
    const auto from = spec.find_node(e.from);
    const auto to = spec.find_node(e.to);
    if (!from) throw NetworkError("edge references unknown node '" + e.from + "'");
    if (!to) throw NetworkError("edge references unknown node '" + e.to + "'");
    if (*from == *to) throw NetworkError("self-loop on node '" + e.from + "'");
    if (!seen.insert({*from, *to}).second) {
      throw NetworkError("duplicate edge " + e.from + "->" + e.to);
    }
    if (e.transit < 1) throw NetworkError("edge " + e.from + "->" + e.to + " has transit < 1");
    if (e.containers < 1) {
      throw NetworkError("edge " + e.from + "->" + e.to + " has container count < 1");
    }
    if (!e.backsolved && !(e.volume > 0.0)) {
      throw NetworkError("edge " + e.from + "->" + e.to + " has non-positive volume");
    }
    if (e.backsolved && e.lastmile_share < 0.0) {
      throw NetworkError("edge " + e.from + "->" + e.to + " has negative last-mile share");
    }
    if (spec.nodes[*from].role == NodeRole::kDestination) {
      throw NetworkError("destination '" + e.from + "' has an outgoing edge");
    }
    if (spec.nodes[*to].role == NodeRole::kSource) {
      throw NetworkError("source '" + e.to + "' has an incoming edge");
    }
    out[*from].push_back(*to);
    in[*to].push_back(*from);
  }

  // Kahn's algorithm for acyclicity.
  std::vector<std::size_t> indeg(n, 0);
  for (std::size_t v = 0; v < n; ++v) indeg[v] = in[v].size();
  std::vector<std::size_t> queue;
  for (std::size_t v = 0; v < n; ++v) {
    if (indeg[v] == 0) queue.push_back(v);
  }
  std::size_t visited = 0;
  while (!queue.empty()) {
    const std::size_t v = queue.back();
    queue.pop_back();
    ++visited;
    for (const std::size_t w : out[v]) {
      if (--indeg[w] == 0) queue.push_back(w);
    }
  }
  if (visited != n) throw NetworkError("network contains a cycle");

  // Every node must be reachable from a source and reach the destination.
  std::vector<bool> from_source(n, false), to_dest(n, false);
  std::vector<std::size_t> stack;
  for (std::size_t v = 0; v < n; ++v) {
    if (spec.nodes[v].role == NodeRole::kSource) {
      from_source[v] = true;
      stack.push_back(v);
    }
  }
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    for (const std::size_t w : out[v]) {
      if (!from_source[w]) {
        from_source[w] = true;
        stack.push_back(w);
      }
    }
  }
  to_dest[dest] = true;
  stack.push_back(dest);
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    for (const std::size_t w : in[v]) {
      if (!to_dest[w]) {
        to_dest[w] = true;
        stack.push_back(w);
      }
    }
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (!to_dest[v]) {
      throw NetworkError("node '" + spec.nodes[v].id + "' cannot reach destination '" +
                         spec.nodes[dest].id + "'");
    }
    if (!from_source[v]) {
      throw NetworkError("node '" + spec.nodes[v].id + "' is not reachable from any source");
    }
  }
}

NetworkSpec baseline_network() {
  NetworkSpec net;
  auto node = [&](const char* id, NodeRole role, const char* tier, double lat, double lon) {
    net.nodes.push_back({id, role, tier, GeoPoint{lat, lon}});
  };
  node("SanFrancisco", NodeRole::kSource, "Source", 37.77, -122.42);
  node("StLouis", NodeRole::kSource, "Source", 38.63, -90.20);
  node("Orlando", NodeRole::kSource, "Source", 28.54, -81.38);
  node("Nashville", NodeRole::kIntermediate, "Hub", 36.16, -86.78);
  node("Atlanta", NodeRole::kIntermediate, "Tier-2", 33.75, -84.39);
  node("Chicago", NodeRole::kIntermediate, "Tier-3", 41.88, -87.63);
  node("Charlotte", NodeRole::kIntermediate, "Tier-3", 35.23, -80.84);
  node("Memphis", NodeRole::kIntermediate, "Tier-3", 35.15, -90.05);
  node("Columbus", NodeRole::kIntermediate, "Tier-4", 39.96, -83.00);
  node("Richmond", NodeRole::kIntermediate, "Tier-4", 37.54, -77.44);
  node("Philadelphia", NodeRole::kIntermediate, "Tier-5 (LM)", 39.95, -75.17);
  node("Baltimore", NodeRole::kIntermediate, "Tier-5 (LM)", 39.29, -76.61);
  node("NewYork", NodeRole::kDestination, "Destination", 40.71, -74.01);

  auto edge = [&](const char* from, const char* to, std::int64_t tau, double volume) {
    net.edges.push_back({from, to, tau, volume, 3, false, 0.0});
  };
  edge("SanFrancisco", "Nashville", 4, 5000);
  edge("StLouis", "Nashville", 2, 5000);
  edge("Orlando", "Nashville", 2, 5000);
  edge("Nashville", "Atlanta", 1, 15000);
  edge("Atlanta", "Chicago", 8, 4000);
  edge("Atlanta", "Charlotte", 7, 4000);
  edge("Atlanta", "Memphis", 7, 4000);
  edge("Chicago", "Columbus", 2, 4000);
  edge("Charlotte", "Richmond", 2, 4000);
  edge("Columbus", "Philadelphia", 2, 4000);
  edge("Richmond", "Philadelphia", 1, 4000);
  edge("Richmond", "Baltimore", 3, 3000);
  edge("Columbus", "Baltimore", 3, 3000);
  edge("Memphis", "Baltimore", 2, 3000);
  net.edges.push_back({"Philadelphia", "NewYork", 1, 0.0, 3, true, 0.55});
  net.edges.push_back({"Baltimore", "NewYork", 2, 0.0, 3, true, 0.45});
  return net;
}

double lastmile_raw_volume(std::int64_t items, double mean_intensity, const BacksolveParams& p) {
  return static_cast<double>(items) * mean_intensity * p.mean_unit_volume * p.load_factor /
         p.packing_efficiency;
}

NetworkSpec backsolve_lastmile(const NetworkSpec& spec, std::int64_t items, double mean_intensity,
                               const BacksolveParams& params, std::string* warning) {
  NetworkSpec out = spec;
  if (!spec.has_backsolved_edges()) {
    if (warning) *warning = "network has no back-solved edges; volumes left unchanged";
    return out;
  }
  const double raw = lastmile_raw_volume(items, mean_intensity, params);
  for (auto& e : out.edges) {
    if (!e.backsolved) continue;
    const double per_container = raw * e.lastmile_share / static_cast<double>(e.containers);
    const double rounded = std::round(per_container / params.rounding) * params.rounding;
    e.volume = std::max(params.rounding, rounded);
    e.backsolved = false;
  }
  return out;
}

namespace {

struct Adjacency {
  // Edge indices per node.
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::vector<std::size_t>> in;
};

Adjacency adjacency(const NetworkSpec& spec, const std::vector<std::size_t>& from,
                    const std::vector<std::size_t>& to) {
  Adjacency adj;
  adj.out.resize(spec.nodes.size());
  adj.in.resize(spec.nodes.size());
  for (std::size_t e = 0; e < spec.edges.size(); ++e) {
    adj.out[from[e]].push_back(e);
    adj.in[to[e]].push_back(e);
  }
  return adj;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Distances from every node to `target` along directed edges.
std::vector<double> distances_to(const NetworkSpec& spec, const Adjacency& adj,
                                 const std::vector<std::size_t>& from, std::size_t target,
                                 const std::vector<double>& weight) {
  std::vector<double> dist(spec.nodes.size(), kInf);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[target] = 0.0;
  pq.push({0.0, target});
  while (!pq.empty()) {
    const auto [d, v] = pq.top();
    pq.pop();
    if (d > dist[v]) continue;
    for (const std::size_t e : adj.in[v]) {
      const std::size_t u = from[e];
      const double nd = dist[v] + weight[e];
      if (nd < dist[u]) {
        dist[u] = nd;
        pq.push({nd, u});
      }
    }
  }
  return dist;
}

// Walks next hops from `start` to `target`, choosing at each node the outgoing
// edge minimising weight + remaining distance, ties by lexicographic next-hop id.
ResolvedPath resolve_path(const NetworkSpec& spec, const Adjacency& adj,
                          const std::vector<std::size_t>& to, std::size_t start, std::size_t target,
                          const std::vector<double>& dist, const std::vector<double>& weight) {
  ResolvedPath path;
  path.distance = dist[start];
  path.nodes.push_back(start);
  std::size_t v = start;
  while (v != target) {
    std::optional<std::size_t> best;
    double best_value = kInf;
    for (const std::size_t e : adj.out[v]) {
      const std::size_t w = to[e];
      if (dist[w] == kInf) continue;
      const double value = dist[w] + weight[e];
      if (!best || value < best_value ||
          (value == best_value && spec.nodes[w].id < spec.nodes[to[*best]].id)) {
        best = e;
        best_value = value;
      }
    }
    if (!best) {
      throw NetworkError("no path from '" + spec.nodes[start].id + "' to '" + spec.nodes[target].id +
                         "'");
    }
    path.edges.push_back(*best);
    path.transit += spec.edges[*best].transit;
    v = to[*best];
    path.nodes.push_back(v);
  }
  return path;
}

}  // namespace

RoutingTables build_routing(const NetworkSpec& spec) {
  const std::size_t n = spec.nodes.size();
  const std::size_t dest = spec.destination();
  std::vector<std::size_t> from(spec.edges.size()), to(spec.edges.size());
  std::vector<double> dispatch_w(spec.edges.size()), transit_w(spec.edges.size());
  for (std::size_t e = 0; e < spec.edges.size(); ++e) {
    const auto& edge = spec.edges[e];
    if (edge.backsolved) {
      throw NetworkError("edge " + edge.from + "->" + edge.to + " volume not back-solved yet");
    }
    from[e] = spec.node_index(edge.from);
    to[e] = spec.node_index(edge.to);
    dispatch_w[e] = dispatch_weight(edge);
    transit_w[e] = static_cast<double>(edge.transit);
  }
  const Adjacency adj = adjacency(spec, from, to);
  const auto by_id = [&](std::size_t a, std::size_t b) { return spec.nodes[a].id < spec.nodes[b].id; };

  RoutingTables tables;
  tables.dispatch_distance.assign(n, kInf);
  tables.dispatch_path.resize(n);
  tables.pull_order.resize(n);

  const auto to_dest = distances_to(spec, adj, from, dest, dispatch_w);
  const auto intermediates = spec.nodes_with_role(NodeRole::kIntermediate);
  for (const std::size_t w : intermediates) {
    if (to_dest[w] == kInf) {
      throw NetworkError("destination unreachable from warehouse '" + spec.nodes[w].id + "'");
    }
    tables.dispatch_distance[w] = to_dest[w];
    tables.dispatch_path[w] = resolve_path(spec, adj, to, w, dest, to_dest, dispatch_w);
    tables.dispatch_order.push_back(w);
  }
  std::sort(tables.dispatch_order.begin(), tables.dispatch_order.end(), [&](auto a, auto b) {
    if (to_dest[a] != to_dest[b]) return to_dest[a] < to_dest[b];
    return by_id(a, b);
  });

  for (const std::size_t target : intermediates) {
    const auto dist = distances_to(spec, adj, from, target, transit_w);
    auto& suppliers = tables.pull_order[target];
    for (std::size_t u = 0; u < n; ++u) {
      if (u == target || dist[u] == kInf) continue;
      if (spec.nodes[u].role == NodeRole::kDestination) continue;
      suppliers.push_back({u, resolve_path(spec, adj, to, u, target, dist, transit_w)});
    }
    std::sort(suppliers.begin(), suppliers.end(), [&](const PullSupplier& a, const PullSupplier& b) {
      if (a.path.transit != b.path.transit) return a.path.transit < b.path.transit;
      return by_id(a.supplier, b.supplier);
    });
  }

  // Feeders first: pure-tau distance from the nearest source.
  std::vector<double> from_source(n, kInf);
  {
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    for (const std::size_t s : spec.nodes_with_role(NodeRole::kSource)) {
      from_source[s] = 0.0;
      pq.push({0.0, s});
    }
    while (!pq.empty()) {
      const auto [d, v] = pq.top();
      pq.pop();
      if (d > from_source[v]) continue;
      for (const std::size_t e : adj.out[v]) {
        const double nd = d + transit_w[e];
        if (nd < from_source[to[e]]) {
          from_source[to[e]] = nd;
          pq.push({nd, to[e]});
        }
      }
    }
  }
  tables.pull_node_order = intermediates;
  std::sort(tables.pull_node_order.begin(), tables.pull_node_order.end(), [&](auto a, auto b) {
    if (from_source[a] != from_source[b]) return from_source[a] < from_source[b];
    return by_id(a, b);
  });
  return tables;
}

}  // namespace echelon
