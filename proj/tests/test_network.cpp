#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "echelon/network.hpp"
#include "echelon/rng.hpp"

using namespace echelon;

namespace {

NetworkSpec one_edge() {
  NetworkSpec net;
  net.nodes.push_back({"S", NodeRole::kSource, "src", {}});
  net.nodes.push_back({"A", NodeRole::kIntermediate, "wh", {}});
  net.nodes.push_back({"D", NodeRole::kDestination, "dst", {}});
  net.edges.push_back({"S", "A", 1, 10.0, 1, false, 0.0});
  net.edges.push_back({"A", "D", 2, 10.0, 1, false, 0.0});
  return net;
}

// Random layered DAG: nodes sorted so edges only go from lower to higher index,
// node 0 is the source and the last node the destination.
NetworkSpec random_dag(Rng& rng, int n) {
  NetworkSpec net;
  for (int k = 0; k < n; ++k) {
    const NodeRole role = k == 0 ? NodeRole::kSource : k == n - 1 ? NodeRole::kDestination : NodeRole::kIntermediate;
    net.nodes.push_back({"n" + std::to_string(k), role, "t", {}});
  }
  for (int a = 0; a < n - 1; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (a == 0 && b == n - 1) continue;  // no source -> destination shortcut
      const bool chain = b == a + 1;
      if (!chain && rng.uniform() > 0.4) continue;
      net.edges.push_back({"n" + std::to_string(a), "n" + std::to_string(b), rng.uniform_int(1, 6),
                           static_cast<double>(rng.uniform_int(1, 5) * 100), rng.uniform_int(1, 3), false, 0.0});
    }
  }
  return net;
}

// Minimum over all simple paths from `from` to `to` of the summed edge weight.
double brute_force(const NetworkSpec& net, std::size_t from, std::size_t to,
                   const std::function<double(const EdgeSpec&)>& weight) {
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, double)> walk = [&](std::size_t at, double acc) {
    if (at == to) {
      best = std::min(best, acc);
      return;
    }
    for (const auto& e : net.edges) {
      if (net.node_index(e.from) == at) walk(net.node_index(e.to), acc + weight(e));
    }
  };
  walk(from, 0.0);
  return best;
}

}  // namespace

TEST(Network, BaselineValidates) {
  auto net = baseline_network();
  EXPECT_EQ(net.nodes.size(), 13u);
  EXPECT_EQ(net.edges.size(), 16u);
  EXPECT_TRUE(net.has_backsolved_edges());
  EXPECT_NO_THROW(validate_network(net));
}

TEST(Network, RejectsTwoDestinations) {
  auto net = one_edge();
  net.nodes[1].role = NodeRole::kDestination;
  EXPECT_THROW(validate_network(net), NetworkError);
}

TEST(Network, RejectsCycle) {
  auto net = one_edge();
  net.nodes.push_back({"B", NodeRole::kIntermediate, "wh", {}});
  net.edges.push_back({"A", "B", 1, 10.0, 1, false, 0.0});
  net.edges.push_back({"B", "A", 1, 10.0, 1, false, 0.0});
  EXPECT_THROW(validate_network(net), NetworkError);
}

TEST(Network, RejectsUnknownNodeAndZeroTransit) {
  auto net = one_edge();
  net.edges.push_back({"A", "Nowhere", 1, 10.0, 1, false, 0.0});
  EXPECT_THROW(validate_network(net), NetworkError);
  net = one_edge();
  net.edges[0].transit = 0;
  EXPECT_THROW(validate_network(net), NetworkError);
}

TEST(Routing, SingleEdgeDistance) {
  const auto r = build_routing(one_edge());
  ASSERT_EQ(r.dispatch_order.size(), 1u);
  EXPECT_DOUBLE_EQ(r.dispatch_distance[1], 0.2);
  EXPECT_EQ(r.dispatch_path[1].transit, 2);
}

TEST(Routing, DijkstraMatchesBruteForce) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(3, 8));
    const auto net = random_dag(rng, n);
    validate_network(net);
    const auto r = build_routing(net);
    const std::size_t d = net.destination();
    for (const std::size_t w : r.dispatch_order) {
      const double oracle = brute_force(net, w, d, dispatch_weight);
      EXPECT_NEAR(r.dispatch_distance[w], oracle, 1e-12 * std::max(1.0, oracle));
      EXPECT_EQ(r.dispatch_path[w].nodes.back(), d);
      EXPECT_EQ(r.dispatch_path[w].nodes.front(), w);
      double along = 0.0;
      for (const auto e : r.dispatch_path[w].edges) along += dispatch_weight(net.edges[e]);
      EXPECT_NEAR(along, oracle, 1e-12 * std::max(1.0, oracle));
    }
    for (std::size_t k = 1; k < r.dispatch_order.size(); ++k) {
      const auto a = r.dispatch_order[k - 1], b = r.dispatch_order[k];
      EXPECT_TRUE(r.dispatch_distance[a] < r.dispatch_distance[b] ||
                  (r.dispatch_distance[a] == r.dispatch_distance[b] && net.nodes[a].id < net.nodes[b].id));
    }
    const auto tau = [](const EdgeSpec& e) { return static_cast<double>(e.transit); };
    for (const std::size_t n_req : r.pull_node_order) {
      const auto& sups = r.pull_order[n_req];
      for (const auto& s : sups) {
        EXPECT_EQ(static_cast<double>(s.path.transit), brute_force(net, s.supplier, n_req, tau));
        EXPECT_EQ(s.path.nodes.back(), n_req);
      }
      for (std::size_t k = 1; k < sups.size(); ++k) {
        EXPECT_TRUE(sups[k - 1].path.transit < sups[k].path.transit ||
                    (sups[k - 1].path.transit == sups[k].path.transit &&
                     net.nodes[sups[k - 1].supplier].id < net.nodes[sups[k].supplier].id));
      }
      // Every non-destination ancestor appears.
      std::size_t ancestors = 0;
      for (std::size_t u = 0; u < net.nodes.size(); ++u) {
        if (u != n_req && u != d && std::isfinite(brute_force(net, u, n_req, tau))) ++ancestors;
      }
      EXPECT_EQ(sups.size(), ancestors);
    }
  }
}

TEST(Routing, RichmondPullsFromCharlotteBeforeAtlanta) {
  const auto net = backsolve_lastmile(baseline_network(), 50, 165.0, BacksolveParams{});
  const auto r = build_routing(net);
  const auto& sups = r.pull_order[net.node_index("Richmond")];
  ASSERT_GE(sups.size(), 2u);
  EXPECT_EQ(net.nodes[sups[0].supplier].id, "Charlotte");
  EXPECT_EQ(sups[0].path.transit, 2);
  EXPECT_EQ(net.nodes[sups[1].supplier].id, "Atlanta");
  EXPECT_EQ(sups[1].path.transit, 9);
}

TEST(Routing, PhiladelphiaVersusBaltimoreOrderFollowsDistance) {
  const auto net = backsolve_lastmile(baseline_network(), 50, 165.0, BacksolveParams{});
  const auto r = build_routing(net);
  const auto phl = net.node_index("Philadelphia"), bal = net.node_index("Baltimore");
  // Independent evaluation of tau / (K V) on the single last-mile edges.
  const double phl_dist = 1.0 / (3.0 * 4900.0), bal_dist = 2.0 / (3.0 * 4000.0);
  EXPECT_DOUBLE_EQ(r.dispatch_distance[phl], phl_dist);
  EXPECT_DOUBLE_EQ(r.dispatch_distance[bal], bal_dist);
  const auto pos = [&](std::size_t n) {
    return std::find(r.dispatch_order.begin(), r.dispatch_order.end(), n) - r.dispatch_order.begin();
  };
  EXPECT_EQ(pos(phl) < pos(bal), phl_dist < bal_dist);
}

TEST(Backsolve, MidpointIntensityAtFiftyItems) {
  const BacksolveParams p;
  EXPECT_NEAR(lastmile_raw_volume(50, 165.0, p), 50 * 165.0 * 2.5 * 1.2 / 0.93, 1e-9);
  const auto net = backsolve_lastmile(baseline_network(), 50, 165.0, p);
  EXPECT_DOUBLE_EQ(net.edges[net.edges.size() - 2].volume, 4900.0);
  EXPECT_DOUBLE_EQ(net.edges.back().volume, 4000.0);
}

TEST(Backsolve, ZeroIntensityHitsFloor) {
  const auto net = backsolve_lastmile(baseline_network(), 50, 0.0, BacksolveParams{});
  EXPECT_DOUBLE_EQ(net.edges[net.edges.size() - 2].volume, 100.0);
  EXPECT_DOUBLE_EQ(net.edges.back().volume, 100.0);
}

TEST(Backsolve, LinearInItems) {
  const BacksolveParams p;
  EXPECT_DOUBLE_EQ(lastmile_raw_volume(100, 140.0, p), 2.0 * lastmile_raw_volume(50, 140.0, p));
}

TEST(Backsolve, NoMarkersIsNoOpWithWarning) {
  const auto net = one_edge();
  std::string warning;
  const auto out = backsolve_lastmile(net, 5, 100.0, BacksolveParams{}, &warning);
  EXPECT_FALSE(warning.empty());
  EXPECT_DOUBLE_EQ(out.edges[1].volume, 10.0);
}

TEST(Routing, UnreachableWarehouseNamed) {
  auto net = one_edge();
  net.nodes.push_back({"Dead", NodeRole::kIntermediate, "wh", {}});
  net.edges.push_back({"S", "Dead", 1, 10.0, 1, false, 0.0});
  try {
    build_routing(net);
    FAIL() << "expected a routing error";
  } catch (const NetworkError& e) {
    EXPECT_NE(std::string(e.what()).find("Dead"), std::string::npos);
  }
}
