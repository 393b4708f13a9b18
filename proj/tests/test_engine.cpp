#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "echelon/engine.hpp"
#include "oracles.hpp"

using namespace echelon;

namespace {

Config small(std::int64_t items = 3, std::int64_t horizon = 400) {
  return parse_config("", {"structural.items=" + std::to_string(items),
                           "structural.horizon=" + std::to_string(horizon), "structural.seed=17"});
}

NetworkSpec chain(std::vector<std::vector<double>> residual_sets) {
  NetworkSpec net;
  for (std::size_t k = 0; k <= residual_sets.size(); ++k) {
    net.nodes.push_back({"n" + std::to_string(k), NodeRole::kIntermediate, "", {}});
  }
  for (std::size_t k = 0; k < residual_sets.size(); ++k) {
    net.edges.push_back({"n" + std::to_string(k), "n" + std::to_string(k + 1), 1, 1.0,
                         static_cast<std::int64_t>(residual_sets[k].size()), false, 0.0});
  }
  return net;
}

EdgeContainers containers_with(const std::vector<std::vector<double>>& sets) {
  NetworkSpec net = chain(sets);
  for (std::size_t e = 0; e < sets.size(); ++e) {
    net.edges[e].volume = *std::max_element(sets[e].begin(), sets[e].end());
  }
  EdgeContainers c(net);
  for (std::size_t e = 0; e < sets.size(); ++e) {
    auto span = c.edge(e);
    std::copy(sets[e].begin(), sets[e].end(), span.begin());
  }
  return c;
}

}  // namespace

TEST(GreedyPack, OneUnitPerContainer) {
  auto c = containers_with({{5, 5}});
  const std::vector<std::size_t> path{0};
  EXPECT_EQ(greedy_pack(4, 3, path, c), 2);
  EXPECT_DOUBLE_EQ(c.edge(0)[0], 1);
  EXPECT_DOUBLE_EQ(c.edge(0)[1], 1);
}

TEST(GreedyPack, ZeroUnitsLeavesContainers) {
  auto c = containers_with({{5, 5}});
  const std::vector<std::size_t> path{0};
  EXPECT_EQ(greedy_pack(4, 0, path, c), 0);
  EXPECT_DOUBLE_EQ(c.edge(0)[0], 5);
}

TEST(GreedyPack, NoPartialCommit) {
  auto c = containers_with({{10}, {3}});
  const std::vector<std::size_t> path{0, 1};
  EXPECT_EQ(greedy_pack(4, 5, path, c), 0);
  EXPECT_DOUBLE_EQ(c.edge(0)[0], 10);
  EXPECT_DOUBLE_EQ(c.edge(1)[0], 3);
}

TEST(GreedyPack, MatchesOracleOnRandomInstances) {
  Rng rng(55);
  for (int trial = 0; trial < 20000; ++trial) {
    const auto edges = static_cast<std::size_t>(rng.uniform_int(1, 4));
    std::vector<std::vector<double>> sets(edges);
    for (auto& s : sets) {
      s.resize(static_cast<std::size_t>(rng.uniform_int(1, 5)));
      for (auto& r : s) r = static_cast<double>(rng.uniform_int(0, 12));
      s[0] = std::max(s[0], 1.0);
    }
    const double v = static_cast<double>(rng.uniform_int(1, 6));
    const auto q = rng.uniform_int(0, 10);
    auto c = containers_with(sets);
    std::vector<std::size_t> path(edges);
    std::iota(path.begin(), path.end(), 0);
    auto expected_sets = sets;
    const auto expected = oracle::first_fit(expected_sets, v, q);
    ASSERT_EQ(greedy_pack(v, q, path, c), expected);
    for (std::size_t e = 0; e < edges; ++e) {
      for (std::size_t j = 0; j < sets[e].size(); ++j) ASSERT_EQ(c.edge(e)[j], expected_sets[e][j]);
    }
  }
}

TEST(DispatchTarget, Examples) {
  EXPECT_EQ(dispatch_target(5, 2.0, 7.0, 10, 3), 6);
  EXPECT_EQ(dispatch_target(0, 2.0, 7.0, 100, 3), 0);
  EXPECT_EQ(dispatch_target(0, 2.0, 0.0, 0, 0), 6);  // reactive: 3 units of smoothed demand
  EXPECT_EQ(dispatch_target(0, 0.1, 7.0, 0, 0), 1);  // fractional target rounds up
}

TEST(LeadTime, AlwaysAtLeastOne) {
  Rng rng(3);
  for (int k = 0; k < 100000; ++k) ASSERT_GE(draw_lead_time(1.0, rng), 1);
}

TEST(LeadTime, PmfAtMeanThree) {
  Rng rng(derive_key(1, "leadtime-test"));
  const int n = 1000000;
  std::map<int, int> counts;
  double sum = 0;
  for (int k = 0; k < n; ++k) {
    const auto l = draw_lead_time(3.0, rng);
    ++counts[static_cast<int>(l)];
    sum += static_cast<double>(l);
  }
  double analytic_mean = 0;
  for (int l = 1; l <= 20; ++l) {
    const double p = oracle::lead_time_pmf(l, 3.0);
    analytic_mean += l * p;
    const double se = std::sqrt(std::max(p * (1 - p), 1e-12) / n);
    // 3 s.e. at l = 1; the sparse tail cells use the 4 s.e. acceptance band.
    const double band = (l == 1 ? 3.0 : 4.0) * se;
    EXPECT_NEAR(static_cast<double>(counts[l]) / n, p, band + 1e-7) << "l=" << l;
  }
  EXPECT_NEAR(oracle::lead_time_pmf(1, 3.0), 4.3e-4, 0.1e-4);
  EXPECT_NEAR(sum / n, analytic_mean, 0.01 * analytic_mean);
}

TEST(Engine, InitialState) {
  Config c = small();
  for (auto& p : c.policies) p.init.var = p.reorder.var = p.order_up_to.var = 0;
  Engine e(c);
  const auto& s = e.state();
  const auto nash = c.network.node_index("Nashville");
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(s.on_hand[s.idx(nash, i)], 8000);
    EXPECT_DOUBLE_EQ(s.smoothed[i], e.tensor().item(static_cast<std::int64_t>(i)).base_rate);
  }
  EXPECT_EQ(s.t, 0);
  EXPECT_TRUE(s.in_transit.empty());
  EXPECT_EQ(s.fixed_dimension(), 3u * (3 * 13 + 1));
  Engine again(c);
  EXPECT_EQ(again.state(), s);
}

TEST(Engine, ContainerScaleFromConfig) {
  EXPECT_EQ(Engine(parse_config("", {"structural.items=2", "structural.horizon=10",
                                     "transport.container_count_scale=0.3"}))
                .network()
                .edges[0]
                .containers,
            1);
  EXPECT_EQ(Engine(parse_config("", {"structural.items=2", "structural.horizon=10",
                                     "transport.container_count_scale=2.5"}))
                .network()
                .edges[5]
                .containers,
            8);
}

// Checks each step against direct evaluation of sub-steps 2 and 4 from the
// pre-step state, plus the per-step state invariants.
TEST(Engine, DestinationServiceAndStateInvariants) {
  Engine e(small(4, 600));
  const std::size_t d = e.destination();
  while (!e.done()) {
    const TwinState pre = e.state();
    const auto& rec = e.step();
    const TwinState& post = e.state();
    const std::int64_t t = pre.t;
    for (std::size_t i = 0; i < 4; ++i) {
      std::int64_t q = 0;
      if (auto it = pre.in_transit.find(t); it != pre.in_transit.end()) q = it->second[i];
      const std::int64_t b0 = pre.backlog[pre.idx(d, i)];
      const std::int64_t oh_after_arrival = pre.on_hand[pre.idx(d, i)] + std::max<std::int64_t>(q - b0, 0);
      const std::int64_t b_after_arrival = std::max<std::int64_t>(b0 - q, 0);
      const std::int64_t y = rec.demand[i];
      ASSERT_EQ(rec.served[i], std::min(oh_after_arrival, y));
      ASSERT_EQ(rec.new_backlog[i], y - rec.served[i]);
      ASSERT_EQ(rec.on_hand_before_ship[i], oh_after_arrival - rec.served[i]);
      ASSERT_EQ(rec.backlog_before_ship[i], b_after_arrival + y - rec.served[i]);
      ASSERT_EQ(post.backlog[post.idx(d, i)], rec.backlog_before_ship[i]);
      ASSERT_DOUBLE_EQ(post.smoothed[i], 0.05 * static_cast<double>(y) + 0.95 * pre.smoothed[i]);
    }
    for (std::size_t n = 0; n < post.nodes; ++n) {
      for (std::size_t i = 0; i < post.items; ++i) {
        ASSERT_GE(post.on_hand[post.idx(n, i)], 0);
        ASSERT_GE(post.backlog[post.idx(n, i)], 0);
        if (n != d) ASSERT_EQ(post.backlog[post.idx(n, i)], 0);
        const auto& out = post.outstanding[post.idx(n, i)];
        if (!out.empty()) ASSERT_GT(out.due, t);
      }
    }
    for (const auto& [due, qty] : post.in_transit) ASSERT_GT(due, t);
    for (const auto& s : rec.shipments) {
      ASSERT_GE(s.units, 1);
      ASSERT_EQ(s.arrival_day, s.day + s.path->transit);
    }
    for (const double u : rec.edge_utilization) {
      ASSERT_GE(u, 0.0);
      ASSERT_LE(u, 1.0 + 1e-12);
    }
  }
}

TEST(Engine, ArrivalNettingExamples) {
  Config c = small(1, 50);
  Engine e(c);
  const std::size_t d = e.destination();
  TwinState s = e.state();
  s.t = 10;
  s.backlog[s.idx(d, 0)] = 6;
  s.on_hand[s.idx(d, 0)] = 0;
  s.in_transit.clear();
  s.in_transit[10] = {4};
  e.restore(s);
  const auto& a = e.step();
  EXPECT_EQ(a.destination_arrivals[0], 4);
  EXPECT_EQ(a.served[0], 0);
  EXPECT_EQ(a.backlog_before_ship[0], 2 + a.demand[0]);

  s.in_transit.clear();
  s.in_transit[10] = {10};
  e.restore(s);
  const auto& b = e.step();
  EXPECT_EQ(b.served[0], std::min<std::int64_t>(4, b.demand[0]));
  EXPECT_EQ(b.on_hand_before_ship[0], 4 - b.served[0]);
  EXPECT_EQ(b.backlog_before_ship[0], b.demand[0] - b.served[0]);
}

TEST(Engine, MarkovReplayFromSnapshot) {
  const Config c = small(3, 500);
  Engine full(c);
  std::string snap;
  while (!full.done()) {
    if (full.state().t == 237) snap = snapshot_json(full.state(), c.structural.seed);
    full.step();
  }
  Engine resumed(c);
  resumed.restore(restore_snapshot(snap));
  EXPECT_EQ(resumed.state().t, 237);
  while (!resumed.done()) resumed.step();
  EXPECT_EQ(state_hash(resumed.state()), state_hash(full.state()));
  EXPECT_EQ(resumed.state(), full.state());
}

TEST(Engine, SnapshotRejectsWrongVersion) {
  EXPECT_THROW(restore_snapshot(R"({"format":"echelon-state","version":99})"), std::invalid_argument);
  EXPECT_THROW(restore_snapshot(R"({"format":"other"})"), std::invalid_argument);
}

TEST(Engine, DeterministicRollout) {
  const Config c = small(3, 300);
  Engine a(c), b(c);
  while (!a.done()) {
    a.step();
    b.step();
  }
  EXPECT_EQ(state_hash(a.state()), state_hash(b.state()));
}

TEST(Engine, QuiescentStep) {
  Config c = small(2, 20);
  c.knobs.demand.base_rate = {1e-9, 1e-9};
  c.destination_initial = 1000;
  Engine e(c);
  const TwinState pre = e.state();
  const auto& rec = e.step();
  EXPECT_EQ(rec.demand[0] + rec.demand[1], 0);
  EXPECT_TRUE(rec.shipments.empty());
  EXPECT_TRUE(rec.source_orders.empty());
  EXPECT_EQ(e.state().on_hand, pre.on_hand);
  EXPECT_EQ(e.state().t, 1);
}

TEST(Engine, RolloutSummaryTotals) {
  const Config c = small(2, 10);
  const auto summary = run_rollout(c, {});
  EXPECT_EQ(summary.steps, 10);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(summary.total_served[i] + summary.total_new_backlog[i], summary.total_demand[i]);
  }
}
