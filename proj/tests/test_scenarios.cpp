#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "echelon/hash.hpp"
#include "echelon/scenarios.hpp"

using namespace echelon;
namespace fs = std::filesystem;

namespace {

Config small(std::int64_t items, std::int64_t horizon) {
  return parse_config("", {"structural.items=" + std::to_string(items), "structural.horizon=" + std::to_string(horizon)});
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("echelon_test_scenarios_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string tree_digest(const fs::path& dir) {
  std::vector<std::string> parts;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) parts.push_back(fs::relative(e.path(), dir).string() + ":" + sha256_file(e.path()));
    if (e.is_symlink()) parts.push_back(fs::relative(e.path(), dir).string() + "->" + fs::read_symlink(e.path()).string());
  }
  std::sort(parts.begin(), parts.end());
  std::string all;
  for (const auto& p : parts) all += p + "\n";
  return sha256_hex(all);
}

}  // namespace

// ---- catalogue ---------------------------------------------------------------

TEST(Sweeps, CatalogueMatchesPublishedSettings) {
  const auto& cat = sweep_catalogue();
  ASSERT_EQ(cat.size(), 6u);
  const std::vector<std::pair<std::string, std::vector<std::string>>> expected = {
      {"drift", {"drift_0.71", "drift_0.86", "drift_0.96", "drift_0.99", "drift_0.9993"}},
      {"shock", {"shock_0x1", "shock_0.5x0.7", "shock_1x1", "shock_2x2", "shock_3x4"}},
      {"burst", {"burst_1x1", "burst_1.5x2", "burst_2x3", "burst_3x4", "burst_5x8"}},
      {"edge_cap", {"edge_cap_0.3", "edge_cap_0.6", "edge_cap_1", "edge_cap_1.5", "edge_cap_2.5"}},
      {"buffer", {"buffer_0.1", "buffer_0.2", "buffer_0.5", "buffer_0.75", "buffer_1"}},
      {"lead_time", {"lead_time_1", "lead_time_2", "lead_time_5", "lead_time_10", "lead_time_20"}},
  };
  const std::vector<std::size_t> baseline_at = {4, 2, 0, 2, 4, 0};
  for (std::size_t k = 0; k < cat.size(); ++k) {
    EXPECT_EQ(cat[k].name, expected[k].first);
    ASSERT_EQ(cat[k].settings.size(), 5u);
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_EQ(cat[k].settings[j].label, expected[k].second[j]);
      EXPECT_EQ(cat[k].settings[j].baseline, j == baseline_at[k]) << cat[k].settings[j].label;
      EXPECT_EQ(cat[k].settings[j].patch.empty(), j == baseline_at[k]);
    }
  }
  EXPECT_THROW(find_sweep("nope"), ScenarioError);
}

TEST(Sweeps, DriftSettingsApplySharedCoefficient) {
  const auto& drift = find_sweep("drift");
  const std::vector<double> phis = {0.71, 0.86, 0.96, 0.99};
  for (std::size_t j = 0; j < 4; ++j) {
    const Config c = apply_overrides(small(4, 50), drift.settings[j].patch);
    ASSERT_TRUE(c.knobs.demand.ar_coeff_override);
    EXPECT_EQ(*c.knobs.demand.ar_coeff_override, phis[j]);
    const Engine e(c);
    for (std::int64_t i = 0; i < 4; ++i) EXPECT_EQ(e.tensor().item(i).ar_coeff, phis[j]);
  }
}

TEST(Sweeps, ShockOffSettingHasNoMacroShock) {
  const Config c = apply_overrides(small(6, 3000), find_sweep("shock").settings[0].patch);
  const Engine e(c);
  for (const double g : e.tensor().shock_path()) ASSERT_EQ(g, 0.0);
  EXPECT_TRUE(e.tensor().shocks().empty());
}

TEST(Sweeps, EdgeCapTwoAndAHalfGivesEightContainers) {
  const Config c = apply_overrides(small(4, 50), find_sweep("edge_cap").settings[4].patch);
  const Engine e(c);
  for (const auto& edge : e.network().edges) EXPECT_EQ(edge.containers, 8) << edge.from << "->" << edge.to;
  const Config squeezed = apply_overrides(small(4, 50), find_sweep("edge_cap").settings[0].patch);
  for (const auto& edge : Engine(squeezed).network().edges) EXPECT_EQ(edge.containers, 1);
}

TEST(Sweeps, SupplySettingsLeaveDemandUnchanged) {
  const Engine base(small(4, 400));
  for (const char* name : {"edge_cap", "buffer", "lead_time"}) {
    for (const auto& s : find_sweep(name).settings) {
      const Engine e(apply_overrides(small(4, 400), s.patch));
      EXPECT_EQ(e.tensor().values(), base.tensor().values()) << s.label;
    }
  }
}

TEST(Sweeps, RunProducesReleasesAndSharedBaseline) {
  const fs::path root = scratch("run");
  BatchOptions opt;
  opt.jobs = 2;
  const auto r = run_sweep(find_sweep("buffer"), small(3, 60), root, opt);
  ASSERT_TRUE(r.ok());
  ASSERT_EQ(r.settings.size(), 5u);
  for (const auto& o : r.settings) {
    EXPECT_TRUE(fs::exists(o.dir / release_files::kManifest)) << o.label;
    EXPECT_EQ(lines(o.dir / release_files::kDaily).size(), 1u + 60 * 3);
  }
  EXPECT_TRUE(r.settings[4].shared);
  EXPECT_TRUE(fs::is_symlink(root / "buffer" / "buffer_1"));
  EXPECT_EQ(fs::canonical(root / "buffer" / "buffer_1"), fs::canonical(root / "baseline"));

  // A second sweep reuses the baseline rather than re-simulating it.
  const auto before = fs::last_write_time(root / "baseline" / release_files::kDaily);
  const auto r2 = run_sweep(find_sweep("lead_time"), small(3, 60), root, opt);
  ASSERT_TRUE(r2.ok());
  EXPECT_EQ(fs::last_write_time(root / "baseline" / release_files::kDaily), before);
  EXPECT_EQ(fs::canonical(root / "lead_time" / "lead_time_1"), fs::canonical(root / "baseline"));
}

TEST(Sweeps, RerunIsByteIdentical) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  run_sweep(find_sweep("drift"), small(3, 80), a, {});
  BatchOptions opt;
  opt.jobs = 3;
  run_sweep(find_sweep("drift"), small(3, 80), b, opt);
  EXPECT_EQ(tree_digest(a), tree_digest(b));
}

TEST(Sweeps, FailingSettingIsIsolated) {
  SweepSpec custom{"custom", "test", {}};
  custom.settings.push_back({"good", {"inventory.sS_scale=0.5"}, false});
  custom.settings.push_back({"bad", {"structural.items=0"}, false});
  custom.settings.push_back({"also_good", {"inventory.lead_time_scale=2"}, false});
  const auto r = run_sweep(custom, small(2, 30), scratch("fail"), {});
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(r.settings[0].ok);
  EXPECT_FALSE(r.settings[1].ok);
  EXPECT_FALSE(r.settings[1].error.empty());
  EXPECT_TRUE(r.settings[2].ok);
}

TEST(NamedScenarios, PresetFilesMatchCatalogue) {
  const fs::path dir = fs::path(ECHELON_SOURCE_DIR) / "configs" / "scenarios";
  ASSERT_EQ(named_scenarios().size(), 5u);
  for (const auto& s : named_scenarios()) {
    const fs::path file = dir / (s.name + ".yaml");
    ASSERT_TRUE(fs::exists(file)) << file;
    const Config from_file = load_config(file.string());
    const Config from_patch = apply_overrides(baseline_config(), s.patch);
    EXPECT_EQ(to_yaml(from_file), to_yaml(from_patch)) << s.name;
  }
  const auto& drift = find_named_scenario("drift_mid");
  const Engine e(apply_overrides(small(20, 10), drift.patch));
  for (std::int64_t i = 0; i < 20; ++i) {
    EXPECT_GE(e.tensor().item(i).ar_coeff, 0.95);
    EXPECT_LE(e.tensor().item(i).ar_coeff, 0.97);
  }
  EXPECT_THROW(find_named_scenario("nope"), ScenarioError);
}

// ---- Latin hypercube ---------------------------------------------------------

TEST(Lhs, SingleSampleIsMidpoint) {
  const auto d = lhs_sample(1, {{"a", 2.0, 4.0}, {"b", -1.0, 1.0}}, 7);
  ASSERT_EQ(d.values.size(), 1u);
  EXPECT_EQ(d.values[0][0], 3.0);
  EXPECT_EQ(d.values[0][1], 0.0);
}

TEST(Lhs, OneSamplePerStratumPerDimension) {
  for (std::uint64_t seed : {1u, 2u, 2025u}) {
    const auto d = lhs_sample(20, baseline_uq_intervals(), seed);
    ASSERT_EQ(d.values.size(), 20u);
    for (std::size_t dim = 0; dim < 3; ++dim) {
      const auto& iv = d.intervals[dim];
      std::set<std::int64_t> strata;
      for (const auto& row : d.values) {
        const double u = (row[dim] - iv.lo) / (iv.hi - iv.lo);
        strata.insert(static_cast<std::int64_t>(std::floor(u * 20)));
      }
      EXPECT_EQ(strata.size(), 20u);
      EXPECT_EQ(*strata.begin(), 0);
      EXPECT_EQ(*strata.rbegin(), 19);
    }
  }
}

TEST(Lhs, BaselineIntervalsAndBounds) {
  const auto iv = baseline_uq_intervals();
  ASSERT_EQ(iv.size(), 3u);
  EXPECT_EQ(iv[0].lo, 0.99916);
  EXPECT_EQ(iv[0].hi, 0.99944);
  EXPECT_EQ(iv[1].lo, 0.80);
  EXPECT_EQ(iv[1].hi, 1.20);
  EXPECT_EQ(iv[2].lo, 0.80);
  EXPECT_EQ(iv[2].hi, 1.20);
  const auto d = lhs_sample(20, iv, 2025);
  for (const auto& row : d.values) {
    EXPECT_GE(row[0], 0.99916);
    EXPECT_LE(row[0], 0.99944);
  }
}

TEST(Lhs, DeterministicInSeed) {
  const auto a = lhs_sample(20, baseline_uq_intervals(), 11);
  const auto b = lhs_sample(20, baseline_uq_intervals(), 11);
  const auto c = lhs_sample(20, baseline_uq_intervals(), 12);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, c.values);
  EXPECT_THROW(lhs_sample(0, baseline_uq_intervals(), 1), ScenarioError);
}

TEST(Lhs, PatchRoundTripsExactly) {
  const auto d = lhs_sample(5, baseline_uq_intervals(), 3);
  for (std::size_t k = 0; k < 5; ++k) {
    const Config c = apply_overrides(small(2, 10), d.patch(k));
    EXPECT_EQ(*c.knobs.demand.ar_coeff_override, d.values[k][0]);
    EXPECT_EQ(c.knobs.demand.shock_height_mult, d.values[k][1]);
    EXPECT_EQ(c.knobs.demand.burst_height_mult, d.values[k][2]);
  }
}

// ---- UQ ensemble -------------------------------------------------------------

TEST(Ensemble, EnvelopeIsOrderedAndCollapsed) {
  const fs::path root = scratch("uq");
  const auto d = lhs_sample(3, baseline_uq_intervals(), 5);
  const auto r = run_uq_ensemble(d, small(3, 120), root, {});
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.members_used, 3);
  EXPECT_EQ(r.envelope_rows, 3 * 120);
  const auto rows = lines(r.envelope);
  ASSERT_EQ(rows.size(), 1u + 3 * 120);
  EXPECT_EQ(rows[0], "day,item,min,median,max");
  // Independent recomputation of the median from the member files.
  std::vector<std::vector<std::string>> member_rows;
  for (const auto& m : r.members) member_rows.push_back(lines(m.dir / release_files::kDaily));
  for (std::size_t k = 1; k < rows.size(); ++k) {
    long day;
    char item[16];
    double lo, med, hi;
    ASSERT_EQ(std::sscanf(rows[k].c_str(), "%ld,%15[^,],%lf,%lf,%lf", &day, item, &lo, &med, &hi), 5);
    EXPECT_LE(lo, med);
    EXPECT_LE(med, hi);
    std::vector<double> v;
    for (const auto& mr : member_rows) {
      long dd, dem;
      char it[16];
      std::sscanf(mr[k].c_str(), "%ld,%15[^,],%ld", &dd, it, &dem);
      v.push_back(static_cast<double>(dem));
    }
    std::sort(v.begin(), v.end());
    EXPECT_EQ(lo, v[0]);
    EXPECT_EQ(med, v[1]);
    EXPECT_EQ(hi, v[2]);
  }
  EXPECT_EQ(lines(root / "design.csv").size(), 4u);
}

TEST(Ensemble, IdenticalMembersGiveZeroWidth) {
  const fs::path root = scratch("uq_same");
  const auto d = lhs_sample(2, {{"inventory.sS_scale", 1.0, 1.0}}, 1);
  const auto r = run_uq_ensemble(d, small(2, 50), root, {});
  ASSERT_TRUE(r.ok());
  const auto rows = lines(r.envelope);
  for (std::size_t k = 1; k < rows.size(); ++k) {
    long day;
    char item[16];
    double lo, med, hi;
    ASSERT_EQ(std::sscanf(rows[k].c_str(), "%ld,%15[^,],%lf,%lf,%lf", &day, item, &lo, &med, &hi), 5);
    EXPECT_EQ(lo, hi);
    EXPECT_EQ(med, hi);
  }
}

TEST(Ensemble, EvenCountMedianAveragesMiddlePair) {
  const fs::path root = scratch("uq_even");
  const auto d = lhs_sample(2, {{"demand.shock_height_mult", 0.5, 1.5}}, 4);
  const auto r = run_uq_ensemble(d, small(2, 40), root, {});
  ASSERT_TRUE(r.ok());
  const auto rows = lines(r.envelope);
  for (std::size_t k = 1; k < rows.size(); ++k) {
    long day;
    char item[16];
    double lo, med, hi;
    ASSERT_EQ(std::sscanf(rows[k].c_str(), "%ld,%15[^,],%lf,%lf,%lf", &day, item, &lo, &med, &hi), 5);
    EXPECT_DOUBLE_EQ(med, 0.5 * (lo + hi));
  }
}

TEST(Ensemble, FailedMemberIsExcluded) {
  LhsDesign d = lhs_sample(3, {{"inventory.sS_scale", 0.5, 1.5}}, 9);
  // Negative scales are rejected by config validation.
  d.values[1][0] = -1.0;
  const auto r = run_uq_ensemble(d, small(2, 30), scratch("uq_fail"), {});
  EXPECT_FALSE(r.ok());
  EXPECT_FALSE(r.members[1].ok);
  EXPECT_EQ(r.members_used, 2);
  EXPECT_EQ(r.envelope_rows, 2 * 30);
}

// ---- MASE --------------------------------------------------------------------

TEST(Mase, HandInstance) {
  const auto e = mase_entry({1, 2, 3, 4}, {5, 7}, {4, 5}, 1);
  ASSERT_TRUE(e);
  EXPECT_EQ(*e, 1.5);
}

TEST(Mase, PerfectForecastScoresZero) {
  const auto e = mase_entry({3, 1, 4, 1, 5}, {9, 2, 6}, {9, 2, 6}, 1);
  ASSERT_TRUE(e);
  EXPECT_EQ(*e, 0.0);
}

TEST(Mase, FlatContextIsExcluded) {
  EXPECT_FALSE(mase_entry({2, 2, 2, 2}, {5}, {4}, 1));
  EXPECT_THROW(mase_entry({1, 2}, {1}, {1}, 2), ScenarioError);
}

TEST(Mase, SeasonalPeriods) {
  EXPECT_EQ(seasonal_period("day"), 1);
  EXPECT_EQ(seasonal_period("hour"), 24);
  EXPECT_EQ(seasonal_period("10min"), 144);
  EXPECT_THROW(seasonal_period("fortnight"), ScenarioError);
  // Season 2: differences |y_{t+2} - y_t| over [1, 5, 2, 8, 3] are 1, 3, 1.
  const auto e = mase_entry({1, 5, 2, 8, 3}, {10}, {8}, 2);
  ASSERT_TRUE(e);
  EXPECT_DOUBLE_EQ(*e, 2.0 / (5.0 / 3.0));
}

TEST(Mase, ScaleEquivariance) {
  Rng rng(derive_key(99, "mase"));
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> ctx(12), act(5), fc(5);
    for (auto& x : ctx) x = rng.uniform(0, 100);
    for (auto& x : act) x = rng.uniform(0, 100);
    for (auto& x : fc) x = rng.uniform(0, 100);
    const double c = rng.uniform(0.01, 50);
    auto scaled = [c](std::vector<double> v) {
      for (auto& x : v) x *= c;
      return v;
    };
    const auto a = mase_entry(ctx, act, fc, 1);
    const auto b = mase_entry(scaled(ctx), scaled(act), scaled(fc), 1);
    ASSERT_TRUE(a && b);
    EXPECT_NEAR(*a, *b, 1e-12 * std::max(1.0, *a));
  }
}

TEST(Mase, EvaluationWindowsAtReleaseScale) {
  const auto w = evaluation_windows(52560);
  EXPECT_EQ(w.size(), 262u);
  EXPECT_EQ(w.front(), 52560 - 7884);
  EXPECT_EQ(w[1] - w[0], 30);
  EXPECT_LE(w.back() + 30, 52560);
  EXPECT_GE(w.front(), 512);
}

TEST(Mase, SeasonalNaiveNumeratorMatchesDirectDifferences) {
  const fs::path dir = scratch("mase_release");
  run_release(small(3, 400), dir);
  const DemandMatrix y = load_demand(dir);
  ASSERT_EQ(y.horizon, 400);
  const auto starts = evaluation_windows(400, 0.15, 30, 7);
  const std::int64_t L = 64, h = 7;
  const auto f = seasonal_naive(y, starts, L, h, 30, "day");
  const auto s = mase(f, y, h);
  // Direct recomputation: numerator is the mean one-step difference over the
  // horizon, denominator the same over the context.
  double sum = 0.0;
  std::int64_t n = 0;
  for (const auto tw : starts) {
    for (std::size_t i = 0; i < 3; ++i) {
      double num = 0.0, den = 0.0;
      for (std::int64_t t = tw; t < tw + h; ++t) num += std::fabs(y.at(t, i) - y.at(t - 1, i));
      for (std::int64_t t = tw - L + 1; t < tw; ++t) den += std::fabs(y.at(t, i) - y.at(t - 1, i));
      num /= static_cast<double>(h);
      den /= static_cast<double>(L - 1);
      if (den == 0.0) continue;
      sum += num / den;
      ++n;
    }
  }
  EXPECT_EQ(s.entries, n);
  EXPECT_NEAR(s.mase, sum / static_cast<double>(n), 1e-12);
  // Shorter scoring horizon uses a prefix of each window.
  const auto s1 = mase(f, y, 1);
  EXPECT_EQ(s1.horizon, 1);
  EXPECT_EQ(s1.entries + s1.excluded, static_cast<std::int64_t>(starts.size() * 3));
}

TEST(Mase, ForecastFileRoundTrip) {
  const fs::path dir = scratch("fc");
  fs::create_directories(dir);
  ForecastFile f;
  f.context = 4;
  f.horizon = 2;
  f.stride = 30;
  f.windows[{4, "I1"}] = {4.0, 5.0};
  f.windows[{4, "I2"}] = {0.1, 1e10};
  write_forecasts(f, dir / "f.csv");
  const auto g = read_forecasts(dir / "f.csv");
  EXPECT_EQ(g.context, 4);
  EXPECT_EQ(g.horizon, 2);
  EXPECT_EQ(g.frequency, "day");
  EXPECT_EQ(g.windows, f.windows);

  DemandMatrix y;
  y.horizon = 6;
  y.items = {"I1", "I2"};
  y.values = {1, 1, 2, 1, 3, 1, 4, 1, 5, 1, 7, 1};
  const auto s = mase(g, y);
  EXPECT_EQ(s.entries, 1);
  EXPECT_EQ(s.excluded, 1);
  EXPECT_EQ(s.mase, 1.5);

  std::ofstream(dir / "bad.csv") << "# horizon=2\nwindow_start,item,step,value\n4,I1,1,3\n";
  EXPECT_THROW(read_forecasts(dir / "bad.csv"), ScenarioError);
}

TEST(Mase, GeometricMean) {
  EXPECT_DOUBLE_EQ(geometric_mean({1.0, 4.0}), 2.0);
  EXPECT_DOUBLE_EQ(geometric_mean({2.0, 2.0, 2.0}), 2.0);
  EXPECT_THROW(geometric_mean({}), ScenarioError);
  EXPECT_THROW(geometric_mean({1.0, 0.0}), ScenarioError);
}
