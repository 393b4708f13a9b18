#include "echelon/scenarios.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "echelon/engine.hpp"
#include "echelon/rng.hpp"

namespace echelon {

namespace fs = std::filesystem;

namespace {

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

SweepSetting setting(std::string label, std::vector<std::string> patch, bool baseline = false) {
  return {std::move(label), std::move(patch), baseline};
}

std::vector<SweepSpec> build_catalogue() {
  std::vector<SweepSpec> out;
  {
    SweepSpec s{"drift", "shared AR(1) coefficient", {}};
    for (const double phi : {0.71, 0.86, 0.96, 0.99}) {
      s.settings.push_back(setting("drift_" + num(phi), {"demand.ar_coeff_override=" + num(phi)}));
    }
    s.settings.push_back(setting("drift_0.9993", {}, true));
    out.push_back(std::move(s));
  }
  {
    SweepSpec s{"shock", "macro-shock count x height scale", {}};
    const std::pair<double, double> grid[] = {{0, 1}, {0.5, 0.7}, {1, 1}, {2, 2}, {3, 4}};
    for (const auto& [n, h] : grid) {
      const bool base = n == 1 && h == 1;
      s.settings.push_back(setting("shock_" + num(n) + "x" + num(h),
                                   base ? std::vector<std::string>{}
                                        : std::vector<std::string>{"demand.shock_count_mult=" + num(n),
                                                                   "demand.shock_height_mult=" + num(h)},
                                   base));
    }
    out.push_back(std::move(s));
  }
  {
    SweepSpec s{"burst", "burst rate x height scale", {}};
    const std::pair<double, double> grid[] = {{1, 1}, {1.5, 2}, {2, 3}, {3, 4}, {5, 8}};
    for (const auto& [r, h] : grid) {
      const bool base = r == 1 && h == 1;
      s.settings.push_back(setting("burst_" + num(r) + "x" + num(h),
                                   base ? std::vector<std::string>{}
                                        : std::vector<std::string>{"demand.burst_rate_mult=" + num(r),
                                                                   "demand.burst_height_mult=" + num(h)},
                                   base));
    }
    out.push_back(std::move(s));
  }
  const auto scalar_sweep = [&](const char* name, const char* knob, const char* key, std::vector<double> grid) {
    SweepSpec s{name, knob, {}};
    for (const double v : grid) {
      const bool base = v == 1.0;
      s.settings.push_back(setting(std::string(name) + "_" + num(v),
                                   base ? std::vector<std::string>{} : std::vector<std::string>{key + ("=" + num(v))},
                                   base));
    }
    out.push_back(std::move(s));
  };
  scalar_sweep("edge_cap", "container count scale", "transport.container_count_scale", {0.3, 0.6, 1.0, 1.5, 2.5});
  scalar_sweep("buffer", "reorder threshold and initial inventory scale", "inventory.sS_scale",
               {0.1, 0.2, 0.5, 0.75, 1.0});
  scalar_sweep("lead_time", "source lead-time scale", "inventory.lead_time_scale", {1.0, 2.0, 5.0, 10.0, 20.0});
  return out;
}

std::vector<NamedScenario> build_named() {
  const std::vector<std::string> shock_xhi = {"demand.shock_count_mult=3", "demand.shock_height_mult=4"};
  const std::vector<std::string> burst_xhi = {"demand.burst_rate_mult=3", "demand.burst_height_mult=4"};
  const std::string drift_mid = "demand.ar_coeff=[0.95, 0.97]";
  const std::string drift_chaos = "demand.ar_coeff=[0.96, 0.98]";
  auto with = [](std::vector<std::string> a, const std::string& extra) {
    a.push_back(extra);
    return a;
  };
  return {
      {"shock_xhi", "macro shocks three times as frequent and four times as high", shock_xhi},
      {"drift_mid", "per-item AR(1) coefficient drawn from [0.95, 0.97]", {drift_mid}},
      {"burst_xhi", "bursts three times as frequent and four times as high", burst_xhi},
      {"chaos_compound", "shock_xhi with AR(1) coefficients from [0.96, 0.98]", with(shock_xhi, drift_chaos)},
      {"chaos_burst", "burst_xhi with AR(1) coefficients from [0.96, 0.98]", with(burst_xhi, drift_chaos)},
  };
}

void report(const BatchOptions& o, const std::string& msg) {
  if (o.progress) o.progress(msg);
}

bool complete_release(const fs::path& dir) {
  return fs::exists(dir / release_files::kManifest) && !fs::exists(dir / release_files::kPartialMarker);
}

std::string manifest_config(const fs::path& dir) {
  std::ifstream in(dir / release_files::kManifest);
  try {
    return nlohmann::json::parse(in).value("config", "");
  } catch (const nlohmann::json::exception&) {
    return {};
  }
}

double elapsed(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

void replace_with_symlink(const fs::path& link, const fs::path& target) {
  std::error_code ec;
  fs::remove_all(link, ec);
  fs::create_directory_symlink(fs::relative(fs::absolute(target), fs::absolute(link).parent_path()), link);
}

}  // namespace

const std::vector<SweepSpec>& sweep_catalogue() {
  static const std::vector<SweepSpec> catalogue = build_catalogue();
  return catalogue;
}

const SweepSpec& find_sweep(const std::string& name) {
  for (const auto& s : sweep_catalogue()) {
    if (s.name == name) return s;
  }
  std::string known;
  for (const auto& s : sweep_catalogue()) known += (known.empty() ? "" : ", ") + s.name;
  throw ScenarioError("unknown sweep '" + name + "' (known: " + known + ")");
}

const std::vector<NamedScenario>& named_scenarios() {
  static const std::vector<NamedScenario> named = build_named();
  return named;
}

const NamedScenario& find_named_scenario(const std::string& name) {
  for (const auto& s : named_scenarios()) {
    if (s.name == name) return s;
  }
  throw ScenarioError("unknown scenario '" + name + "'");
}

bool SweepResult::ok() const {
  return std::all_of(settings.begin(), settings.end(), [](const RunOutcome& o) { return o.ok; });
}

bool EnsembleResult::ok() const {
  return std::all_of(members.begin(), members.end(), [](const RunOutcome& o) { return o.ok; });
}

unsigned default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& task) {
  if (jobs == 0) jobs = default_jobs();
  const std::size_t workers = std::min<std::size_t>(jobs, count);
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) task(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) task(k);
    });
  }
  for (auto& t : pool) t.join();
}

RolloutSummary run_release(const Config& config, const fs::path& dir, const ReleaseWriterOptions& writer) {
  Engine engine(config);
  ReleaseSink sink(dir, writer);
  RolloutSink* sinks[] = {&sink};
  return run_rollout(engine, sinks);
}

SweepResult run_sweep(const SweepSpec& sweep, const Config& base, const fs::path& out_root,
                      const BatchOptions& options) {
  SweepResult result{sweep.name, {}};
  const fs::path sweep_dir = out_root / sweep.name;
  fs::create_directories(sweep_dir);

  // The baseline setting shares one release across sweeps.
  std::optional<fs::path> baseline_dir = options.baseline_release;
  std::string baseline_error;
  const bool wants_baseline =
      std::any_of(sweep.settings.begin(), sweep.settings.end(), [](const SweepSetting& s) { return s.baseline; });
  if (wants_baseline && !baseline_dir) {
    const fs::path dir = out_root / "baseline";
    ReleaseWriterOptions writer = options.writer;
    if (writer.config_yaml.empty()) writer.config_yaml = to_yaml(base);
    const bool reusable =
        complete_release(dir) && manifest_config(dir) == writer.config_yaml;
    if (!reusable) {
      report(options, "simulating shared baseline into " + dir.string());
      try {
        run_release(base, dir, writer);
      } catch (const std::exception& e) {
        baseline_error = e.what();
      }
    }
    baseline_dir = dir;
  }

  result.settings.resize(sweep.settings.size());
  std::mutex progress_mutex;
  parallel_for(sweep.settings.size(), options.jobs, [&](std::size_t k) {
    const auto& s = sweep.settings[k];
    RunOutcome& o = result.settings[k];
    o.label = s.label;
    o.dir = sweep_dir / s.label;
    const auto start = std::chrono::steady_clock::now();
    try {
      if (s.baseline) {
        if (!baseline_error.empty()) throw ScenarioError("baseline rollout failed: " + baseline_error);
        replace_with_symlink(o.dir, *baseline_dir);
        o.shared = true;
      } else {
        const Config c = apply_overrides(base, s.patch);
        run_release(c, o.dir, options.writer);
      }
      o.ok = true;
    } catch (const std::exception& e) {
      o.error = e.what();
    }
    o.seconds = elapsed(start);
    std::lock_guard lock(progress_mutex);
    report(options, sweep.name + "/" + s.label + (o.ok ? " done" : " FAILED: " + o.error));
  });
  return result;
}

// ---- Latin hypercube ---------------------------------------------------------

std::vector<LhsInterval> baseline_uq_intervals() {
  return {{"demand.ar_coeff_override", 0.99916, 0.99944},
          {"demand.shock_height_mult", 0.80, 1.20},
          {"demand.burst_height_mult", 0.80, 1.20}};
}

std::vector<std::string> LhsDesign::patch(std::size_t sample) const {
  std::vector<std::string> out;
  for (std::size_t d = 0; d < intervals.size(); ++d) out.push_back(intervals[d].key + "=" + num(values[sample][d]));
  return out;
}

LhsDesign lhs_sample(std::int64_t samples, const std::vector<LhsInterval>& intervals, std::uint64_t seed) {
  if (samples < 1) throw ScenarioError("LHS sample count must be at least 1");
  for (const auto& iv : intervals) {
    if (!(iv.lo <= iv.hi)) throw ScenarioError("LHS interval for " + iv.key + " has lo > hi");
  }
  LhsDesign d;
  d.samples = samples;
  d.seed = seed;
  d.intervals = intervals;
  const auto K = static_cast<std::size_t>(samples);
  d.unit.assign(K, std::vector<double>(intervals.size()));
  d.values.assign(K, std::vector<double>(intervals.size()));
  const std::uint64_t root = derive_key(seed, "lhs");
  for (std::size_t dim = 0; dim < intervals.size(); ++dim) {
    std::vector<std::size_t> perm(K);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_key(root, dim));
    for (std::size_t j = K; j > 1; --j) {
      const auto r = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(j) - 1));
      std::swap(perm[j - 1], perm[r]);
    }
    for (std::size_t k = 0; k < K; ++k) {
      const double u = (static_cast<double>(perm[k]) + 0.5) / static_cast<double>(K);
      d.unit[k][dim] = u;
      d.values[k][dim] = intervals[dim].lo + u * (intervals[dim].hi - intervals[dim].lo);
    }
  }
  return d;
}

namespace {

struct DemandRowReader {
  explicit DemandRowReader(const fs::path& release) : path(release / release_files::kDaily), in(path) {
    if (!in) throw ScenarioError("cannot open " + path.string());
    std::string header;
    std::getline(in, header);
    if (header != release_files::kDailyHeader) throw ScenarioError(path.string() + ": unexpected header");
  }
  // Reads the key columns and demand of the next row.
  bool next(std::int64_t& day, std::string& item, std::int64_t& demand) {
    if (!std::getline(in, line)) return false;
    ++line_no;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const auto c3 = line.find(',', c2 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos || c3 == std::string::npos) {
      throw ScenarioError(path.string() + ":" + std::to_string(line_no + 1) + ": malformed row");
    }
    const auto parse = [&](std::size_t a, std::size_t b, std::int64_t& out) {
      const auto r = std::from_chars(line.data() + a, line.data() + b, out);
      if (r.ec != std::errc() || r.ptr != line.data() + b) {
        throw ScenarioError(path.string() + ":" + std::to_string(line_no + 1) + ": not an integer");
      }
    };
    parse(0, c1, day);
    item.assign(line, c1 + 1, c2 - c1 - 1);
    parse(c2 + 1, c3, demand);
    return true;
  }
  fs::path path;
  std::ifstream in;
  std::string line;
  std::int64_t line_no = 0;
};

}  // namespace

std::int64_t write_envelope(const std::vector<fs::path>& members, const fs::path& out) {
  if (members.empty()) throw ScenarioError("envelope needs at least one member");
  std::vector<std::unique_ptr<DemandRowReader>> readers;
  for (const auto& m : members) readers.push_back(std::make_unique<DemandRowReader>(m));
  CsvOut csv(out);
  csv.text("day,item,min,median,max\n");
  std::vector<std::int64_t> values(members.size());
  std::int64_t day0 = 0, day = 0, v = 0;
  std::string item0, item;
  while (true) {
    bool any = false, all = true;
    for (std::size_t k = 0; k < readers.size(); ++k) {
      const bool got = k == 0 ? readers[k]->next(day0, item0, v) : readers[k]->next(day, item, v);
      any |= got;
      all &= got;
      if (!got) continue;
      if (k > 0 && (day != day0 || item != item0)) {
        throw ScenarioError("ensemble members disagree on row keys at " + readers[k]->path.string() + ":" +
                            std::to_string(readers[k]->line_no + 1));
      }
      values[k] = v;
    }
    if (!any) break;
    if (!all) throw ScenarioError("ensemble members have different horizons");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    const double median = n % 2 ? static_cast<double>(values[n / 2])
                                : 0.5 * static_cast<double>(values[n / 2 - 1] + values[n / 2]);
    csv.integer(day0).ch(',').text(item0).ch(',').integer(values.front()).ch(',').text(num(median)).ch(',');
    csv.integer(values.back()).end_row();
  }
  const std::int64_t rows = csv.rows();
  csv.close();
  return rows;
}

EnsembleResult run_uq_ensemble(const LhsDesign& design, const Config& base, const fs::path& out_root,
                               const BatchOptions& options) {
  fs::create_directories(out_root);
  EnsembleResult result;
  const auto K = static_cast<std::size_t>(design.samples);
  {
    std::ofstream csv(out_root / "design.csv");
    csv << "member";
    for (const auto& iv : design.intervals) csv << ',' << iv.key;
    csv << '\n';
    for (std::size_t k = 0; k < K; ++k) {
      csv << k;
      for (const double v : design.values[k]) csv << ',' << num(v);
      csv << '\n';
    }
  }
  const int width = K > 100 ? 3 : 2;
  result.members.resize(K);
  std::mutex progress_mutex;
  parallel_for(K, options.jobs, [&](std::size_t k) {
    RunOutcome& o = result.members[k];
    char name[32];
    std::snprintf(name, sizeof name, "member_%0*zu", width, k);
    o.label = name;
    o.dir = out_root / name;
    const auto start = std::chrono::steady_clock::now();
    try {
      run_release(apply_overrides(base, design.patch(k)), o.dir, options.writer);
      o.ok = true;
    } catch (const std::exception& e) {
      o.error = e.what();
    }
    o.seconds = elapsed(start);
    std::lock_guard lock(progress_mutex);
    report(options, o.label + (o.ok ? " done" : " FAILED: " + o.error));
  });
  std::vector<fs::path> ok;
  for (const auto& m : result.members) {
    if (m.ok) ok.push_back(m.dir);
  }
  result.members_used = static_cast<std::int64_t>(ok.size());
  if (!ok.empty()) {
    result.envelope = out_root / "envelope.csv";
    result.envelope_rows = write_envelope(ok, result.envelope);
  }
  return result;
}

// ---- MASE --------------------------------------------------------------------

DemandMatrix load_demand(const fs::path& release_dir) {
  DemandMatrix m;
  {
    std::ifstream cols(release_dir / release_files::kSignalsCols);
    if (!cols) throw ScenarioError("cannot open " + (release_dir / release_files::kSignalsCols).string());
    std::string line;
    std::getline(cols, line);
    std::stringstream ss(line);
    for (std::string id; std::getline(ss, id, ',');) m.items.push_back(id);
  }
  const std::size_t C = m.items.size();
  if (C == 0) throw ScenarioError("release lists no items");
  DemandRowReader reader(release_dir);
  std::int64_t day = 0, demand = 0;
  std::string item;
  std::size_t k = 0;
  while (reader.next(day, item, demand)) {
    if (day != static_cast<std::int64_t>(k / C) || item != m.items[k % C]) {
      throw ScenarioError(reader.path.string() + ":" + std::to_string(reader.line_no + 1) + ": unexpected key");
    }
    m.values.push_back(static_cast<double>(demand));
    ++k;
  }
  if (k % C != 0) throw ScenarioError(reader.path.string() + ": incomplete final day");
  m.horizon = static_cast<std::int64_t>(k / C);
  return m;
}

std::int64_t seasonal_period(const std::string& frequency) {
  if (frequency == "day" || frequency == "D" || frequency == "daily") return 1;
  if (frequency == "hour" || frequency == "H" || frequency == "hourly") return 24;
  if (frequency == "10min" || frequency == "10T") return 144;
  throw ScenarioError("unknown frequency label '" + frequency + "'");
}

std::vector<std::int64_t> evaluation_windows(std::int64_t horizon, double test_fraction, std::int64_t stride,
                                             std::int64_t max_horizon) {
  if (stride < 1 || max_horizon < 1) throw ScenarioError("stride and horizon must be positive");
  const auto test_len = static_cast<std::int64_t>(std::llround(test_fraction * static_cast<double>(horizon)));
  std::vector<std::int64_t> out;
  for (std::int64_t t = horizon - test_len; t + max_horizon <= horizon; t += stride) out.push_back(t);
  return out;
}

ForecastFile seasonal_naive(const DemandMatrix& actuals, const std::vector<std::int64_t>& starts, std::int64_t context,
                            std::int64_t horizon, std::int64_t stride, const std::string& frequency) {
  const std::int64_t m = seasonal_period(frequency);
  ForecastFile f;
  f.context = context;
  f.horizon = horizon;
  f.stride = stride;
  f.frequency = frequency;
  for (const auto tw : starts) {
    if (tw - m < 0 || tw + horizon > actuals.horizon) throw ScenarioError("window out of range");
    for (std::size_t i = 0; i < actuals.items.size(); ++i) {
      std::vector<double> v(static_cast<std::size_t>(horizon));
      for (std::int64_t k = 0; k < horizon; ++k) v[static_cast<std::size_t>(k)] = actuals.at(tw + k - m, i);
      f.windows[{tw, actuals.items[i]}] = std::move(v);
    }
  }
  return f;
}

std::optional<double> mase_entry(const std::vector<double>& context, const std::vector<double>& actuals,
                                 const std::vector<double>& forecast, std::int64_t season) {
  const auto L = static_cast<std::int64_t>(context.size());
  if (season < 1 || L <= season) throw ScenarioError("context must be longer than the seasonal period");
  if (actuals.size() != forecast.size() || actuals.empty()) throw ScenarioError("forecast length mismatch");
  double se = 0.0;
  for (std::int64_t t = 0; t + season < L; ++t) {
    se += std::fabs(context[static_cast<std::size_t>(t + season)] - context[static_cast<std::size_t>(t)]);
  }
  se /= static_cast<double>(L - season);
  if (se == 0.0) return std::nullopt;
  double mae = 0.0;
  for (std::size_t k = 0; k < actuals.size(); ++k) mae += std::fabs(actuals[k] - forecast[k]);
  mae /= static_cast<double>(actuals.size());
  return mae / se;
}

MaseScore mase(const ForecastFile& forecasts, const DemandMatrix& actuals, std::int64_t h,
               std::optional<std::int64_t> season) {
  const std::int64_t m = season ? *season : seasonal_period(forecasts.frequency);
  if (h == 0) h = forecasts.horizon;
  if (h < 1 || h > forecasts.horizon) throw ScenarioError("scoring horizon outside the forecast horizon");
  const std::int64_t L = forecasts.context;
  std::map<std::string, std::size_t> item_index;
  for (std::size_t i = 0; i < actuals.items.size(); ++i) item_index[actuals.items[i]] = i;
  MaseScore score;
  score.horizon = h;
  double sum = 0.0;
  std::vector<double> ctx(static_cast<std::size_t>(L)), act(static_cast<std::size_t>(h)),
      fc(static_cast<std::size_t>(h));
  for (const auto& [key, values] : forecasts.windows) {
    const auto& [tw, item] = key;
    const auto it = item_index.find(item);
    if (it == item_index.end()) throw ScenarioError("forecast for unknown item " + item);
    if (tw - L < 0) throw ScenarioError("window at " + std::to_string(tw) + " lacks a full context");
    if (tw + h > actuals.horizon) throw ScenarioError("window at " + std::to_string(tw) + " runs past the actuals");
    for (std::int64_t k = 0; k < L; ++k) ctx[static_cast<std::size_t>(k)] = actuals.at(tw - L + k, it->second);
    for (std::int64_t k = 0; k < h; ++k) {
      act[static_cast<std::size_t>(k)] = actuals.at(tw + k, it->second);
      fc[static_cast<std::size_t>(k)] = values[static_cast<std::size_t>(k)];
    }
    const auto e = mase_entry(ctx, act, fc, m);
    if (!e) {
      ++score.excluded;
      continue;
    }
    sum += *e;
    ++score.entries;
  }
  score.mase = score.entries ? sum / static_cast<double>(score.entries) : std::nan("");
  return score;
}

double geometric_mean(const std::vector<double>& values) {
  if (values.empty()) throw ScenarioError("geometric mean of an empty set");
  double log_sum = 0.0;
  for (const double v : values) {
    if (!(v > 0.0)) throw ScenarioError("geometric mean needs positive values");
    log_sum += std::log(v);
  }
  return std::exp(log_sum / static_cast<double>(values.size()));
}

ForecastFile read_forecasts(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open " + path.string());
  ForecastFile f;
  f.windows.clear();
  std::string line;
  std::int64_t line_no = 0;
  const auto where = [&] { return path.string() + ":" + std::to_string(line_no); };
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      const auto value = line.substr(eq + 1);
      try {
        if (key == "context") f.context = std::stoll(value);
        else if (key == "horizon") f.horizon = std::stoll(value);
        else if (key == "stride") f.stride = std::stoll(value);
        else if (key == "frequency") f.frequency = value;
      } catch (const std::exception&) {
        throw ScenarioError(where() + ": bad value for " + key);
      }
      continue;
    }
    if (!header_seen) {
      if (line != "window_start,item,step,value") throw ScenarioError(where() + ": unexpected header");
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string a, item, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, item, ',') || !std::getline(ss, b, ',') ||
        !std::getline(ss, c)) {
      throw ScenarioError(where() + ": expected 4 columns");
    }
    std::int64_t tw = 0, step = 0;
    double value = 0.0;
    try {
      tw = std::stoll(a);
      step = std::stoll(b);
      value = std::stod(c);
    } catch (const std::exception&) {
      throw ScenarioError(where() + ": malformed number");
    }
    if (step < 1 || step > f.horizon) throw ScenarioError(where() + ": step outside 1.." + std::to_string(f.horizon));
    auto& v = f.windows[{tw, item}];
    if (v.empty()) v.assign(static_cast<std::size_t>(f.horizon), std::nan(""));
    v[static_cast<std::size_t>(step - 1)] = value;
  }
  if (!header_seen) throw ScenarioError(path.string() + ": no forecast header");
  for (const auto& [key, v] : f.windows) {
    for (const double x : v) {
      if (std::isnan(x)) {
        throw ScenarioError(path.string() + ": window " + std::to_string(key.first) + "/" + key.second +
                            " is missing steps");
      }
    }
  }
  return f;
}

void write_forecasts(const ForecastFile& f, const fs::path& path) {
  std::ofstream out(path);
  out << "# context=" << f.context << "\n# horizon=" << f.horizon << "\n# stride=" << f.stride
      << "\n# frequency=" << f.frequency << "\nwindow_start,item,step,value\n";
  for (const auto& [key, v] : f.windows) {
    for (std::size_t k = 0; k < v.size(); ++k) out << key.first << ',' << key.second << ',' << k + 1 << ',' << num(v[k]) << '\n';
  }
  if (!out) throw ScenarioError("write failed for " + path.string());
}

}  // namespace echelon
