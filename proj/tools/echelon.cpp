// Command-line front end: simulate, validate, bullwhip, sweep, uq, score, serve.

#include <CLI11.hpp>
#include <json.hpp>

#include <pthread.h>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>

#include "echelon/config.hpp"
#include "echelon/dataset.hpp"
#include "echelon/engine.hpp"
#include "echelon/scenarios.hpp"
#include "echelon/service.hpp"
#include "echelon/validate.hpp"

using namespace echelon;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- logging -----------------------------------------------------------------

struct Log {
  bool quiet = false;
  bool json = false;
  std::mutex mutex;

  void info(const std::string& msg) {
    if (quiet) return;
    std::lock_guard lock(mutex);
    if (json) {
      std::cerr << nlohmann::json{{"level", "info"}, {"msg", msg}}.dump() << '\n';
    } else {
      std::cerr << msg << '\n';
    }
  }
  void error(const std::string& msg) {
    std::lock_guard lock(mutex);
    if (json) {
      std::cerr << nlohmann::json{{"level", "error"}, {"msg", msg}}.dump() << '\n';
    } else {
      std::cerr << "error: " << msg << '\n';
    }
  }
};

Log g_log;

std::string default_out_root() {
  const char* env = std::getenv("ECHELON_OUT_ROOT");
  return env && *env ? env : "out";
}

// ---- shared config flags -------------------------------------------------------

struct ConfigFlags {
  std::string config_path;
  std::string profile;
  std::string scenario;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> items;
  std::optional<std::int64_t> horizon;
  std::optional<double> pipeline_mult;
  bool echo = true;

  void add(CLI::App* app) {
    app->add_option("-c,--config", config_path, "YAML config file (absent fields keep baseline values)")
        ->check(CLI::ExistingFile);
    app->add_option("--profile", profile, "size preset: desk (5 items, 2000 steps) or paper (50 items, 52560 steps)")
        ->check(CLI::IsMember({"desk", "paper"}));
    app->add_option("--scenario", scenario,
                    "named demand-side scenario: shock_xhi, drift_mid, burst_xhi, chaos_compound, chaos_burst");
    app->add_option("--set", sets, "override a config field, e.g. --set demand.burst_rate_mult=2 (repeatable)");
    app->add_option("--seed", seed, "master seed for every random stream");
    app->add_option("--items", items, "catalogue size C")->check(CLI::PositiveNumber);
    app->add_option("--horizon", horizon, "number of simulated steps T")->check(CLI::PositiveNumber);
    app->add_option("--pipeline-mult", pipeline_mult,
                    "dispatch pipeline multiplier m (0 selects the reactive rule)")
        ->check(CLI::NonNegativeNumber);
    app->add_flag("!--no-echo", echo, "do not print the effective config to stderr");
  }

  Config build() const {
    std::vector<std::string> o;
    if (profile == "desk") {
      o = {"structural.items=5", "structural.horizon=2000"};
    }
    if (!scenario.empty()) {
      try {
        const auto& p = find_named_scenario(scenario).patch;
        o.insert(o.end(), p.begin(), p.end());
      } catch (const ScenarioError& e) {
        throw UsageError(e.what());
      }
    }
    o.insert(o.end(), sets.begin(), sets.end());
    if (seed) o.push_back("structural.seed=" + std::to_string(*seed));
    if (items) o.push_back("structural.items=" + std::to_string(*items));
    if (horizon) o.push_back("structural.horizon=" + std::to_string(*horizon));
    if (pipeline_mult) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "structural.pipeline_multiplier=%.17g", *pipeline_mult);
      o.push_back(buf);
    }
    Config c = config_path.empty() ? parse_config("", o) : load_config(config_path, o);
    if (echo && !g_log.quiet) std::cerr << "# effective config\n" << to_yaml(c) << '\n';
    return c;
  }
};

// ---- progress ------------------------------------------------------------------

class ProgressSink : public RolloutSink {
 public:
  void begin(const Engine& e) override { horizon_ = e.horizon(); }
  void on_step(const Engine&, const StepRecord& rec) override {
    const std::int64_t pct = (rec.t + 1) * 20 / std::max<std::int64_t>(1, horizon_);
    if (pct > last_) {
      last_ = pct;
      g_log.info("step " + std::to_string(rec.t + 1) + "/" + std::to_string(horizon_) + " (" +
                 std::to_string(pct * 5) + "%)");
    }
  }

 private:
  std::int64_t horizon_ = 1;
  std::int64_t last_ = 0;
};

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path);
}

// ---- subcommands ---------------------------------------------------------------

int cmd_simulate(const ConfigFlags& flags, const std::string& out, bool source_orders) {
  const Config c = flags.build();
  Engine engine(c);
  ReleaseWriterOptions w;
  w.source_orders = source_orders;
  ReleaseSink release(out, w);
  ProgressSink progress;
  RolloutSink* sinks[] = {&release, &progress};
  const RolloutSummary s = run_rollout(engine, sinks);
  g_log.info("wrote " + out + ": " + std::to_string(s.steps) + " steps, " + std::to_string(s.shipment_rows) +
             " shipment rows, fill rate " + fixed(s.overall_fill_rate(), 4) + ", " + fixed(s.wall_seconds, 1) +
             " s");
  return kOk;
}

int cmd_validate(const std::string& dir, const std::string& config_path, std::optional<std::uint64_t> seed,
                 const std::string& json_out) {
  std::optional<Config> hint;
  if (!config_path.empty()) hint = load_config(config_path);
  const auto audit = validate_release(dir, hint ? &hint->network : nullptr, seed);
  std::cout << audit.report.to_text(audit.layout);
  if (!json_out.empty()) write_text(json_out, audit.report.to_json(audit.layout));
  return audit.report.passed() ? kOk : kFailed;
}

int cmd_bullwhip(const std::string& dir, std::int64_t window, std::int64_t warmup, const std::string& config_path,
                 const std::string& json_out) {
  if (window < 1 || warmup < 0) throw UsageError("window must be >= 1 and warmup >= 0");
  std::optional<Config> hint;
  if (!config_path.empty()) hint = load_config(config_path);
  const auto r = bullwhip_release(dir, {window, warmup}, hint ? &hint->network : nullptr);
  std::cout << r.table.to_text(r.layout);
  if (!json_out.empty()) write_text(json_out, r.table.to_json(r.layout));
  return kOk;
}

BatchOptions batch_options(unsigned jobs) {
  BatchOptions b;
  b.jobs = jobs;
  b.progress = [](const std::string& m) { g_log.info(m); };
  return b;
}

int cmd_sweep(const ConfigFlags& flags, const std::vector<std::string>& names, const std::string& out,
              unsigned jobs, const std::string& baseline) {
  std::vector<const SweepSpec*> sweeps;
  for (const auto& n : names) {
    if (n == "all") {
      for (const auto& s : sweep_catalogue()) sweeps.push_back(&s);
    } else {
      try {
        sweeps.push_back(&find_sweep(n));
      } catch (const ScenarioError& e) {
        throw UsageError(e.what());
      }
    }
  }
  const Config base = flags.build();
  BatchOptions b = batch_options(jobs);
  if (!baseline.empty()) b.baseline_release = baseline;
  bool ok = true;
  for (const auto* s : sweeps) {
    const auto r = run_sweep(*s, base, out, b);
    for (const auto& o : r.settings) {
      std::cout << s->name << '\t' << o.label << '\t' << (o.ok ? (o.shared ? "shared" : "ok") : "FAILED") << '\t'
                << o.dir.string() << '\n';
    }
    ok &= r.ok();
  }
  return ok ? kOk : kFailed;
}

int cmd_uq(const ConfigFlags& flags, std::int64_t samples, std::uint64_t design_seed,
           const std::vector<std::string>& interval_specs, const std::string& out, unsigned jobs) {
  auto intervals = baseline_uq_intervals();
  if (!interval_specs.empty()) {
    intervals.clear();
    for (const auto& spec : interval_specs) {
      const auto a = spec.find(':'), b = spec.rfind(':');
      if (a == std::string::npos || a == b) throw UsageError("interval '" + spec + "' is not key:lo:hi");
      try {
        intervals.push_back({spec.substr(0, a), std::stod(spec.substr(a + 1, b - a - 1)), std::stod(spec.substr(b + 1))});
      } catch (const std::exception&) {
        throw UsageError("interval '" + spec + "' has non-numeric bounds");
      }
    }
  }
  const Config base = flags.build();
  const LhsDesign design = lhs_sample(samples, intervals, design_seed);
  const auto r = run_uq_ensemble(design, base, out, batch_options(jobs));
  for (const auto& m : r.members) {
    std::cout << m.label << '\t' << (m.ok ? "ok" : "FAILED: " + m.error) << '\n';
  }
  if (!r.envelope.empty()) {
    std::cout << "envelope\t" << r.envelope.string() << '\t' << r.envelope_rows << " rows from " << r.members_used
              << " members\n";
  }
  return r.ok() ? kOk : kFailed;
}

int cmd_score(const std::string& release, const std::string& forecasts, const std::string& write_naive,
              std::int64_t context, std::int64_t horizon, std::int64_t stride, std::vector<std::int64_t> horizons,
              std::optional<std::int64_t> season, const std::string& frequency, const std::string& json_out) {
  const DemandMatrix y = load_demand(release);
  if (!write_naive.empty()) {
    const auto starts = evaluation_windows(y.horizon, 0.15, stride, horizon);
    const ForecastFile f = seasonal_naive(y, starts, context, horizon, stride, frequency);
    write_forecasts(f, write_naive);
    g_log.info("wrote " + std::to_string(f.windows.size()) + " windows to " + write_naive);
    if (forecasts.empty()) return kOk;
  }
  if (forecasts.empty()) throw UsageError("score needs --forecasts or --write-naive");
  const ForecastFile f = read_forecasts(forecasts);
  if (horizons.empty()) horizons = {f.horizon};
  nlohmann::json j = nlohmann::json::array();
  std::cout << "h\tMASE\tentries\texcluded\n";
  for (const auto h : horizons) {
    const auto s = mase(f, y, h, season);
    std::cout << h << '\t' << fixed(s.mase, 4) << '\t' << s.entries << '\t' << s.excluded << '\n';
    j.push_back({{"h", h}, {"mase", s.mase}, {"entries", s.entries}, {"excluded", s.excluded}});
  }
  if (!json_out.empty()) write_text(json_out, j.dump(2));
  return kOk;
}

int cmd_serve(const std::string& host, int port, std::size_t max_sessions, std::int64_t idle_seconds) {
  ServiceOptions o;
  o.max_sessions = max_sessions;
  o.idle_timeout = std::chrono::seconds(idle_seconds);
  // Handle SIGINT/SIGTERM on a dedicated thread; worker threads inherit the mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  Server server(o);
  const int bound = server.start(host, port);
  g_log.info("serving on http://" + host + ":" + std::to_string(bound));
  std::cout << bound << std::endl;
  std::thread watcher([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    g_log.info("shutting down");
    server.stop();
  });
  server.wait();
  watcher.join();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-echelon supply-chain simulator with release validation, sweeps and a session service"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("-q,--quiet", g_log.quiet, "suppress progress output on stderr");
  app.add_flag("--log-json", g_log.json, "emit progress as JSON lines");

  // simulate
  auto* sim = app.add_subcommand("simulate", "run one rollout and write a release directory");
  ConfigFlags sim_flags;
  sim_flags.add(sim);
  std::string sim_out = default_out_root() + "/release";
  bool sim_source_orders = true;
  sim->add_option("-o,--out", sim_out, "release directory (default $ECHELON_OUT_ROOT/release)");
  sim->add_flag("!--no-source-orders", sim_source_orders, "omit the source_orders.csv extension file");

  // validate
  auto* val = app.add_subcommand("validate", "audit a release for the conservation laws; exit 1 on a violation");
  std::string val_dir, val_config, val_json;
  std::optional<std::uint64_t> val_seed;
  val->add_option("release", val_dir, "release directory")->required()->check(CLI::ExistingDirectory);
  val->add_option("-c,--config", val_config, "config supplying node roles and tiers")->check(CLI::ExistingFile);
  val->add_option("--seed", val_seed, "seed used to rebuild the initial state from the config echo");
  val->add_option("--json", val_json, "also write the report as JSON");

  // bullwhip
  auto* bw = app.add_subcommand("bullwhip", "per-tier variance amplification table for a release");
  std::string bw_dir, bw_config, bw_json;
  std::int64_t bw_window = 30, bw_warmup = 365;
  std::optional<std::uint64_t> bw_seed;
  bw->add_option("release", bw_dir, "release directory")->required()->check(CLI::ExistingDirectory);
  bw->add_option("--window", bw_window, "aggregation bin in steps for the monthly ratio")->capture_default_str();
  bw->add_option("--warmup", bw_warmup, "initial steps excluded")->capture_default_str();
  bw->add_option("-c,--config", bw_config, "config supplying node roles and tiers")->check(CLI::ExistingFile);
  bw->add_option("--seed", bw_seed, "accepted for symmetry; the table depends only on the release");
  bw->add_option("--json", bw_json, "also write the table as JSON");

  // sweep
  auto* sw = app.add_subcommand("sweep", "run one-at-a-time scenario sweeps");
  ConfigFlags sw_flags;
  sw_flags.add(sw);
  std::vector<std::string> sw_names;
  std::string sw_out = default_out_root() + "/sweeps", sw_baseline;
  unsigned sw_jobs = 0;
  sw->add_option("sweeps", sw_names, "drift, shock, burst, edge_cap, buffer, lead_time or all")->required();
  sw->add_option("-o,--out", sw_out, "output root");
  sw->add_option("-j,--jobs", sw_jobs, "parallel rollouts (default: available cores)");
  sw->add_option("--baseline", sw_baseline, "existing release shared as the baseline setting")
      ->check(CLI::ExistingDirectory);

  // uq
  auto* uq = app.add_subcommand("uq", "Latin-hypercube ensemble over demand-side knobs with a demand envelope");
  ConfigFlags uq_flags;
  uq_flags.add(uq);
  std::int64_t uq_samples = 20;
  std::uint64_t uq_design_seed = 2025;
  std::vector<std::string> uq_intervals;
  std::string uq_out = default_out_root() + "/uq";
  unsigned uq_jobs = 0;
  uq->add_option("-k,--samples", uq_samples, "ensemble size K")->capture_default_str()->check(CLI::PositiveNumber);
  uq->add_option("--design-seed", uq_design_seed, "seed of the stratum permutations")->capture_default_str();
  uq->add_option("--interval", uq_intervals,
                 "knob interval key:lo:hi (repeatable; default: shared AR coefficient, shock and burst height scales)");
  uq->add_option("-o,--out", uq_out, "output root");
  uq->add_option("-j,--jobs", uq_jobs, "parallel rollouts (default: available cores)");

  // score
  auto* sc = app.add_subcommand("score", "MASE of point forecasts against a release's realized demand");
  std::string sc_release, sc_forecasts, sc_naive, sc_freq = "day", sc_json;
  std::int64_t sc_context = 512, sc_horizon = 30, sc_stride = 30;
  std::vector<std::int64_t> sc_horizons;
  std::optional<std::int64_t> sc_season;
  std::optional<std::uint64_t> sc_seed;
  sc->add_option("--release", sc_release, "release directory with the actuals")->required()->check(CLI::ExistingDirectory);
  auto* sc_f = sc->add_option("--forecasts", sc_forecasts, "forecast CSV to score")->check(CLI::ExistingFile);
  sc->add_option("--write-naive", sc_naive, "write seasonal-naive forecasts over the test windows to this file");
  sc->add_option("--context", sc_context, "context length L for --write-naive")->capture_default_str();
  sc->add_option("--horizon", sc_horizon, "forecast horizon for --write-naive")->capture_default_str();
  sc->add_option("--stride", sc_stride, "window stride for --write-naive")->capture_default_str();
  sc->add_option("--frequency", sc_freq, "frequency label selecting the seasonal period")->capture_default_str();
  sc->add_option("--at", sc_horizons, "scoring horizons (default: the file's horizon)");
  sc->add_option("--season", sc_season, "seasonal period m overriding the frequency label")
      ->check(CLI::PositiveNumber);
  sc->add_option("--seed", sc_seed, "accepted for symmetry; scoring is deterministic");
  sc->add_option("--json", sc_json, "also write scores as JSON");
  (void)sc_f;

  // serve
  auto* sv = app.add_subcommand("serve", "start the HTTP session service");
  std::string sv_host = "127.0.0.1";
  int sv_port = 8080;
  std::size_t sv_max = 16;
  std::int64_t sv_idle = 900;
  std::optional<std::uint64_t> sv_seed;
  if (const char* p = std::getenv("ECHELON_PORT")) sv_port = std::atoi(p);
  sv->add_option("--host", sv_host, "bind address")->capture_default_str();
  sv->add_option("--port", sv_port, "port (0 picks a free one; default $ECHELON_PORT or 8080)")->capture_default_str();
  sv->add_option("--max-sessions", sv_max, "concurrent session cap")->capture_default_str();
  sv->add_option("--idle-timeout", sv_idle, "seconds before an idle session expires")->capture_default_str();
  sv->add_option("--seed", sv_seed, "accepted for symmetry; sessions choose their own seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_flags, sim_out, sim_source_orders);
    if (val->parsed()) return cmd_validate(val_dir, val_config, val_seed, val_json);
    if (bw->parsed()) return cmd_bullwhip(bw_dir, bw_window, bw_warmup, bw_config, bw_json);
    if (sw->parsed()) return cmd_sweep(sw_flags, sw_names, sw_out, sw_jobs, sw_baseline);
    if (uq->parsed()) return cmd_uq(uq_flags, uq_samples, uq_design_seed, uq_intervals, uq_out, uq_jobs);
    if (sc->parsed()) {
      return cmd_score(sc_release, sc_forecasts, sc_naive, sc_context, sc_horizon, sc_stride, sc_horizons, sc_season,
                       sc_freq, sc_json);
    }
    if (sv->parsed()) return cmd_serve(sv_host, sv_port, sv_max, sv_idle);
  } catch (const UsageError& e) {
    g_log.error(e.what());
    return kUsage;
  } catch (const ConfigError& e) {
    g_log.error(e.what());
    return kUsage;
  } catch (const DatasetError& e) {
    g_log.error(e.what());
    return kFailed;
  } catch (const ScenarioError& e) {
    g_log.error(e.what());
    return kFailed;
  } catch (const std::exception& e) {
    g_log.error(e.what());
    return kFailed;
  }
  return kUsage;
}
