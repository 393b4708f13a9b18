#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "echelon/config.hpp"
#include "echelon/dataset.hpp"

namespace echelon {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One setting of a one-at-a-time sweep, expressed as config overrides.
struct SweepSetting {
  std::string label;  // directory name
  std::vector<std::string> patch;
  bool baseline = false;
};

struct SweepSpec {
  std::string name;
  std::string knob;  // human-readable knob description
  std::vector<SweepSetting> settings;
};

const std::vector<SweepSpec>& sweep_catalogue();
const SweepSpec& find_sweep(const std::string& name);

// Named demand-side scenarios, also shipped as YAML under configs/scenarios.
struct NamedScenario {
  std::string name;
  std::string description;
  std::vector<std::string> patch;
};
const std::vector<NamedScenario>& named_scenarios();
const NamedScenario& find_named_scenario(const std::string& name);

struct BatchOptions {
  unsigned jobs = 0;  // 0 selects the available cores
  ReleaseWriterOptions writer;
  // Existing release to share as the baseline setting. When empty the
  // baseline is simulated once under `out_root/baseline`.
  std::optional<std::filesystem::path> baseline_release;
  std::function<void(const std::string&)> progress;
};

struct RunOutcome {
  std::string label;
  std::filesystem::path dir;
  bool ok = false;
  bool shared = false;  // symlinked baseline rather than a new rollout
  std::string error;
  double seconds = 0.0;
};

struct SweepResult {
  std::string sweep;
  std::vector<RunOutcome> settings;  // in catalogue order
  bool ok() const;
};

// Simulates one rollout into `dir`.
RolloutSummary run_release(const Config& config, const std::filesystem::path& dir,
                           const ReleaseWriterOptions& writer = {});

// Writes `out_root/<sweep>/<label>/` per setting. A failing setting is
// reported and the others still run.
SweepResult run_sweep(const SweepSpec& sweep, const Config& base, const std::filesystem::path& out_root,
                      const BatchOptions& options = {});

// Runs `count` tasks on up to `jobs` threads; task exceptions are the
// caller's responsibility.
void parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)>& task);
unsigned default_jobs();

// ---- Latin hypercube ---------------------------------------------------------

struct LhsInterval {
  std::string key;  // config override path
  double lo = 0.0;
  double hi = 0.0;
};

// Demand-side intervals: the shared AR coefficient plus the two height scales.
std::vector<LhsInterval> baseline_uq_intervals();

struct LhsDesign {
  std::int64_t samples = 0;
  std::uint64_t seed = 0;
  std::vector<LhsInterval> intervals;
  std::vector<std::vector<double>> unit;    // [sample][dim] in (0, 1)
  std::vector<std::vector<double>> values;  // mapped onto the intervals

  std::vector<std::string> patch(std::size_t sample) const;
};

// Stratum midpoints, independently permuted per dimension.
LhsDesign lhs_sample(std::int64_t samples, const std::vector<LhsInterval>& intervals, std::uint64_t seed);

struct EnsembleResult {
  std::vector<RunOutcome> members;
  std::filesystem::path envelope;
  std::int64_t envelope_rows = 0;
  std::int64_t members_used = 0;
  bool ok() const;
};

// K rollouts under `out_root/member_XX`, the design under `design.csv` and
// the pointwise demand envelope under `envelope.csv` (day,item,min,median,max).
EnsembleResult run_uq_ensemble(const LhsDesign& design, const Config& base, const std::filesystem::path& out_root,
                               const BatchOptions& options = {});

// Streams the envelope over the given member releases.
std::int64_t write_envelope(const std::vector<std::filesystem::path>& members, const std::filesystem::path& out);

// ---- MASE --------------------------------------------------------------------

// Realized demand, T x C row-major.
struct DemandMatrix {
  std::int64_t horizon = 0;
  std::vector<std::string> items;
  std::vector<double> values;
  double at(std::int64_t t, std::size_t i) const { return values[static_cast<std::size_t>(t) * items.size() + i]; }
};
DemandMatrix load_demand(const std::filesystem::path& release_dir);

struct ForecastFile {
  std::int64_t context = 512;
  std::int64_t horizon = 30;
  std::int64_t stride = 30;
  std::string frequency = "day";
  // (window start, item) -> forecasts for steps t_w .. t_w + horizon - 1.
  std::map<std::pair<std::int64_t, std::string>, std::vector<double>> windows;
};

// A `# key=value` header block followed by window_start,item,step,value rows
// with step counted from 1.
ForecastFile read_forecasts(const std::filesystem::path& path);
void write_forecasts(const ForecastFile& file, const std::filesystem::path& path);

std::int64_t seasonal_period(const std::string& frequency);

// Window starts over the final `test_fraction` of the horizon, `stride` apart,
// each leaving room for `max_horizon` steps.
std::vector<std::int64_t> evaluation_windows(std::int64_t horizon, double test_fraction = 0.15,
                                             std::int64_t stride = 30, std::int64_t max_horizon = 30);

// Repeats the value `m` steps back for every forecast step.
ForecastFile seasonal_naive(const DemandMatrix& actuals, const std::vector<std::int64_t>& starts,
                            std::int64_t context, std::int64_t horizon, std::int64_t stride, const std::string& frequency);

struct MaseScore {
  std::int64_t horizon = 0;
  double mase = 0.0;  // mean over windows and items
  std::int64_t entries = 0;
  std::int64_t excluded = 0;  // zero in-context seasonal error
};

// Scores the first `h` steps of every window; h = 0 uses the file's horizon.
MaseScore mase(const ForecastFile& forecasts, const DemandMatrix& actuals, std::int64_t h = 0,
               std::optional<std::int64_t> season = std::nullopt);

// Single-series form: context, then actuals and forecasts over the horizon.
std::optional<double> mase_entry(const std::vector<double>& context, const std::vector<double>& actuals,
                                 const std::vector<double>& forecast, std::int64_t season);

double geometric_mean(const std::vector<double>& values);

}  // namespace echelon
