#pragma once

#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "echelon/engine.hpp"
#include "echelon/validate.hpp"

namespace echelon {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace release_files {
inline constexpr const char* kDaily = "daily_records.csv";
inline constexpr const char* kShipments = "shipments.csv";
inline constexpr const char* kInventory = "inventory_history.csv";
inline constexpr const char* kBacklog = "backlog_history.csv";
inline constexpr const char* kInTransit = "intransit_history.csv";
inline constexpr const char* kSummary = "service_summary.csv";
inline constexpr const char* kSignals = "demand_signals.npy";
inline constexpr const char* kSignalsCols = "demand_signals_cols.txt";
// Extensions, not part of the eight-file layout.
inline constexpr const char* kSourceOrders = "source_orders.csv";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kPartialMarker = "_PARTIAL";

inline constexpr const char* kDailyHeader =
    "day,item,demand,served_from_stock,new_backlog_today,dest_on_hand_end_before_ship,dest_backlog_end_before_ship";
inline constexpr const char* kShipmentsHeader = "day,arrival_day,from,to,item,units,path_nodes,edge_times";
inline constexpr const char* kInventoryHeader = "day,node,item,on_hand";
inline constexpr const char* kBacklogHeader = "day,node,item,backlog";
inline constexpr const char* kInTransitHeader = "day,node,item,in_transit";
inline constexpr const char* kSummaryHeader =
    "item,total_demand,served_from_stock,new_backlog_added,fill_rate_stock_only";
inline constexpr const char* kSourceOrdersHeader = "day,arrival_day,node,item,units";

std::vector<std::string> required();
}  // namespace release_files

inline constexpr const char* kEngineVersion = "0.1.0";

// Buffered CSV output. Errors surface as DatasetError naming the file.
class CsvOut {
 public:
  CsvOut() = default;
  explicit CsvOut(const std::filesystem::path& path);
  ~CsvOut();
  CsvOut(const CsvOut&) = delete;
  CsvOut& operator=(const CsvOut&) = delete;
  CsvOut(CsvOut&& other) noexcept;
  CsvOut& operator=(CsvOut&& other) noexcept;

  CsvOut& text(std::string_view s) {
    buf_.append(s);
    return *this;
  }
  CsvOut& ch(char c) {
    buf_.push_back(c);
    return *this;
  }
  CsvOut& integer(std::int64_t v);
  void end_row();
  void close();
  std::int64_t rows() const { return rows_; }

 private:
  void flush();

  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
  std::string buf_;
  std::int64_t rows_ = 0;
};

// "['A', 'B']" and "[1.0, 2.0]" list literals (without the CSV quotes).
std::string format_path_nodes(const ResolvedPath& path, const std::vector<std::string>& node_ids);
std::string format_edge_times(const ResolvedPath& path, const NetworkSpec& network);
std::string format_fill_rate(std::int64_t served, std::int64_t total);

// Standard .npy v1.0 little-endian float64, C order.
void write_npy(const std::filesystem::path& path, const std::vector<double>& values, std::int64_t rows,
               std::int64_t cols);
struct NpyArray {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> values;
};
NpyArray read_npy(const std::filesystem::path& path);

struct ReleaseWriterOptions {
  bool source_orders = true;
  bool manifest = true;
  std::string config_yaml;  // echoed into the manifest
};

// Streaming writer for one release directory. A `_PARTIAL` marker exists from
// `begin` until `finish` succeeds.
class ReleaseWriter {
 public:
  ReleaseWriter(std::filesystem::path dir, ReleaseWriterOptions options = {});

  // `network` supplies per-edge transit times for the edge_times column and
  // must outlive the writer.
  void begin(const ReleaseLayout& layout, const NetworkSpec& network);
  void write_step(const StepObservation& obs);
  // Writes the derived files; the intensity tensor is T x C, row-major.
  void finish(const std::vector<double>& intensity, std::int64_t horizon);

  const std::filesystem::path& dir() const { return dir_; }
  std::int64_t steps() const { return steps_; }

 private:
  std::filesystem::path dir_;
  ReleaseWriterOptions options_;
  ReleaseLayout layout_;
  const NetworkSpec* network_ = nullptr;
  CsvOut daily_, shipments_, inventory_, backlog_, in_transit_, source_orders_;
  std::vector<std::int64_t> total_demand_, total_served_, total_backlog_;
  std::int64_t steps_ = 0;
  bool begun_ = false;
};

// Adapts a ReleaseWriter to an engine rollout. An empty config echo defaults
// to the engine's resolved config.
class ReleaseSink : public RolloutSink {
 public:
  ReleaseSink(std::filesystem::path dir, ReleaseWriterOptions options = {});
  void begin(const Engine& engine) override;
  void on_step(const Engine& engine, const StepRecord& record) override;
  void finish(const Engine& engine, const RolloutSummary& summary) override;

 private:
  std::filesystem::path dir_;
  ReleaseWriterOptions options_;
  std::optional<ReleaseWriter> writer_;
  StepObservation obs_;
};

struct SummaryRow {
  std::string item;
  std::int64_t total_demand = 0;
  std::int64_t served = 0;
  std::int64_t new_backlog = 0;
  std::string fill_rate;
};

// Day-by-day reader for a release directory with schema, ordering and
// row-count validation. Errors name the file and line.
class ReleaseReader {
 public:
  // `hint` supplies node roles and tiers; without it the manifest's config
  // echo is used, then the baseline network.
  explicit ReleaseReader(const std::filesystem::path& dir, const NetworkSpec* hint = nullptr);
  ~ReleaseReader();

  const ReleaseLayout& layout() const { return layout_; }
  // Edges reconstructed from shipment paths (transit times only).
  const NetworkSpec& path_network() const { return path_network_; }
  std::int64_t horizon() const { return horizon_; }
  bool has_source_orders() const { return has_source_orders_; }
  const NpyArray& intensity() const { return intensity_; }
  const std::vector<SummaryRow>& summary() const { return summary_; }
  const std::string& config_yaml() const { return config_yaml_; }

  // Next step, or false after the last. Row counts are verified at the end.
  bool next(StepObservation& obs);

 private:
  class LineReader;
  const ResolvedPath* intern_path(const std::string& nodes_text, const std::string& times_text,
                                  const std::string& where);

  std::filesystem::path dir_;
  ReleaseLayout layout_;
  NetworkSpec path_network_;
  std::deque<ResolvedPath> paths_;
  std::map<std::string, const ResolvedPath*> path_index_;
  std::int64_t horizon_ = 0;
  std::int64_t t_ = 0;
  bool has_source_orders_ = false;
  NpyArray intensity_;
  std::vector<SummaryRow> summary_;
  std::string config_yaml_;
  std::unique_ptr<LineReader> daily_, shipments_, inventory_, backlog_, in_transit_, source_orders_;
  std::vector<std::int64_t> total_demand_, total_served_, total_backlog_;
};

// Audits a release directory. The initial state is rebuilt from the
// manifest's config echo when present (`seed` overrides its seed); without it
// the first step only seeds the comparison.
struct ReleaseAudit {
  ReleaseLayout layout;
  ConservationReport report;
  bool initial_state_known = false;
};
ReleaseAudit validate_release(const std::filesystem::path& dir, const NetworkSpec* hint = nullptr,
                              std::optional<std::uint64_t> seed = std::nullopt);

struct ReleaseBullwhip {
  ReleaseLayout layout;
  BullwhipTable table;
};
ReleaseBullwhip bullwhip_release(const std::filesystem::path& dir, BullwhipOptions options = {},
                                 const NetworkSpec* hint = nullptr);

// Reads a release and writes it again (canonical re-serialization).
void copy_release(const std::filesystem::path& from, const std::filesystem::path& to);

}  // namespace echelon
