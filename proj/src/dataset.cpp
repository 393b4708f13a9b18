#include "echelon/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "echelon/config.hpp"
#include "echelon/hash.hpp"

namespace echelon {

namespace fs = std::filesystem;

std::vector<std::string> release_files::required() {
  return {kDaily, kShipments, kInventory, kBacklog, kInTransit, kSummary, kSignals, kSignalsCols};
}

// ---- CSV output -------------------------------------------------------------

namespace {
constexpr std::size_t kFlushBytes = 1 << 20;
}

CsvOut::CsvOut(const fs::path& path) : path_(path) {
  file_ = std::fopen(path.c_str(), "wb");
  if (!file_) throw DatasetError("cannot create " + path.string() + ": " + std::strerror(errno));
  buf_.reserve(kFlushBytes + 4096);
}

CsvOut::~CsvOut() {
  if (file_) std::fclose(file_);
}

CsvOut::CsvOut(CsvOut&& other) noexcept { *this = std::move(other); }

CsvOut& CsvOut::operator=(CsvOut&& other) noexcept {
  if (this == &other) return *this;
  if (file_) std::fclose(file_);
  path_ = std::move(other.path_);
  file_ = std::exchange(other.file_, nullptr);
  buf_ = std::move(other.buf_);
  rows_ = other.rows_;
  return *this;
}

CsvOut& CsvOut::integer(std::int64_t v) {
  char tmp[24];
  const auto res = std::to_chars(tmp, tmp + sizeof tmp, v);
  buf_.append(tmp, res.ptr);
  return *this;
}

void CsvOut::end_row() {
  buf_.push_back('\n');
  ++rows_;
  if (buf_.size() >= kFlushBytes) flush();
}

void CsvOut::flush() {
  if (buf_.empty()) return;
  if (!file_) throw DatasetError("write to closed file " + path_.string());
  if (std::fwrite(buf_.data(), 1, buf_.size(), file_) != buf_.size()) {
    throw DatasetError("write failed for " + path_.string() + ": " + std::strerror(errno));
  }
  buf_.clear();
}

void CsvOut::close() {
  if (!file_) return;
  flush();
  const int rc = std::fclose(file_);
  file_ = nullptr;
  if (rc != 0) throw DatasetError("close failed for " + path_.string() + ": " + std::strerror(errno));
}

// ---- formatting ---------------------------------------------------------------

std::string format_path_nodes(const ResolvedPath& path, const std::vector<std::string>& node_ids) {
  std::string s = "[";
  for (std::size_t k = 0; k < path.nodes.size(); ++k) {
    if (k) s += ", ";
    s += '\'';
    s += node_ids[path.nodes[k]];
    s += '\'';
  }
  s += ']';
  return s;
}

std::string format_edge_times(const ResolvedPath& path, const NetworkSpec& network) {
  std::string s = "[";
  for (std::size_t k = 0; k < path.edges.size(); ++k) {
    if (k) s += ", ";
    s += std::to_string(network.edges[path.edges[k]].transit);
    s += ".0";
  }
  s += ']';
  return s;
}

std::string format_fill_rate(std::int64_t served, std::int64_t total) {
  if (total == 0) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(served) / static_cast<double>(total));
  return buf;
}

// ---- npy --------------------------------------------------------------------

namespace {

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return __builtin_bswap64(v);
  }
}

}  // namespace

void write_npy(const fs::path& path, const std::vector<double>& values, std::int64_t rows, std::int64_t cols) {
  if (static_cast<std::int64_t>(values.size()) != rows * cols) throw DatasetError("npy shape mismatch");
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + std::to_string(rows) + ", " +
                       std::to_string(cols) + "), }";
  const std::size_t preamble = 10;
  const std::size_t total = ((preamble + header.size() + 1 + 63) / 64) * 64;
  header.append(total - preamble - header.size() - 1, ' ');
  header.push_back('\n');

  std::string bytes;
  bytes.reserve(total + values.size() * 8);
  bytes.append("\x93NUMPY", 6);
  bytes.push_back('\x01');
  bytes.push_back('\x00');
  const auto hlen = static_cast<std::uint16_t>(header.size());
  bytes.push_back(static_cast<char>(hlen & 0xff));
  bytes.push_back(static_cast<char>(hlen >> 8));
  bytes += header;
  for (const double v : values) {
    const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(v));
    bytes.append(reinterpret_cast<const char*>(&bits), 8);
  }
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw DatasetError("write failed for " + path.string());
}

NpyArray read_npy(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  char pre[10];
  in.read(pre, 10);
  if (!in || std::memcmp(pre, "\x93NUMPY", 6) != 0) throw DatasetError(path.string() + ": not an .npy file");
  if (pre[6] != 1) throw DatasetError(path.string() + ": unsupported .npy version");
  const std::size_t hlen = static_cast<unsigned char>(pre[8]) | (static_cast<unsigned char>(pre[9]) << 8);
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  if (header.find("'descr': '<f8'") == std::string::npos) throw DatasetError(path.string() + ": dtype is not <f8");
  if (header.find("'fortran_order': False") == std::string::npos) {
    throw DatasetError(path.string() + ": Fortran order not supported");
  }
  const auto open = header.find("'shape': (");
  if (open == std::string::npos) throw DatasetError(path.string() + ": missing shape");
  NpyArray a;
  if (std::sscanf(header.c_str() + open, "'shape': (%ld, %ld)", &a.rows, &a.cols) != 2) {
    throw DatasetError(path.string() + ": shape is not two-dimensional");
  }
  a.values.resize(static_cast<std::size_t>(a.rows * a.cols));
  for (auto& v : a.values) {
    std::uint64_t bits = 0;
    in.read(reinterpret_cast<char*>(&bits), 8);
    v = std::bit_cast<double>(to_little(bits));
  }
  if (!in) throw DatasetError(path.string() + ": truncated data");
  if (in.peek() != std::char_traits<char>::eof()) throw DatasetError(path.string() + ": trailing bytes");
  return a;
}

// ---- writer -----------------------------------------------------------------

ReleaseWriter::ReleaseWriter(fs::path dir, ReleaseWriterOptions options)
    : dir_(std::move(dir)), options_(std::move(options)) {}

void ReleaseWriter::begin(const ReleaseLayout& layout, const NetworkSpec& network) {
  namespace rf = release_files;
  layout_ = layout;
  network_ = &network;
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw DatasetError("cannot create " + dir_.string() + ": " + ec.message());
  {
    std::ofstream marker(dir_ / rf::kPartialMarker);
    marker << "release incomplete\n";
    if (!marker) throw DatasetError("cannot write to " + dir_.string());
  }
  fs::remove(dir_ / rf::kManifest, ec);
  if (!options_.source_orders) fs::remove(dir_ / rf::kSourceOrders, ec);

  daily_ = CsvOut(dir_ / rf::kDaily);
  shipments_ = CsvOut(dir_ / rf::kShipments);
  inventory_ = CsvOut(dir_ / rf::kInventory);
  backlog_ = CsvOut(dir_ / rf::kBacklog);
  in_transit_ = CsvOut(dir_ / rf::kInTransit);
  daily_.text(rf::kDailyHeader).ch('\n');
  shipments_.text(rf::kShipmentsHeader).ch('\n');
  inventory_.text(rf::kInventoryHeader).ch('\n');
  backlog_.text(rf::kBacklogHeader).ch('\n');
  in_transit_.text(rf::kInTransitHeader).ch('\n');
  if (options_.source_orders) {
    source_orders_ = CsvOut(dir_ / rf::kSourceOrders);
    source_orders_.text(rf::kSourceOrdersHeader).ch('\n');
  }
  const std::size_t C = layout_.item_count();
  total_demand_.assign(C, 0);
  total_served_.assign(C, 0);
  total_backlog_.assign(C, 0);
  steps_ = 0;
  begun_ = true;
}

void ReleaseWriter::write_step(const StepObservation& o) {
  if (!begun_) throw DatasetError("release writer used before begin");
  const std::size_t N = layout_.node_count(), C = layout_.item_count();
  const std::size_t d = layout_.destination;
  const auto& items = layout_.items;
  const auto& nodes = layout_.nodes;
  for (std::size_t i = 0; i < C; ++i) {
    daily_.integer(o.t).ch(',').text(items[i]).ch(',').integer(o.demand[i]).ch(',').integer(o.served[i]).ch(',');
    daily_.integer(o.new_backlog[i]).ch(',').integer(o.on_hand_before_ship[i]).ch(',');
    daily_.integer(o.backlog_before_ship[i]).end_row();
    total_demand_[i] += o.demand[i];
    total_served_[i] += o.served[i];
    total_backlog_[i] += o.new_backlog[i];
  }
  for (const auto& s : o.shipments) {
    if (!s.path) throw DatasetError("shipment without a resolved path");
    shipments_.integer(s.day).ch(',').integer(s.arrival_day).ch(',').text(nodes[s.from]).ch(',');
    shipments_.text(nodes[s.to]).ch(',').text(items[s.item]).ch(',').integer(s.units).ch(',');
    shipments_.ch('"').text(format_path_nodes(*s.path, nodes)).text("\",\"");
    shipments_.text(format_edge_times(*s.path, *network_)).ch('"').end_row();
  }
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t i = 0; i < C; ++i) {
      inventory_.integer(o.t).ch(',').text(nodes[n]).ch(',').text(items[i]).ch(',');
      inventory_.integer(o.on_hand[n * C + i]).end_row();
      backlog_.integer(o.t).ch(',').text(nodes[n]).ch(',').text(items[i]).ch(',');
      backlog_.integer(o.backlog[n * C + i]).end_row();
    }
  }
  for (std::size_t i = 0; i < C; ++i) {
    in_transit_.integer(o.t).ch(',').text(nodes[d]).ch(',').text(items[i]).ch(',');
    in_transit_.integer(o.dest_in_transit[i]).end_row();
  }
  if (options_.source_orders) {
    for (const auto& so : o.source_orders) {
      source_orders_.integer(so.day).ch(',').integer(so.arrival_day).ch(',').text(nodes[so.node]).ch(',');
      source_orders_.text(items[so.item]).ch(',').integer(so.units).end_row();
    }
  }
  ++steps_;
}

void ReleaseWriter::finish(const std::vector<double>& intensity, std::int64_t horizon) {
  namespace rf = release_files;
  const std::size_t C = layout_.item_count();
  CsvOut summary(dir_ / rf::kSummary);
  summary.text(rf::kSummaryHeader).ch('\n');
  for (std::size_t i = 0; i < C; ++i) {
    summary.text(layout_.items[i]).ch(',').integer(total_demand_[i]).ch(',').integer(total_served_[i]).ch(',');
    summary.integer(total_backlog_[i]).ch(',').text(format_fill_rate(total_served_[i], total_demand_[i])).end_row();
  }
  summary.close();
  write_npy(dir_ / rf::kSignals, intensity, horizon, static_cast<std::int64_t>(C));
  {
    std::string line;
    for (std::size_t i = 0; i < C; ++i) line += (i ? "," : "") + layout_.items[i];
    std::ofstream cols(dir_ / rf::kSignalsCols, std::ios::binary);
    cols << line << '\n';
    if (!cols) throw DatasetError("write failed for " + (dir_ / rf::kSignalsCols).string());
  }
  const std::int64_t ship_rows = shipments_.rows();
  const std::int64_t source_rows = source_orders_.rows();
  daily_.close();
  shipments_.close();
  inventory_.close();
  backlog_.close();
  in_transit_.close();
  if (options_.source_orders) source_orders_.close();

  if (options_.manifest) {
    nlohmann::ordered_json m;
    m["format"] = "echelon-release";
    m["engine_version"] = kEngineVersion;
    m["extensions"] = options_.source_orders ? std::vector<std::string>{rf::kSourceOrders, rf::kManifest}
                                             : std::vector<std::string>{rf::kManifest};
    m["horizon"] = horizon;
    m["items"] = C;
    m["nodes"] = layout_.nodes;
    m["rows"] = {{"shipments", ship_rows}};
    if (options_.source_orders) m["rows"]["source_orders"] = source_rows;
    auto files = rf::required();
    if (options_.source_orders) files.push_back(rf::kSourceOrders);
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      m["files"][f] = {{"bytes", fs::file_size(dir_ / f)}, {"sha256", sha256_file((dir_ / f).string())}};
    }
    m["config"] = options_.config_yaml;
    std::ofstream out(dir_ / rf::kManifest, std::ios::binary);
    out << m.dump(2) << '\n';
    if (!out) throw DatasetError("write failed for manifest");
  }
  std::error_code ec;
  fs::remove(dir_ / rf::kPartialMarker, ec);
  begun_ = false;
}

ReleaseSink::ReleaseSink(fs::path dir, ReleaseWriterOptions options)
    : dir_(std::move(dir)), options_(std::move(options)) {}

void ReleaseSink::begin(const Engine& engine) {
  ReleaseWriterOptions options = options_;
  if (options.config_yaml.empty()) options.config_yaml = to_yaml(engine.config());
  writer_.emplace(dir_, std::move(options));
  writer_->begin(ReleaseLayout::from(engine.network(), engine.item_ids()), engine.network());
}

void ReleaseSink::on_step(const Engine& engine, const StepRecord& record) {
  observe_engine_step(engine, record, obs_);
  writer_->write_step(obs_);
}

void ReleaseSink::finish(const Engine& engine, const RolloutSummary&) {
  writer_->finish(engine.tensor().values(), engine.horizon());
}

// ---- reader -----------------------------------------------------------------

class ReleaseReader::LineReader {
 public:
  LineReader(const fs::path& path, std::string_view expected_header) : path_(path), name_(path.filename().string()) {
    file_ = std::fopen(path.c_str(), "rb");
    if (!file_) throw DatasetError("cannot open " + path.string());
    std::setvbuf(file_, nullptr, _IOFBF, 1 << 20);
    if (!advance()) throw DatasetError(name_ + ": empty file");
    if (line_ != expected_header) {
      throw DatasetError(name_ + ":1: header '" + line_ + "' does not match '" + std::string(expected_header) + "'");
    }
    advance();
  }
  ~LineReader() {
    std::free(raw_);
    if (file_) std::fclose(file_);
  }

  bool has() const { return has_; }
  const std::vector<std::string_view>& fields() const { return fields_; }
  std::int64_t line_no() const { return line_no_; }
  std::int64_t data_rows() const { return rows_; }
  const std::string& name() const { return name_; }
  std::string where() const { return name_ + ":" + std::to_string(line_no_); }

  // Moves to the next data line; false at end of file.
  bool advance() {
    const ssize_t n = ::getline(&raw_, &cap_, file_);
    if (n < 0) {
      has_ = false;
      return false;
    }
    ++line_no_;
    std::size_t len = static_cast<std::size_t>(n);
    if (len && raw_[len - 1] == '\n') --len;
    if (len && raw_[len - 1] == '\r') throw DatasetError(where() + ": CRLF line ending");
    line_.assign(raw_, len);
    if (line_no_ > 1) ++rows_;
    split();
    has_ = true;
    return true;
  }

  std::int64_t integer(std::size_t k) const {
    const auto f = field(k);
    std::int64_t v = 0;
    const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
    if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
      throw DatasetError(where() + ": column " + std::to_string(k + 1) + " is not an integer: '" + std::string(f) +
                         "'");
    }
    return v;
  }
  std::string_view field(std::size_t k) const {
    if (k >= fields_.size()) throw DatasetError(where() + ": missing column " + std::to_string(k + 1));
    return fields_[k];
  }
  void expect_columns(std::size_t n) const {
    if (fields_.size() != n) {
      throw DatasetError(where() + ": expected " + std::to_string(n) + " columns, found " +
                         std::to_string(fields_.size()));
    }
  }

 private:
  void split() {
    fields_.clear();
    std::size_t start = 0;
    bool quoted = false;
    for (std::size_t k = 0; k <= line_.size(); ++k) {
      if (k < line_.size() && line_[k] == '"') {
        quoted = !quoted;
        continue;
      }
      if (k == line_.size() || (!quoted && line_[k] == ',')) {
        std::string_view f(line_.data() + start, k - start);
        if (f.size() >= 2 && f.front() == '"' && f.back() == '"') f = f.substr(1, f.size() - 2);
        fields_.push_back(f);
        start = k + 1;
      }
    }
    if (quoted) throw DatasetError(where() + ": unterminated quote");
  }

  fs::path path_;
  std::string name_;
  std::FILE* file_ = nullptr;
  char* raw_ = nullptr;
  std::size_t cap_ = 0;
  std::string line_;
  std::vector<std::string_view> fields_;
  std::int64_t line_no_ = 0;
  std::int64_t rows_ = 0;
  bool has_ = false;
};

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_list(std::string_view text, std::string_view sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto k = text.find(sep, start);
    out.emplace_back(text.substr(start, k == std::string_view::npos ? std::string_view::npos : k - start));
    if (k == std::string_view::npos) break;
    start = k + sep.size();
  }
  return out;
}

}  // namespace

ReleaseReader::~ReleaseReader() = default;

ReleaseReader::ReleaseReader(const fs::path& dir, const NetworkSpec* hint) : dir_(dir) {
  namespace rf = release_files;
  if (!fs::is_directory(dir)) throw DatasetError("release directory not found: " + dir.string());
  for (const auto& f : rf::required()) {
    if (!fs::exists(dir / f)) throw DatasetError("release is missing " + f + " (" + dir.string() + ")");
  }
  if (fs::exists(dir / rf::kPartialMarker)) {
    throw DatasetError("release at " + dir.string() + " is incomplete (" + rf::kPartialMarker + " present)");
  }

  std::string cols = read_text(dir / rf::kSignalsCols);
  if (cols.empty() || cols.back() != '\n' || std::count(cols.begin(), cols.end(), '\n') != 1) {
    throw DatasetError(std::string(rf::kSignalsCols) + ": expected exactly one line");
  }
  cols.pop_back();
  layout_.items = split_list(cols, ",");
  for (const auto& id : layout_.items) {
    if (id.empty()) throw DatasetError(std::string(rf::kSignalsCols) + ": empty item identifier");
  }
  const std::size_t C = layout_.items.size();

  intensity_ = read_npy(dir / rf::kSignals);
  if (intensity_.cols != static_cast<std::int64_t>(C)) {
    throw DatasetError(std::string(rf::kSignals) + ": " + std::to_string(intensity_.cols) + " columns but " +
                       rf::kSignalsCols + " lists " + std::to_string(C) + " items");
  }
  horizon_ = intensity_.rows;

  {
    LineReader first(dir / rf::kInventory, rf::kInventoryHeader);
    while (first.has() && first.integer(0) == 0) {
      first.expect_columns(4);
      const std::string node(first.field(1));
      if (std::find(layout_.nodes.begin(), layout_.nodes.end(), node) == layout_.nodes.end()) {
        layout_.nodes.push_back(node);
      }
      first.advance();
    }
    if (layout_.nodes.empty()) throw DatasetError(std::string(rf::kInventory) + ": no rows for day 0");
  }
  {
    LineReader first(dir / rf::kInTransit, rf::kInTransitHeader);
    if (!first.has()) throw DatasetError(std::string(rf::kInTransit) + ": no rows");
    const std::string dest(first.field(1));
    const auto it = std::find(layout_.nodes.begin(), layout_.nodes.end(), dest);
    if (it == layout_.nodes.end()) throw DatasetError(first.where() + ": unknown node " + dest);
    layout_.destination = static_cast<std::size_t>(it - layout_.nodes.begin());
  }

  if (fs::exists(dir / rf::kManifest)) {
    try {
      const auto m = nlohmann::json::parse(read_text(dir / rf::kManifest));
      config_yaml_ = m.value("config", "");
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(std::string(rf::kManifest) + ": " + e.what());
    }
  }
  has_source_orders_ = fs::exists(dir / rf::kSourceOrders);

  NetworkSpec roles_from;
  if (hint) {
    roles_from = *hint;
  } else if (!config_yaml_.empty()) {
    roles_from = parse_config(config_yaml_).network;
  } else {
    roles_from = baseline_network();
  }
  for (std::size_t n = 0; n < layout_.nodes.size(); ++n) {
    const auto found = roles_from.find_node(layout_.nodes[n]);
    if (found) {
      layout_.roles.push_back(roles_from.nodes[*found].role);
      layout_.tiers.push_back(roles_from.nodes[*found].tier);
    } else {
      layout_.roles.push_back(n == layout_.destination ? NodeRole::kDestination : NodeRole::kIntermediate);
      layout_.tiers.push_back("unknown");
    }
  }
  for (const auto& id : layout_.nodes) path_network_.nodes.push_back({id, NodeRole::kIntermediate, "", {}});

  {
    LineReader s(dir / rf::kSummary, rf::kSummaryHeader);
    while (s.has()) {
      s.expect_columns(5);
      summary_.push_back({std::string(s.field(0)), s.integer(1), s.integer(2), s.integer(3), std::string(s.field(4))});
      s.advance();
    }
    if (summary_.size() != C) {
      throw DatasetError(std::string(rf::kSummary) + ": expected C = " + std::to_string(C) + " rows, found " +
                         std::to_string(summary_.size()));
    }
  }

  daily_ = std::make_unique<LineReader>(dir / rf::kDaily, rf::kDailyHeader);
  shipments_ = std::make_unique<LineReader>(dir / rf::kShipments, rf::kShipmentsHeader);
  inventory_ = std::make_unique<LineReader>(dir / rf::kInventory, rf::kInventoryHeader);
  backlog_ = std::make_unique<LineReader>(dir / rf::kBacklog, rf::kBacklogHeader);
  in_transit_ = std::make_unique<LineReader>(dir / rf::kInTransit, rf::kInTransitHeader);
  if (has_source_orders_) {
    source_orders_ = std::make_unique<LineReader>(dir / rf::kSourceOrders, rf::kSourceOrdersHeader);
  }
  total_demand_.assign(C, 0);
  total_served_.assign(C, 0);
  total_backlog_.assign(C, 0);
}

const ResolvedPath* ReleaseReader::intern_path(const std::string& nodes_text, const std::string& times_text,
                                               const std::string& where) {
  const std::string key = nodes_text + "|" + times_text;
  if (auto it = path_index_.find(key); it != path_index_.end()) return it->second;
  if (nodes_text.size() < 2 || nodes_text.front() != '[' || nodes_text.back() != ']' || times_text.size() < 2 ||
      times_text.front() != '[' || times_text.back() != ']') {
    throw DatasetError(where + ": malformed path list");
  }
  const auto names = split_list(std::string_view(nodes_text).substr(1, nodes_text.size() - 2), ", ");
  const auto times = split_list(std::string_view(times_text).substr(1, times_text.size() - 2), ", ");
  if (names.size() < 2 || times.size() != names.size() - 1) throw DatasetError(where + ": path length mismatch");
  ResolvedPath p;
  for (const auto& quoted : names) {
    if (quoted.size() < 2 || quoted.front() != '\'' || quoted.back() != '\'') {
      throw DatasetError(where + ": malformed node in path_nodes");
    }
    const std::string id = quoted.substr(1, quoted.size() - 2);
    const auto it = std::find(layout_.nodes.begin(), layout_.nodes.end(), id);
    if (it == layout_.nodes.end()) throw DatasetError(where + ": unknown node " + id + " in path_nodes");
    p.nodes.push_back(static_cast<std::size_t>(it - layout_.nodes.begin()));
  }
  for (std::size_t k = 0; k < times.size(); ++k) {
    const auto& tt = times[k];
    if (tt.size() < 3 || tt.substr(tt.size() - 2) != ".0") throw DatasetError(where + ": edge time '" + tt + "'");
    std::int64_t tau = 0;
    const auto res = std::from_chars(tt.data(), tt.data() + tt.size() - 2, tau);
    if (res.ec != std::errc() || res.ptr != tt.data() + tt.size() - 2 || tau < 1) {
      throw DatasetError(where + ": edge time '" + tt + "'");
    }
    const std::string& from = layout_.nodes[p.nodes[k]];
    const std::string& to = layout_.nodes[p.nodes[k + 1]];
    auto e = std::find_if(path_network_.edges.begin(), path_network_.edges.end(),
                          [&](const EdgeSpec& x) { return x.from == from && x.to == to; });
    if (e == path_network_.edges.end()) {
      path_network_.edges.push_back({from, to, tau, 1.0, 1, false, 0.0});
      e = std::prev(path_network_.edges.end());
    } else if (e->transit != tau) {
      throw DatasetError(where + ": inconsistent transit time for " + from + "->" + to);
    }
    p.edges.push_back(static_cast<std::size_t>(e - path_network_.edges.begin()));
    p.transit += tau;
  }
  paths_.push_back(std::move(p));
  path_index_[key] = &paths_.back();
  return &paths_.back();
}

bool ReleaseReader::next(StepObservation& o) {
  namespace rf = release_files;
  const std::size_t N = layout_.node_count(), C = layout_.item_count();
  const std::size_t d = layout_.destination;
  const auto row_count_error = [&](const LineReader& r, std::int64_t expected, const char* formula) {
    return DatasetError(r.name() + ": row count mismatch, expected " + std::string(formula) + " = " +
                        std::to_string(expected) + " rows");
  };

  if (t_ == horizon_) {
    const std::int64_t T = horizon_;
    const auto Ti = static_cast<std::int64_t>(C) * T;
    const auto Th = static_cast<std::int64_t>(N * C) * T;
    if (daily_->has()) throw row_count_error(*daily_, Ti, "T*C");
    if (inventory_->has()) throw row_count_error(*inventory_, Th, "T*|N|*C");
    if (backlog_->has()) throw row_count_error(*backlog_, Th, "T*|N|*C");
    if (in_transit_->has()) throw row_count_error(*in_transit_, Ti, "T*C");
    if (shipments_->has()) throw DatasetError(shipments_->where() + ": shipment dated after the horizon");
    if (source_orders_ && source_orders_->has()) {
      throw DatasetError(source_orders_->where() + ": source order dated after the horizon");
    }
    for (std::size_t i = 0; i < C; ++i) {
      const auto& s = summary_[i];
      if (s.item != layout_.items[i] || s.total_demand != total_demand_[i] || s.served != total_served_[i] ||
          s.new_backlog != total_backlog_[i] || s.fill_rate != format_fill_rate(total_served_[i], total_demand_[i])) {
        throw DatasetError(std::string(rf::kSummary) + ":" + std::to_string(i + 2) + ": disagrees with " +
                           rf::kDaily + " totals for " + layout_.items[i]);
      }
    }
    ++t_;
    return false;
  }
  if (t_ > horizon_) return false;

  o.resize(N, C);
  o.t = t_;
  o.has_source_orders = has_source_orders_;

  const auto expect_key = [&](LineReader& r, std::size_t node_col, std::optional<std::size_t> n, std::size_t i,
                              std::int64_t expected_total, const char* formula) {
    if (!r.has()) throw row_count_error(r, expected_total, formula);
    if (r.integer(0) != t_) {
      throw DatasetError(r.where() + ": expected day " + std::to_string(t_) + ", found " + std::string(r.field(0)));
    }
    if (n && r.field(node_col) != layout_.nodes[*n]) {
      throw DatasetError(r.where() + ": expected node " + layout_.nodes[*n] + ", found " + std::string(r.field(node_col)));
    }
    const std::size_t item_col = n ? node_col + 1 : node_col;
    if (r.field(item_col) != layout_.items[i]) {
      throw DatasetError(r.where() + ": expected item " + layout_.items[i] + ", found " + std::string(r.field(item_col)));
    }
  };
  const auto Ti = static_cast<std::int64_t>(C) * horizon_;
  const auto Th = static_cast<std::int64_t>(N * C) * horizon_;

  for (std::size_t i = 0; i < C; ++i) {
    LineReader& r = *daily_;
    expect_key(r, 1, std::nullopt, i, Ti, "T*C");
    r.expect_columns(7);
    o.demand[i] = r.integer(2);
    o.served[i] = r.integer(3);
    o.new_backlog[i] = r.integer(4);
    o.on_hand_before_ship[i] = r.integer(5);
    o.backlog_before_ship[i] = r.integer(6);
    total_demand_[i] += o.demand[i];
    total_served_[i] += o.served[i];
    total_backlog_[i] += o.new_backlog[i];
    r.advance();
  }
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t i = 0; i < C; ++i) {
      expect_key(*inventory_, 1, n, i, Th, "T*|N|*C");
      inventory_->expect_columns(4);
      o.on_hand[n * C + i] = inventory_->integer(3);
      inventory_->advance();
      expect_key(*backlog_, 1, n, i, Th, "T*|N|*C");
      backlog_->expect_columns(4);
      o.backlog[n * C + i] = backlog_->integer(3);
      backlog_->advance();
    }
  }
  for (std::size_t i = 0; i < C; ++i) {
    expect_key(*in_transit_, 1, d, i, Ti, "T*C");
    in_transit_->expect_columns(4);
    o.dest_in_transit[i] = in_transit_->integer(3);
    in_transit_->advance();
  }

  const auto node_of = [&](const LineReader& r, std::size_t k) {
    const auto f = r.field(k);
    const auto it = std::find(layout_.nodes.begin(), layout_.nodes.end(), f);
    if (it == layout_.nodes.end()) throw DatasetError(r.where() + ": unknown node " + std::string(f));
    return static_cast<std::size_t>(it - layout_.nodes.begin());
  };
  const auto item_of = [&](const LineReader& r, std::size_t k) {
    const auto f = r.field(k);
    const auto it = std::find(layout_.items.begin(), layout_.items.end(), f);
    if (it == layout_.items.end()) throw DatasetError(r.where() + ": unknown item " + std::string(f));
    return static_cast<std::size_t>(it - layout_.items.begin());
  };

  while (shipments_->has()) {
    LineReader& r = *shipments_;
    const std::int64_t day = r.integer(0);
    if (day < t_) throw DatasetError(r.where() + ": shipments are not ordered by day");
    if (day > t_) break;
    r.expect_columns(8);
    DispatchRecord s;
    s.day = day;
    s.arrival_day = r.integer(1);
    s.from = node_of(r, 2);
    s.to = node_of(r, 3);
    s.item = item_of(r, 4);
    s.units = r.integer(5);
    s.path = intern_path(std::string(r.field(6)), std::string(r.field(7)), r.where());
    if (s.path->nodes.front() != s.from || s.path->nodes.back() != s.to) {
      throw DatasetError(r.where() + ": path endpoints do not match from/to");
    }
    if (s.units < 1) throw DatasetError(r.where() + ": units must be positive");
    if (s.arrival_day != day + s.path->transit) {
      throw DatasetError(r.where() + ": arrival_day is not day + sum of edge times");
    }
    o.shipments.push_back(s);
    r.advance();
  }
  if (source_orders_) {
    while (source_orders_->has()) {
      LineReader& r = *source_orders_;
      const std::int64_t day = r.integer(0);
      if (day < t_) throw DatasetError(r.where() + ": source orders are not ordered by day");
      if (day > t_) break;
      r.expect_columns(5);
      o.source_orders.push_back({day, r.integer(1), node_of(r, 2), item_of(r, 3), r.integer(4)});
      r.advance();
    }
  }
  ++t_;
  return true;
}

ReleaseAudit validate_release(const fs::path& dir, const NetworkSpec* hint, std::optional<std::uint64_t> seed) {
  ReleaseReader reader(dir, hint);
  ReleaseAudit audit;
  audit.layout = reader.layout();
  std::optional<TwinState> initial;
  if (!reader.config_yaml().empty()) {
    Config c = parse_config(reader.config_yaml());
    if (seed) c.structural.seed = *seed;
    initial = Engine(c).initial_state();
    if (initial->nodes != audit.layout.node_count() || initial->items != audit.layout.item_count()) {
      throw DatasetError("config echo in the manifest does not match the release shape");
    }
    audit.initial_state_known = true;
  }
  ConservationAuditor auditor(audit.layout, initial ? &*initial : nullptr);
  StepObservation obs;
  while (reader.next(obs)) auditor.observe(obs);
  audit.report = auditor.report();
  if (!audit.initial_state_known) {
    audit.report.notes.push_back("no config echo in the release; the first step only seeds the comparison");
  }
  return audit;
}

ReleaseBullwhip bullwhip_release(const fs::path& dir, BullwhipOptions options, const NetworkSpec* hint) {
  ReleaseReader reader(dir, hint);
  BullwhipAccumulator acc(reader.layout(), options);
  StepObservation obs;
  while (reader.next(obs)) acc.observe(obs);
  return {reader.layout(), acc.table()};
}

void copy_release(const fs::path& from, const fs::path& to) {
  ReleaseReader reader(from);
  ReleaseWriterOptions options;
  options.source_orders = reader.has_source_orders();
  options.manifest = fs::exists(from / release_files::kManifest);
  options.config_yaml = reader.config_yaml();
  ReleaseWriter writer(to, options);
  writer.begin(reader.layout(), reader.path_network());
  StepObservation obs;
  while (reader.next(obs)) writer.write_step(obs);
  writer.finish(reader.intensity().values, reader.horizon());
}

}  // namespace echelon
