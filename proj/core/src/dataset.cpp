#include "cellloc/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cellloc/error.hpp"
#include "csv.hpp"

namespace cellloc {

namespace {

constexpr std::string_view kRssiPrefix = "rssi_";

bool in_rssi_range(double v) {
  return std::isfinite(v) && v >= kMissingLinkDbm && v <= kMaxRssiDbm;
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

std::string row_error(std::size_t row, const std::string& what) {
  return what + " at row " + std::to_string(row);
}

}  // namespace

// ---------------------------------------------------------------------------
// MeasurementSet

MeasurementSet::MeasurementSet(std::string id,
                               std::vector<std::string> node_labels,
                               std::vector<RssiFrame> frames)
    : id_(std::move(id)),
      node_labels_(std::move(node_labels)),
      frames_(std::move(frames)) {
  if (node_labels_.empty()) {
    throw DataError("measurement set '" + id_ + "' declares no nodes");
  }
  std::unordered_set<std::string> seen;
  for (const auto& n : node_labels_) {
    if (n.empty() || !seen.insert(n).second) {
      throw DataError("measurement set '" + id_ +
                      "' has an empty or duplicate node name '" + n + "'");
    }
  }
  if (frames_.empty()) {
    throw DataError("measurement set '" + id_ + "' has no frames");
  }
  for (std::size_t i = 0; i < frames_.size(); ++i) {
    const auto& f = frames_[i];
    const std::size_t row = i + 1;
    if (f.rssi.size() != node_labels_.size()) {
      throw DataError(row_error(row, "rssi width " +
                                         std::to_string(f.rssi.size()) +
                                         " != node count " +
                                         std::to_string(node_labels_.size())));
    }
    for (double v : f.rssi) {
      if (!in_rssi_range(v)) throw DataError(row_error(row, "rssi out of range"));
    }
    if (f.label && (*f.label < 0 || *f.label >= kCellCount)) {
      throw DataError(row_error(row, "unknown label value"));
    }
    if (i > 0 && f.t != frames_[i - 1].t + 1) {
      throw DataError(row_error(row, "non-monotone or gapped t"));
    }
  }
}

bool MeasurementSet::fully_labeled() const noexcept {
  return std::all_of(frames_.begin(), frames_.end(),
                     [](const RssiFrame& f) { return f.label.has_value(); });
}

MeasurementSet MeasurementSet::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > frames_.size()) {
    throw ConfigError("invalid frame slice [" + std::to_string(begin) + ", " +
                      std::to_string(end) + ")");
  }
  return MeasurementSet(id_, node_labels_,
                        std::vector<RssiFrame>(frames_.begin() + begin,
                                               frames_.begin() + end));
}

// ---------------------------------------------------------------------------
// NodeMask

NodeMask::NodeMask(std::uint32_t bits, std::size_t node_count)
    : bits_(bits), node_count_(node_count) {
  if (node_count_ == 0 || node_count_ > kMaxMaskNodes) {
    throw ConfigError("node count " + std::to_string(node_count_) +
                      " outside [1, " + std::to_string(kMaxMaskNodes) + "]");
  }
  if (bits_ == 0) throw ConfigError("node mask must select at least one node");
  if (bits_ >= (std::uint32_t{1} << node_count_)) {
    throw ConfigError("node mask " + std::to_string(bits_) +
                      " exceeds node count " + std::to_string(node_count_));
  }
}

NodeMask NodeMask::full(std::size_t node_count) {
  if (node_count == 0 || node_count > kMaxMaskNodes) {
    throw ConfigError("node count " + std::to_string(node_count) +
                      " outside [1, " + std::to_string(kMaxMaskNodes) + "]");
  }
  return NodeMask((std::uint32_t{1} << node_count) - 1, node_count);
}

NodeMask NodeMask::from_names(const std::vector<std::string>& names,
                              const std::vector<std::string>& node_labels) {
  std::uint32_t bits = 0;
  for (const auto& name : names) {
    auto it = std::find(node_labels.begin(), node_labels.end(), name);
    if (it == node_labels.end()) {
      throw ConfigError("unknown node '" + name +
                        "'; valid names: " + join_names(node_labels));
    }
    bits |= std::uint32_t{1} << (it - node_labels.begin());
  }
  return NodeMask(bits, node_labels.size());
}

std::size_t NodeMask::popcount() const noexcept {
  return static_cast<std::size_t>(std::popcount(bits_));
}

std::vector<std::size_t> NodeMask::indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < node_count_; ++i) {
    if (contains(i)) out.push_back(i);
  }
  return out;
}

std::string NodeMask::describe(
    const std::vector<std::string>& node_labels) const {
  std::string out;
  for (std::size_t i : indices()) {
    if (!out.empty()) out += '+';
    out += i < node_labels.size() ? node_labels[i] : std::to_string(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits

std::string SplitPlan::describe() const {
  std::string out;
  for (const auto& id : train_ids) {
    if (!out.empty()) out += '+';
    out += id;
  }
  return out + '|' + val_id;
}

void validate_split(const SplitPlan& plan) {
  if (plan.train_ids.empty()) throw ConfigError("split has no training sets");
  std::unordered_set<std::string> seen;
  for (const auto& id : plan.train_ids) {
    if (!seen.insert(id).second) {
      throw ConfigError("training set '" + id + "' listed twice");
    }
  }
  if (seen.count(plan.val_id)) {
    throw ConfigError("validation set '" + plan.val_id +
                      "' is also a training set");
  }
}

std::vector<SplitPlan> enumerate_splits(const std::vector<std::string>& set_ids,
                                        std::size_t n_train) {
  const std::size_t n = set_ids.size();
  if (n_train == 0 || n_train >= n) {
    throw ConfigError("n_train must be in [1, " + std::to_string(n) +
                      "), got " + std::to_string(n_train));
  }
  {
    std::unordered_set<std::string> unique(set_ids.begin(), set_ids.end());
    if (unique.size() != n) throw ConfigError("duplicate set ids");
  }

  std::vector<SplitPlan> plans;
  // Walk n_train-combinations in lexicographic order.
  std::vector<std::size_t> combo(n_train);
  for (std::size_t i = 0; i < n_train; ++i) combo[i] = i;
  while (true) {
    std::vector<bool> used(n, false);
    SplitPlan base;
    for (std::size_t i : combo) {
      used[i] = true;
      base.train_ids.push_back(set_ids[i]);
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (used[v]) continue;
      SplitPlan p = base;
      p.val_id = set_ids[v];
      plans.push_back(std::move(p));
    }

    std::size_t k = n_train;
    while (k > 0 && combo[k - 1] == n - n_train + (k - 1)) --k;
    if (k == 0) break;
    ++combo[k - 1];
    for (std::size_t j = k; j < n_train; ++j) combo[j] = combo[j - 1] + 1;
  }
  return plans;
}

std::vector<NodeMask> enumerate_node_masks(std::size_t n_nodes) {
  if (n_nodes == 0 || n_nodes > kMaxMaskNodes) {
    throw ConfigError("cannot enumerate masks over " + std::to_string(n_nodes) +
                      " nodes");
  }
  const std::uint32_t end = std::uint32_t{1} << n_nodes;
  std::vector<NodeMask> out;
  out.reserve(end - 1);
  for (std::uint32_t b = 1; b < end; ++b) out.emplace_back(b, n_nodes);
  return out;
}

MeasurementSet select_nodes(const MeasurementSet& set, const NodeMask& mask) {
  if (mask.node_count() != set.node_count()) {
    throw ConfigError("mask is over " + std::to_string(mask.node_count()) +
                      " nodes but set '" + set.id() + "' has " +
                      std::to_string(set.node_count()));
  }
  const auto cols = mask.indices();
  std::vector<std::string> labels;
  labels.reserve(cols.size());
  for (std::size_t c : cols) labels.push_back(set.node_labels()[c]);

  std::vector<RssiFrame> frames;
  frames.reserve(set.size());
  for (const auto& f : set.frames()) {
    RssiFrame g{f.t, {}, f.label};
    g.rssi.reserve(cols.size());
    for (std::size_t c : cols) g.rssi.push_back(f.rssi[c]);
    frames.push_back(std::move(g));
  }
  return MeasurementSet(set.id(), std::move(labels), std::move(frames));
}

// ---------------------------------------------------------------------------
// CSV

std::string format_dbm(double dbm) {
  const long long tenths = std::llround(dbm * 10.0);
  if (tenths == 0) return "0";
  if (tenths % 10 == 0) return std::to_string(tenths / 10);
  const long long mag = tenths < 0 ? -tenths : tenths;
  std::string out = tenths < 0 ? "-" : "";
  out += std::to_string(mag / 10);
  out += '.';
  out += static_cast<char>('0' + mag % 10);
  return out;
}

MeasurementSet read_set(std::istream& in, std::string id) {
  std::string line;
  if (!csv::next_line(in, line)) {
    throw DataError("set '" + id + "': missing header row");
  }
  const auto header = csv::split(line);
  if (header.size() < 3 || header[0] != "t" || header[1] != "label") {
    throw DataError("set '" + id +
                    "': header must be t,label,rssi_<node>,...");
  }
  std::vector<std::string> nodes;
  for (std::size_t c = 2; c < header.size(); ++c) {
    const auto& h = header[c];
    if (h.size() <= kRssiPrefix.size() ||
        h.compare(0, kRssiPrefix.size(), kRssiPrefix) != 0) {
      throw DataError("set '" + id + "': header column '" + h +
                      "' is not rssi_<node>");
    }
    nodes.push_back(h.substr(kRssiPrefix.size()));
  }

  std::vector<RssiFrame> frames;
  std::size_t row = 0;
  while (csv::next_line(in, line)) {
    ++row;
    const auto cells = csv::split(line);
    if (cells.size() != header.size()) {
      throw DataError(row_error(row, "malformed row (expected " +
                                         std::to_string(header.size()) +
                                         " columns, got " +
                                         std::to_string(cells.size()) + ")"));
    }
    RssiFrame f;
    if (!csv::parse_int(cells[0], f.t)) {
      throw DataError(row_error(row, "malformed t '" + cells[0] + "'"));
    }
    if (!cells[1].empty()) {
      std::int64_t lab = 0;
      if (!csv::parse_int(cells[1], lab)) {
        throw DataError(row_error(row, "malformed label '" + cells[1] + "'"));
      }
      if (lab < 0 || lab >= kCellCount) {
        throw DataError(row_error(row, "unknown label value " + cells[1]));
      }
      f.label = static_cast<Label>(lab);
    }
    f.rssi.reserve(nodes.size());
    for (std::size_t c = 2; c < cells.size(); ++c) {
      double v = 0;
      if (!csv::parse_fixed1(cells[c], v)) {
        throw DataError(row_error(row, "malformed rssi '" + cells[c] + "'"));
      }
      if (!in_rssi_range(v)) throw DataError(row_error(row, "rssi out of range"));
      f.rssi.push_back(v);
    }
    if (!frames.empty() && f.t != frames.back().t + 1) {
      throw DataError(row_error(row, "non-monotone or gapped t"));
    }
    frames.push_back(std::move(f));
  }
  if (frames.empty()) throw DataError("set '" + id + "': no data rows");
  return MeasurementSet(std::move(id), std::move(nodes), std::move(frames));
}

MeasurementSet load_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return read_set(in, path.stem().string());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_set(std::ostream& out, const MeasurementSet& set) {
  out << "t,label";
  for (const auto& n : set.node_labels()) out << ",rssi_" << n;
  out << '\n';
  for (const auto& f : set.frames()) {
    out << f.t << ',';
    if (f.label) out << *f.label;
    for (double v : f.rssi) out << ',' << format_dbm(v);
    out << '\n';
  }
}

void save_set(const std::filesystem::path& path, const MeasurementSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_set(out, set);
  if (!out) throw DataError("write failed for " + path.string());
}

std::vector<MeasurementSet> load_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<MeasurementSet> sets;
  sets.reserve(files.size());
  for (const auto& f : files) sets.push_back(load_set(f));
  return sets;
}

MeasurementSet import_salrb(const std::filesystem::path& path,
                            const std::vector<std::string>& node_order) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!csv::next_line(in, line)) {
    throw DataError(path.string() + ": missing header row");
  }
  const auto header = csv::split(line);

  std::optional<std::size_t> label_col;
  std::unordered_map<std::string, std::size_t> node_cols;
  std::vector<std::string> header_nodes;
  for (std::size_t c = 0; c < header.size(); ++c) {
    std::string h = header[c];
    std::string lower = h;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return std::tolower(ch); });
    if (lower == "label") {
      label_col = c;
      continue;
    }
    if (h.compare(0, kRssiPrefix.size(), kRssiPrefix) == 0) {
      h = h.substr(kRssiPrefix.size());
    }
    // Sniffer names look like I-E / O-DR.
    if (h.size() >= 3 && (h[0] == 'I' || h[0] == 'O') && h[1] == '-') {
      node_cols.emplace(h, c);
      header_nodes.push_back(h);
    }
  }
  if (!label_col) throw DataError(path.string() + ": no label column");
  const std::vector<std::string>& order =
      node_order.empty() ? header_nodes : node_order;
  if (order.empty()) throw DataError(path.string() + ": no sniffer columns");
  std::vector<std::size_t> cols;
  for (const auto& n : order) {
    auto it = node_cols.find(n);
    if (it == node_cols.end()) {
      throw DataError(path.string() + ": sniffer column '" + n + "' missing");
    }
    cols.push_back(it->second);
  }

  std::vector<RssiFrame> frames;
  std::size_t row = 0;
  while (csv::next_line(in, line)) {
    ++row;
    const auto cells = csv::split(line);
    if (cells.size() != header.size()) {
      throw DataError(path.string() + ": " + row_error(row, "malformed row"));
    }
    RssiFrame f;
    f.t = static_cast<std::int64_t>(row - 1);
    if (!cells[*label_col].empty()) {
      double lab = 0;
      if (!csv::parse_double(cells[*label_col], lab) || lab != std::round(lab) ||
          lab < 0 || lab >= kCellCount) {
        throw DataError(path.string() + ": " +
                        row_error(row, "unknown label value"));
      }
      f.label = static_cast<Label>(lab);
    }
    for (std::size_t c : cols) {
      double v = 0;
      if (!csv::parse_double(cells[c], v)) {
        throw DataError(path.string() + ": " + row_error(row, "malformed rssi"));
      }
      v = std::round(v * 10.0) / 10.0;
      if (!in_rssi_range(v)) {
        throw DataError(path.string() + ": " + row_error(row, "rssi out of range"));
      }
      f.rssi.push_back(v);
    }
    frames.push_back(std::move(f));
  }
  if (frames.empty()) throw DataError(path.string() + ": no data rows");
  return MeasurementSet(path.stem().string(), order, std::move(frames));
}

}  // namespace cellloc
