#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cellloc {

/// Cell label. 0 = outside, 1 = inside, 2 = inside on the test position.
using Label = int;

inline constexpr double kMissingLinkDbm = -100.0;
inline constexpr double kMaxRssiDbm = 0.0;
inline constexpr int kCellCount = 3;

/// One superframe: synchronized RSSI over all sniffer nodes.
struct RssiFrame {
  std::int64_t t = 0;
  std::vector<double> rssi;
  std::optional<Label> label;

  friend bool operator==(const RssiFrame&, const RssiFrame&) = default;
};

/// A contiguous recording session. Immutable once constructed; the
/// constructor enforces every invariant (non-empty, unit-step t, uniform
/// width, RSSI in [-100, 0], labels in [0, kCellCount)).
class MeasurementSet {
 public:
  MeasurementSet(std::string id, std::vector<std::string> node_labels,
                 std::vector<RssiFrame> frames);

  const std::string& id() const noexcept { return id_; }
  const std::vector<std::string>& node_labels() const noexcept {
    return node_labels_;
  }
  const std::vector<RssiFrame>& frames() const noexcept { return frames_; }
  std::size_t node_count() const noexcept { return node_labels_.size(); }
  std::size_t size() const noexcept { return frames_.size(); }
  bool fully_labeled() const noexcept;

  /// Frames [begin, end) as a new set with the same id and nodes.
  MeasurementSet slice(std::size_t begin, std::size_t end) const;

  friend bool operator==(const MeasurementSet&,
                         const MeasurementSet&) = default;

 private:
  std::string id_;
  std::vector<std::string> node_labels_;
  std::vector<RssiFrame> frames_;
};

/// Subset of sniffer columns, bit i selects node i.
class NodeMask {
 public:
  NodeMask(std::uint32_t bits, std::size_t node_count);

  static NodeMask full(std::size_t node_count);
  /// Resolves node names against `node_labels`; unknown names raise a
  /// ConfigError that lists the valid names.
  static NodeMask from_names(const std::vector<std::string>& names,
                             const std::vector<std::string>& node_labels);

  std::uint32_t bits() const noexcept { return bits_; }
  std::size_t node_count() const noexcept { return node_count_; }
  std::size_t popcount() const noexcept;
  bool contains(std::size_t node) const noexcept {
    return (bits_ >> node) & 1U;
  }
  std::vector<std::size_t> indices() const;
  /// Selected node names joined with '+', e.g. "I-E+O-DR".
  std::string describe(const std::vector<std::string>& node_labels) const;

  friend bool operator==(const NodeMask&, const NodeMask&) = default;

 private:
  std::uint32_t bits_;
  std::size_t node_count_;
};

inline constexpr std::size_t kMaxMaskNodes = 31;

struct SplitPlan {
  std::vector<std::string> train_ids;
  std::string val_id;

  /// "a+b+c|d"
  std::string describe() const;
  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

/// Checks the SplitPlan invariants; throws ConfigError.
void validate_split(const SplitPlan& plan);

// Canonical CSV: header `t,label,rssi_<node0>,...`, one file per set.
MeasurementSet read_set(std::istream& in, std::string id);
MeasurementSet load_set(const std::filesystem::path& path);
void write_set(std::ostream& out, const MeasurementSet& set);
void save_set(const std::filesystem::path& path, const MeasurementSet& set);

/// Every `*.csv` in `dir`, sorted by file name. Ids are the file stems.
std::vector<MeasurementSet> load_directory(const std::filesystem::path& dir);

/// Import adapter for SAL-RB style exports: any CSV whose
/// header contains a `label` column and one column per sniffer name (bare
/// `I-E` or prefixed `rssi_I-E`). Other columns (timestamps, indices) are
/// ignored, t is assigned from the row order and RSSI is rounded to 0.1 dB.
/// `node_order` fixes the output column order; empty means header order.
MeasurementSet import_salrb(const std::filesystem::path& path,
                            const std::vector<std::string>& node_order = {});

MeasurementSet select_nodes(const MeasurementSet& set, const NodeMask& mask);

/// All (n_train training sets, 1 validation set) plans in lexicographic
/// order of index tuples over `set_ids`.
std::vector<SplitPlan> enumerate_splits(const std::vector<std::string>& set_ids,
                                        std::size_t n_train);

/// All non-empty masks over `n_nodes`, ascending.
std::vector<NodeMask> enumerate_node_masks(std::size_t n_nodes);

/// Formats an RSSI value the way the canonical CSV stores it: integer when
/// the value is integral, otherwise one decimal.
std::string format_dbm(double dbm);

}  // namespace cellloc
