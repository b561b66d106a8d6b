#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cellloc/classify.hpp"
#include "cellloc/dataset.hpp"
#include "cellloc/postprocess.hpp"

namespace cellloc {

enum class FilterKind { none, median, hmm };

/// Second-stage choice. Text form: "none", "median:<M>", "hmm",
/// "hmm:forbid" (0 <-> 2 structural zeros); `epsilon` is the HMM count
/// smoothing.
struct FilterSpec {
  FilterKind kind = FilterKind::none;
  std::size_t median_m = 0;
  double epsilon = 1e-6;
  bool forbid_jumps = false;

  static FilterSpec none() { return {}; }
  static FilterSpec median(std::size_t m) { return {FilterKind::median, m}; }
  static FilterSpec hmm(double eps = 1e-6, bool forbid = false) {
    return {FilterKind::hmm, 0, eps, forbid};
  }
  static FilterSpec parse(const std::string& text);
  std::string name() const;

  friend bool operator==(const FilterSpec&, const FilterSpec&) = default;
};

struct PipelineConfig {
  /// Unset selects every node.
  std::optional<NodeMask> node_mask;
  std::size_t moment_L = 1;
  KnnParams knn;
  FilterSpec filter;
  /// Recorded in reports. The reference pipeline draws no random numbers.
  std::uint64_t seed = 0;

  void validate() const;
};

struct PredictionRow {
  std::int64_t t = 0;
  std::optional<Label> truth;
  Label y_hat = 0;
  Label z_hat = 0;

  friend bool operator==(const PredictionRow&, const PredictionRow&) = default;
};

struct EvalReport {
  PipelineConfig config;
  SplitPlan split;
  std::vector<std::string> node_labels;  ///< after masking
  /// Accuracy of z_hat over labeled validation frames.
  double accuracy = 0.0;
  /// Accuracy of the bare classifier output y_hat.
  double stage1_accuracy = 0.0;
  ConfusionMatrix confusion{kCellCount};
  std::vector<PredictionRow> predictions;
  std::optional<Hmm> hmm;
};

/// Trains on the split's training sets, fits the HMM (when selected) from
/// the classifier's own predictions on that training data, then filters the
/// validation set causally. Feature windows never cross set boundaries.
EvalReport run_pipeline(const std::vector<MeasurementSet>& sets,
                        const SplitPlan& split, const PipelineConfig& cfg);

/// The fitted first stage of run_pipeline, exposed for audits.
KnnClassifier fit_stage1(const std::vector<MeasurementSet>& sets,
                         const SplitPlan& split, const PipelineConfig& cfg);

struct SweepOptions {
  /// Empty means every 3-train/1-validation split (or n-1/1 with fewer
  /// than four sets).
  std::vector<SplitPlan> splits;
  /// Empty means the full mask for sweep_L, every mask for sweep_node_masks.
  std::vector<NodeMask> masks;
  KnnParams knn;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

/// One (split, mask, L, filter) evaluation.
struct SweepCell {
  SplitPlan split;
  NodeMask mask;
  std::size_t moment_L;
  FilterSpec filter;
  double accuracy;
};

struct LSweepRow {
  std::size_t moment_L;
  FilterSpec filter;
  double mean_accuracy;
  std::size_t cells;
};

struct LSweepResult {
  std::vector<LSweepRow> rows;   ///< L-major, filters in request order
  std::vector<SweepCell> cells;  ///< every underlying evaluation
};

/// Unweighted mean accuracy per (L, filter) over all split x mask cells.
LSweepResult sweep_L(const std::vector<MeasurementSet>& sets,
                     const std::vector<std::size_t>& L_values,
                     const std::vector<FilterSpec>& filters,
                     const SweepOptions& options);

struct MaskSweepRow {
  NodeMask mask;
  double mean_accuracy;
  std::size_t cells;
};

struct Histogram {
  double bin_width;
  std::vector<std::size_t> counts;  ///< bin b covers [b*w, (b+1)*w), last bin closed
};

struct MaskSweepResult {
  std::vector<std::string> node_labels;
  std::vector<MaskSweepRow> rows;  ///< ascending mask order
  Histogram histogram;
  std::vector<SweepCell> cells;
};

inline constexpr std::size_t kMaxEnumeratedNodes = 16;

/// Per-mask mean accuracy over all splits. Enumerating every mask requires
/// N <= 16; pass explicit masks otherwise.
MaskSweepResult sweep_node_masks(const std::vector<MeasurementSet>& sets,
                                 std::size_t moment_L, const FilterSpec& filter,
                                 const SweepOptions& options,
                                 double bin_width = 0.02);

Histogram make_histogram(const std::vector<double>& values, double bin_width);

/// Default split list for a collection: every 3+1 plan (n-1 + 1 below four
/// sets).
std::vector<SplitPlan> default_splits(const std::vector<MeasurementSet>& sets);

// Report output. JSON is a full dump, CSVs are flat plot-ready tables.
std::string report_to_json(const EvalReport& report);
std::string config_to_json(const PipelineConfig& cfg,
                           const std::vector<std::string>& node_labels);
void write_predictions_csv(std::ostream& out, const EvalReport& report);
void write_l_sweep_csv(std::ostream& out, const LSweepResult& result);
void write_mask_accuracy_csv(std::ostream& out, const MaskSweepResult& result);
void write_histogram_csv(std::ostream& out, const Histogram& hist);

/// Shortest round-trip decimal form of a double (std::to_chars).
std::string format_double(double v);

}  // namespace cellloc
