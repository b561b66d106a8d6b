#include "cellloc/eval.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <ostream>
#include <thread>

#include "cellloc/error.hpp"
#include "cellloc/features.hpp"

namespace cellloc {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

FilterSpec FilterSpec::parse(const std::string& text) {
  if (text == "none") return none();
  if (text == "hmm") return hmm();
  if (text == "hmm:forbid") return hmm(1e-6, true);
  if (text.rfind("median:", 0) == 0) {
    const std::string arg = text.substr(7);
    std::size_t m = 0;
    auto [p, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), m);
    if (ec != std::errc() || p != arg.data() + arg.size() || arg.empty()) {
      throw ConfigError("invalid median window in filter '" + text + "'");
    }
    return median(m);
  }
  throw ConfigError("unknown filter '" + text +
                    "' (expected none, median:<M>, hmm, hmm:forbid)");
}

std::string FilterSpec::name() const {
  switch (kind) {
    case FilterKind::none:
      return "none";
    case FilterKind::median:
      return "median:" + std::to_string(median_m);
    case FilterKind::hmm:
      return forbid_jumps ? "hmm:forbid" : "hmm";
  }
  return "?";
}

void PipelineConfig::validate() const {
  if (moment_L == 0) throw ConfigError("moment_L must be >= 1");
  if (knn.k == 0) throw ConfigError("knn k must be >= 1");
  if (filter.kind == FilterKind::hmm &&
      (!(filter.epsilon >= 0.0) || !std::isfinite(filter.epsilon))) {
    throw ConfigError("hmm epsilon must be finite and >= 0");
  }
}

std::vector<SplitPlan> default_splits(const std::vector<MeasurementSet>& sets) {
  if (sets.size() < 2) throw ConfigError("need at least two measurement sets");
  std::vector<std::string> ids;
  for (const auto& s : sets) ids.push_back(s.id());
  return enumerate_splits(ids, std::min<std::size_t>(3, sets.size() - 1));
}

// ---------------------------------------------------------------------------
// Pipeline core

namespace {

const MeasurementSet& find_set(const std::vector<MeasurementSet>& sets,
                               const std::string& id) {
  for (const auto& s : sets) {
    if (s.id() == id) return s;
  }
  throw ConfigError("unknown measurement set id '" + id + "'");
}

void check_nodes(const std::vector<MeasurementSet>& sets) {
  for (const auto& s : sets) {
    if (s.node_labels() != sets.front().node_labels()) {
      throw DataError("set '" + s.id() + "' has different node columns than '" +
                      sets.front().id() + "'");
    }
  }
}

struct SetFeatures {
  std::vector<FeatureVector> x;
  std::vector<std::optional<Label>> y;
};

SetFeatures prepare(const MeasurementSet& set, const std::optional<NodeMask>& mask,
                    std::size_t window) {
  const MeasurementSet projected = mask ? select_nodes(set, *mask) : set;
  SetFeatures out{pipeline_features(projected, window), {}};
  out.y.reserve(set.size());
  for (const auto& f : set.frames()) out.y.push_back(f.label);
  return out;
}

std::vector<Label> require_labels(const SetFeatures& f, const std::string& id) {
  std::vector<Label> y;
  y.reserve(f.y.size());
  for (const auto& l : f.y) {
    if (!l) throw DataError("training set '" + id + "' has unlabeled frames");
    y.push_back(*l);
  }
  return y;
}

// Everything needed to evaluate any number of validation sets against one
// training group.
struct Stage1 {
  KnnClassifier clf;
  std::optional<HmmCounts> counts;
};

Stage1 train_stage1(const std::vector<MeasurementSet>& sets,
                    const std::vector<std::string>& train_ids,
                    const std::optional<NodeMask>& mask, std::size_t window,
                    const KnnParams& knn, bool need_hmm_counts) {
  std::vector<SetFeatures> feats;
  std::vector<std::vector<Label>> labels;
  std::optional<TrainingSet> train;
  for (const auto& id : train_ids) {
    feats.push_back(prepare(find_set(sets, id), mask, window));
    labels.push_back(require_labels(feats.back(), id));
    auto part = TrainingSet::from_features(feats.back().x, labels.back());
    if (!train) {
      train = std::move(part);
    } else {
      train->append(part);
    }
  }
  Stage1 st{KnnClassifier::fit(*train, knn), std::nullopt};
  if (need_hmm_counts) {
    st.counts.emplace(kCellCount);
    for (std::size_t s = 0; s < feats.size(); ++s) {
      const auto pred = st.clf.predict_all(feats[s].x);
      st.counts->add_segment(labels[s], pred);
    }
  }
  return st;
}

EvalReport evaluate(const Stage1& st, const SetFeatures& val,
                    const PipelineConfig& cfg, const SplitPlan& split,
                    std::vector<std::string> node_labels, bool keep_predictions) {
  const auto y_hat = st.clf.predict_all(val.x);

  EvalReport rep;
  rep.config = cfg;
  rep.split = split;
  rep.node_labels = std::move(node_labels);

  std::vector<Label> z_hat;
  switch (cfg.filter.kind) {
    case FilterKind::none:
      z_hat = y_hat;
      break;
    case FilterKind::median:
      z_hat = median_filter(y_hat, cfg.filter.median_m);
      break;
    case FilterKind::hmm: {
      if (!st.counts) throw InvariantError("hmm filter without training counts");
      rep.hmm = fit_hmm(*st.counts, HmmFitOptions::cell_defaults(
                                        cfg.filter.epsilon, cfg.filter.forbid_jumps));
      z_hat = hmm_filter(y_hat, *rep.hmm);
      break;
    }
  }

  std::vector<Label> truth, scored_y, scored_z;
  for (std::size_t t = 0; t < val.y.size(); ++t) {
    if (!val.y[t]) continue;
    truth.push_back(*val.y[t]);
    scored_y.push_back(y_hat[t]);
    scored_z.push_back(z_hat[t]);
  }
  if (truth.empty()) {
    throw DataError("validation set '" + split.val_id + "' has no labeled frames");
  }
  rep.accuracy = accuracy(truth, scored_z);
  rep.stage1_accuracy = accuracy(truth, scored_y);
  rep.confusion = confusion(truth, scored_z, kCellCount);

  if (keep_predictions) {
    rep.predictions.reserve(val.x.size());
    for (std::size_t t = 0; t < val.x.size(); ++t) {
      rep.predictions.push_back({val.x[t].t, val.y[t], y_hat[t], z_hat[t]});
    }
  }
  return rep;
}

std::vector<std::string> masked_labels(const MeasurementSet& any,
                                       const std::optional<NodeMask>& mask) {
  if (!mask) return any.node_labels();
  std::vector<std::string> out;
  for (std::size_t i : mask->indices()) out.push_back(any.node_labels()[i]);
  return out;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Rethrows the
/// exception of the lowest failing index.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

struct SplitGroup {
  std::vector<std::string> train_ids;
  std::vector<std::size_t> split_indices;
};

std::vector<SplitGroup> group_splits(const std::vector<SplitPlan>& splits) {
  std::vector<SplitGroup> groups;
  std::map<std::vector<std::string>, std::size_t> index;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    auto [it, inserted] = index.emplace(splits[i].train_ids, groups.size());
    if (inserted) groups.push_back({splits[i].train_ids, {}});
    groups[it->second].split_indices.push_back(i);
  }
  return groups;
}

// Evaluates the full (mask x L x split x filter) grid. Cells come back in
// that nesting order regardless of the thread count.
std::vector<SweepCell> run_grid(const std::vector<MeasurementSet>& sets,
                                const std::vector<NodeMask>& masks,
                                const std::vector<std::size_t>& L_values,
                                const std::vector<FilterSpec>& filters,
                                const SweepOptions& options,
                                const std::vector<SplitPlan>& splits) {
  for (const auto& s : splits) validate_split(s);
  const auto groups = group_splits(splits);
  const bool need_hmm = std::any_of(filters.begin(), filters.end(), [](const auto& f) {
    return f.kind == FilterKind::hmm;
  });

  const std::size_t n_s = splits.size(), n_f = filters.size(), n_l = L_values.size();
  std::vector<std::optional<SweepCell>> cells(masks.size() * n_l * n_s * n_f);
  const std::size_t n_tasks = masks.size() * n_l * groups.size();

  parallel_for(n_tasks, options.jobs, [&](std::size_t task) {
    const std::size_t g = task % groups.size();
    const std::size_t li = (task / groups.size()) % n_l;
    const std::size_t mi = task / (groups.size() * n_l);
    const std::optional<NodeMask> mask = masks[mi];
    const Stage1 st = train_stage1(sets, groups[g].train_ids, mask, L_values[li],
                                   options.knn, need_hmm);
    for (std::size_t si : groups[g].split_indices) {
      const auto val = prepare(find_set(sets, splits[si].val_id), mask, L_values[li]);
      for (std::size_t fi = 0; fi < n_f; ++fi) {
        PipelineConfig cfg{mask, L_values[li], options.knn, filters[fi], options.seed};
        const auto rep = evaluate(st, val, cfg, splits[si], {}, false);
        cells[((mi * n_l + li) * n_s + si) * n_f + fi] =
            SweepCell{splits[si], masks[mi], L_values[li], filters[fi], rep.accuracy};
      }
    }
  });

  std::vector<SweepCell> out;
  out.reserve(cells.size());
  for (auto& c : cells) {
    if (!c) throw InvariantError("sweep cell left unevaluated");
    out.push_back(std::move(*c));
  }
  return out;
}

}  // namespace

EvalReport run_pipeline(const std::vector<MeasurementSet>& sets,
                        const SplitPlan& split, const PipelineConfig& cfg) {
  cfg.validate();
  validate_split(split);
  check_nodes(sets);
  const auto& val_set = find_set(sets, split.val_id);
  const Stage1 st = train_stage1(sets, split.train_ids, cfg.node_mask, cfg.moment_L,
                                 cfg.knn, cfg.filter.kind == FilterKind::hmm);
  const auto val = prepare(val_set, cfg.node_mask, cfg.moment_L);
  return evaluate(st, val, cfg, split, masked_labels(val_set, cfg.node_mask), true);
}

KnnClassifier fit_stage1(const std::vector<MeasurementSet>& sets,
                         const SplitPlan& split, const PipelineConfig& cfg) {
  cfg.validate();
  validate_split(split);
  check_nodes(sets);
  return train_stage1(sets, split.train_ids, cfg.node_mask, cfg.moment_L, cfg.knn,
                      false)
      .clf;
}

LSweepResult sweep_L(const std::vector<MeasurementSet>& sets,
                     const std::vector<std::size_t>& L_values,
                     const std::vector<FilterSpec>& filters,
                     const SweepOptions& options) {
  if (L_values.empty()) throw ConfigError("sweep_L: empty L list");
  if (filters.empty()) throw ConfigError("sweep_L: empty filter list");
  for (auto L : L_values) {
    if (L == 0) throw ConfigError("sweep_L: L must be >= 1");
  }
  check_nodes(sets);
  const auto splits = options.splits.empty() ? default_splits(sets) : options.splits;
  const auto masks = options.masks.empty()
                         ? std::vector<NodeMask>{NodeMask::full(sets.front().node_count())}
                         : options.masks;

  LSweepResult res;
  res.cells = run_grid(sets, masks, L_values, filters, options, splits);
  for (std::size_t li = 0; li < L_values.size(); ++li) {
    for (const auto& f : filters) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& c : res.cells) {
        if (c.moment_L == L_values[li] && c.filter == f) {
          sum += c.accuracy;
          ++n;
        }
      }
      res.rows.push_back({L_values[li], f, sum / static_cast<double>(n), n});
    }
  }
  return res;
}

Histogram make_histogram(const std::vector<double>& values, double bin_width) {
  if (!(bin_width > 0.0 && bin_width <= 1.0)) {
    throw ConfigError("histogram bin width must be in (0, 1]");
  }
  const auto bins = static_cast<std::size_t>(std::ceil(1.0 / bin_width - 1e-9));
  Histogram h{bin_width, std::vector<std::size_t>(bins, 0)};
  for (double v : values) {
    auto b = static_cast<std::size_t>(std::floor(std::clamp(v, 0.0, 1.0) / bin_width));
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

MaskSweepResult sweep_node_masks(const std::vector<MeasurementSet>& sets,
                                 std::size_t moment_L, const FilterSpec& filter,
                                 const SweepOptions& options, double bin_width) {
  if (sets.empty()) throw ConfigError("sweep_node_masks: no sets");
  check_nodes(sets);
  const std::size_t n_nodes = sets.front().node_count();
  std::vector<NodeMask> masks = options.masks;
  if (masks.empty()) {
    if (n_nodes > kMaxEnumeratedNodes) {
      throw ConfigError("sweep_node_masks: " + std::to_string(n_nodes) +
                        " nodes is too many to enumerate (limit " +
                        std::to_string(kMaxEnumeratedNodes) +
                        "); pass an explicit mask list");
    }
    masks = enumerate_node_masks(n_nodes);
  }
  const auto splits = options.splits.empty() ? default_splits(sets) : options.splits;

  MaskSweepResult res;
  res.node_labels = sets.front().node_labels();
  res.cells = run_grid(sets, masks, {moment_L}, {filter}, options, splits);
  std::vector<double> means;
  for (std::size_t mi = 0; mi < masks.size(); ++mi) {
    double sum = 0.0;
    for (std::size_t si = 0; si < splits.size(); ++si) {
      sum += res.cells[mi * splits.size() + si].accuracy;
    }
    const double mean = sum / static_cast<double>(splits.size());
    res.rows.push_back({masks[mi], mean, splits.size()});
    means.push_back(mean);
  }
  res.histogram = make_histogram(means, bin_width);
  return res;
}

// ---------------------------------------------------------------------------
// Output

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw InvariantError("format_double failed");
  return std::string(buf, p);
}

namespace {

json split_json(const SplitPlan& s) {
  return {{"train", s.train_ids}, {"validation", s.val_id}};
}

json config_json(const PipelineConfig& cfg, const std::vector<std::string>& labels) {
  json j;
  j["moment_L"] = cfg.moment_L;
  j["knn"] = {{"k", cfg.knn.k}, {"standardize", cfg.knn.standardize}};
  j["filter"] = cfg.filter.name();
  if (cfg.filter.kind == FilterKind::hmm) j["hmm_epsilon"] = cfg.filter.epsilon;
  j["seed"] = cfg.seed;
  if (cfg.node_mask) {
    j["node_mask"] = cfg.node_mask->bits();
    j["nodes"] = cfg.node_mask->describe(labels);
  } else {
    j["node_mask"] = nullptr;
  }
  return j;
}

}  // namespace

std::string config_to_json(const PipelineConfig& cfg,
                           const std::vector<std::string>& node_labels) {
  return config_json(cfg, node_labels).dump(2);
}

std::string report_to_json(const EvalReport& r) {
  json j;
  j["config"] = config_json(r.config, {});
  j["config"]["nodes"] = r.node_labels;
  j["split"] = split_json(r.split);
  j["accuracy"] = r.accuracy;
  j["stage1_accuracy"] = r.stage1_accuracy;
  j["seed"] = r.config.seed;
  json conf = json::array();
  for (std::size_t i = 0; i < r.confusion.n(); ++i) {
    json row = json::array();
    for (std::size_t k = 0; k < r.confusion.n(); ++k) row.push_back(r.confusion(i, k));
    conf.push_back(row);
  }
  j["confusion"] = conf;
  if (r.hmm) j["hmm"] = json::parse(r.hmm->to_json());
  json preds = json::array();
  for (const auto& p : r.predictions) {
    preds.push_back({p.t, p.truth ? json(*p.truth) : json(nullptr), p.y_hat, p.z_hat});
  }
  j["predictions"] = {{"columns", {"t", "truth", "y_hat", "z_hat"}}, {"rows", preds}};
  return j.dump(2);
}

void write_predictions_csv(std::ostream& out, const EvalReport& report) {
  out << "t,truth,y_hat,z_hat\n";
  for (const auto& p : report.predictions) {
    out << p.t << ',';
    if (p.truth) out << *p.truth;
    out << ',' << p.y_hat << ',' << p.z_hat << '\n';
  }
}

void write_l_sweep_csv(std::ostream& out, const LSweepResult& result) {
  out << "L,filter,mean_accuracy,cells\n";
  for (const auto& r : result.rows) {
    out << r.moment_L << ',' << r.filter.name() << ',' << format_double(r.mean_accuracy)
        << ',' << r.cells << '\n';
  }
}

void write_mask_accuracy_csv(std::ostream& out, const MaskSweepResult& result) {
  out << "mask,nodes,size,mean_accuracy,cells\n";
  for (const auto& r : result.rows) {
    out << r.mask.bits() << ',' << r.mask.describe(result.node_labels) << ','
        << r.mask.popcount() << ',' << format_double(r.mean_accuracy) << ','
        << r.cells << '\n';
  }
}

void write_histogram_csv(std::ostream& out, const Histogram& hist) {
  out << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < hist.counts.size(); ++b) {
    const double lo = static_cast<double>(b) * hist.bin_width;
    const double hi = std::min(1.0, static_cast<double>(b + 1) * hist.bin_width);
    out << format_double(lo) << ',' << format_double(hi) << ',' << hist.counts[b] << '\n';
  }
}

}  // namespace cellloc
