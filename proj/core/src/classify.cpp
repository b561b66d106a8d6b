#include "cellloc/classify.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <nlohmann/json.hpp>

#include "cellloc/error.hpp"

namespace cellloc {

namespace {

void stderr_sink(std::string_view msg) { std::cerr << "warning: " << msg << '\n'; }

std::atomic<WarningSink> g_sink{&stderr_sink};

constexpr std::string_view kKnnFormat = "cellloc.knn";
constexpr int kKnnVersion = 1;

}  // namespace

void set_warning_sink(WarningSink sink) { g_sink.store(sink); }

void warn(std::string_view message) {
  if (auto sink = g_sink.load()) sink(message);
}

// ---------------------------------------------------------------------------
// TrainingSet

TrainingSet::TrainingSet(std::size_t width, std::vector<double> x,
                         std::vector<Label> y)
    : width_(width), x_(std::move(x)), y_(std::move(y)) {
  if (width_ == 0) throw DataError("training set has zero feature width");
  if (y_.empty()) throw DataError("training set is empty");
  if (x_.size() != width_ * y_.size()) {
    throw DataError("training matrix size does not match labels x width");
  }
  for (Label l : y_) {
    if (l < 0) throw DataError("negative training label");
  }
  for (double v : x_) {
    if (!std::isfinite(v)) throw DataError("non-finite training feature");
  }
}

TrainingSet TrainingSet::from_features(const std::vector<FeatureVector>& x,
                                       const std::vector<Label>& y) {
  if (x.empty() || x.size() != y.size()) {
    throw DataError("training features and labels must be non-empty and of "
                    "equal length");
  }
  const std::size_t w = x.front().values.size();
  std::vector<double> flat;
  flat.reserve(w * x.size());
  for (const auto& fv : x) {
    if (fv.values.size() != w) throw DataError("feature width mismatch");
    flat.insert(flat.end(), fv.values.begin(), fv.values.end());
  }
  return TrainingSet(w, std::move(flat), y);
}

void TrainingSet::append(const TrainingSet& other) {
  if (other.width_ != width_) throw DataError("feature width mismatch");
  x_.insert(x_.end(), other.x_.begin(), other.x_.end());
  y_.insert(y_.end(), other.y_.begin(), other.y_.end());
}

// ---------------------------------------------------------------------------
// Standardizer

Standardizer::Standardizer(std::vector<double> mean, std::vector<double> std)
    : mean_(std::move(mean)), std_(std::move(std)) {
  if (mean_.size() != std_.size()) {
    throw DataError("standardizer mean/std width mismatch");
  }
  for (double s : std_) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw DataError("standardizer std must be positive");
    }
  }
}

Standardizer Standardizer::fit(const TrainingSet& train) {
  const std::size_t w = train.width();
  const double n = static_cast<double>(train.size());
  std::vector<double> mean(w, 0.0), sd(w, 0.0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto r = train.row(i);
    for (std::size_t d = 0; d < w; ++d) mean[d] += r[d];
  }
  for (auto& m : mean) m /= n;
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto r = train.row(i);
    for (std::size_t d = 0; d < w; ++d) {
      const double e = r[d] - mean[d];
      sd[d] += e * e;
    }
  }
  for (auto& s : sd) {
    s = std::sqrt(s / n);
    if (!(s > 0.0)) s = 1.0;
  }
  return Standardizer(std::move(mean), std::move(sd));
}

Standardizer Standardizer::identity(std::size_t width) {
  return Standardizer(std::vector<double>(width, 0.0),
                      std::vector<double>(width, 1.0));
}

void Standardizer::apply(std::span<const double> in,
                         std::span<double> out) const {
  for (std::size_t d = 0; d < mean_.size(); ++d) {
    out[d] = (in[d] - mean_[d]) / std_[d];
  }
}

// ---------------------------------------------------------------------------
// Classifier

std::vector<Label> Classifier::predict_all(
    const std::vector<FeatureVector>& xs) const {
  std::vector<Label> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(predict(x.values));
  return out;
}

KnnClassifier KnnClassifier::fit(const TrainingSet& train, KnnParams params) {
  if (params.k == 0) throw ConfigError("knn k must be >= 1");
  KnnClassifier clf;
  clf.params_ = params;
  clf.width_ = train.width();
  clf.labels_ = train.labels();
  clf.scaler_ = params.standardize ? Standardizer::fit(train)
                                   : Standardizer::identity(train.width());

  const Label first = clf.labels_.front();
  clf.constant_ = std::all_of(clf.labels_.begin(), clf.labels_.end(),
                              [first](Label l) { return l == first; });
  if (clf.constant_) {
    warn("training set holds a single class (" + std::to_string(first) +
         "); classifier degenerates to a constant predictor");
  }

  clf.points_.resize(train.data().size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    clf.scaler_.apply(train.row(i),
                      std::span<double>(clf.points_.data() + i * clf.width_,
                                        clf.width_));
  }
  return clf;
}

Label KnnClassifier::predict(std::span<const double> x) const {
  std::size_t hint = 0;
  return predict_from(x, hint);
}

std::vector<Label> KnnClassifier::predict_all(
    const std::vector<FeatureVector>& xs) const {
  std::vector<Label> out;
  out.reserve(xs.size());
  // Consecutive frames tend to share neighbors, so each scan starts where
  // the previous query found its nearest point.
  std::size_t hint = 0;
  for (const auto& x : xs) out.push_back(predict_from(x.values, hint));
  return out;
}

Label KnnClassifier::predict_from(std::span<const double> x,
                                  std::size_t& hint) const {
  if (x.size() != width_) {
    throw DataError("query width " + std::to_string(x.size()) +
                    " != classifier width " + std::to_string(width_));
  }
  if (constant_) return labels_.front();

  constexpr std::size_t kStackDims = 64;
  std::array<double, kStackDims> stack_q{};
  std::vector<double> heap_q;
  double* q = stack_q.data();
  if (width_ > kStackDims) {
    heap_q.resize(width_);
    q = heap_q.data();
  }
  scaler_.apply(x, std::span<double>(q, width_));

  const std::size_t n = labels_.size();
  const std::size_t k = std::min(params_.k, n);
  // Kept sorted by (distance, index), so the outcome does not depend on the
  // scan order.
  using Candidate = std::pair<double, std::size_t>;
  std::vector<Candidate> best;
  best.reserve(k + 1);
  double worst = std::numeric_limits<double>::infinity();
  const std::size_t start = hint < n ? hint : 0;
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t i = start + step;
    if (i >= n) i -= n;
    const double* p = points_.data() + i * width_;
    // Partial distance: stop once the running sum exceeds the current k-th
    // neighbor. Blocks of four keep the inner loop vectorizable.
    double d2 = 0.0;
    std::size_t d = 0;
    for (; d + 4 <= width_ && d2 <= worst; d += 4) {
      const double e0 = p[d] - q[d], e1 = p[d + 1] - q[d + 1];
      const double e2 = p[d + 2] - q[d + 2], e3 = p[d + 3] - q[d + 3];
      d2 += (e0 * e0 + e1 * e1) + (e2 * e2 + e3 * e3);
    }
    if (d2 > worst) continue;
    for (; d < width_; ++d) {
      const double e = p[d] - q[d];
      d2 += e * e;
    }
    const Candidate c{d2, i};
    if (best.size() == k && !(c < best.back())) continue;
    best.insert(std::upper_bound(best.begin(), best.end(), c), c);
    if (best.size() > k) best.pop_back();
    if (best.size() == k) worst = best.back().first;
  }
  hint = best.front().second;

  Label max_label = 0;
  for (const auto& [_, i] : best) max_label = std::max(max_label, labels_[i]);
  std::vector<std::size_t> votes(static_cast<std::size_t>(max_label) + 1, 0);
  for (const auto& [_, i] : best) ++votes[static_cast<std::size_t>(labels_[i])];
  // max_element returns the first maximum, i.e. the smallest label.
  return static_cast<Label>(std::max_element(votes.begin(), votes.end()) -
                            votes.begin());
}

std::string KnnClassifier::to_json() const {
  nlohmann::json j;
  j["format"] = kKnnFormat;
  j["version"] = kKnnVersion;
  j["k"] = params_.k;
  j["standardize"] = params_.standardize;
  j["width"] = width_;
  j["mean"] = scaler_.mean();
  j["std"] = scaler_.stddev();
  j["labels"] = labels_;
  j["points"] = points_;
  return j.dump();
}

KnnClassifier KnnClassifier::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("knn model: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kKnnFormat) {
      throw DataError("knn model: unexpected format tag");
    }
    if (j.at("version").get<int>() != kKnnVersion) {
      throw DataError("knn model: unsupported version");
    }
    KnnClassifier clf;
    clf.params_.k = j.at("k").get<std::size_t>();
    clf.params_.standardize = j.at("standardize").get<bool>();
    clf.width_ = j.at("width").get<std::size_t>();
    clf.scaler_ = Standardizer(j.at("mean").get<std::vector<double>>(),
                               j.at("std").get<std::vector<double>>());
    clf.labels_ = j.at("labels").get<std::vector<Label>>();
    clf.points_ = j.at("points").get<std::vector<double>>();
    if (clf.params_.k == 0 || clf.width_ == 0 || clf.labels_.empty() ||
        clf.scaler_.width() != clf.width_ ||
        clf.points_.size() != clf.width_ * clf.labels_.size()) {
      throw DataError("knn model: inconsistent dimensions");
    }
    const Label first = clf.labels_.front();
    clf.constant_ = std::all_of(clf.labels_.begin(), clf.labels_.end(),
                                [first](Label l) { return l == first; });
    return clf;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("knn model: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Metrics

std::uint64_t ConfusionMatrix::total() const noexcept {
  std::uint64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < n_; ++i) s += counts_[i * n_ + i];
  return s;
}

double accuracy(std::span<const Label> truth, std::span<const Label> pred) {
  if (truth.size() != pred.size()) {
    throw DataError("accuracy: length mismatch");
  }
  if (truth.empty()) throw DataError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == pred[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

ConfusionMatrix confusion(std::span<const Label> truth,
                          std::span<const Label> pred, std::size_t n) {
  if (truth.size() != pred.size()) {
    throw DataError("confusion: length mismatch");
  }
  if (truth.empty()) throw DataError("confusion: no scored frames");
  ConfusionMatrix c(n);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || pred[i] < 0 || static_cast<std::size_t>(truth[i]) >= n ||
        static_cast<std::size_t>(pred[i]) >= n) {
      throw DataError("confusion: label out of range at index " +
                      std::to_string(i));
    }
    ++c.at(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(pred[i]));
  }
  return c;
}

}  // namespace cellloc
