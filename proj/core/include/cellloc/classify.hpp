#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cellloc/dataset.hpp"
#include "cellloc/features.hpp"

namespace cellloc {

/// Row-major feature matrix plus labels. Widths are uniform.
class TrainingSet {
 public:
  TrainingSet(std::size_t width, std::vector<double> x, std::vector<Label> y);
  static TrainingSet from_features(const std::vector<FeatureVector>& x,
                                   const std::vector<Label>& y);

  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return y_.size(); }
  std::span<const double> row(std::size_t i) const {
    return {x_.data() + i * width_, width_};
  }
  const std::vector<double>& data() const noexcept { return x_; }
  const std::vector<Label>& labels() const noexcept { return y_; }

  /// Appends rows from another set of the same width.
  void append(const TrainingSet& other);

 private:
  std::size_t width_;
  std::vector<double> x_;
  std::vector<Label> y_;
};

/// Per-dimension z-score. Dimensions with zero spread keep std = 1.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(std::vector<double> mean, std::vector<double> std);
  static Standardizer fit(const TrainingSet& train);
  static Standardizer identity(std::size_t width);

  std::size_t width() const noexcept { return mean_.size(); }
  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& stddev() const noexcept { return std_; }

  void apply(std::span<const double> in, std::span<double> out) const;

  friend bool operator==(const Standardizer&, const Standardizer&) = default;

 private:
  std::vector<double> mean_;
  std::vector<double> std_;
};

/// Point classifier stage. Implementations are immutable after fitting and
/// safe to query from several threads.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::size_t width() const noexcept = 0;
  virtual Label predict(std::span<const double> x) const = 0;
  virtual std::string to_json() const = 0;

  virtual std::vector<Label> predict_all(
      const std::vector<FeatureVector>& xs) const;
};

struct KnnParams {
  std::size_t k = 5;
  bool standardize = true;

  friend bool operator==(const KnnParams&, const KnnParams&) = default;
};

/// k-nearest neighbors, Euclidean distance, majority vote. Equal distances
/// are ordered by training index; vote ties go to the smallest label.
class KnnClassifier final : public Classifier {
 public:
  static KnnClassifier fit(const TrainingSet& train, KnnParams params = {});
  static KnnClassifier from_json(std::string_view json);

  std::size_t width() const noexcept override { return width_; }
  Label predict(std::span<const double> x) const override;
  std::vector<Label> predict_all(
      const std::vector<FeatureVector>& xs) const override;
  std::string to_json() const override;

  const KnnParams& params() const noexcept { return params_; }
  const Standardizer& standardizer() const noexcept { return scaler_; }
  /// True when training saw a single class; every prediction is that class.
  bool is_constant() const noexcept { return constant_; }


 private:
  KnnClassifier() = default;
  Label predict_from(std::span<const double> x, std::size_t& hint) const;

  KnnParams params_;
  Standardizer scaler_;
  std::size_t width_ = 0;
  std::vector<double> points_;  // standardized, row-major
  std::vector<Label> labels_;
  bool constant_ = false;
};

/// n x n counts, c(i, j) = #(truth = i, predicted = j).
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t n) : n_(n), counts_(n * n, 0) {}

  std::size_t n() const noexcept { return n_; }
  std::uint64_t operator()(std::size_t i, std::size_t j) const {
    return counts_[i * n_ + j];
  }
  std::uint64_t& at(std::size_t i, std::size_t j) { return counts_[i * n_ + j]; }
  std::uint64_t total() const noexcept;
  std::uint64_t trace() const noexcept;
  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }

  friend bool operator==(const ConfusionMatrix&,
                         const ConfusionMatrix&) = default;

 private:
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

/// Fraction of equal positions. Throws on empty or mismatched input.
double accuracy(std::span<const Label> truth, std::span<const Label> pred);

ConfusionMatrix confusion(std::span<const Label> truth,
                          std::span<const Label> pred, std::size_t n);

}  // namespace cellloc
