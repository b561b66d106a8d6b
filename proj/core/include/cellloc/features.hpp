#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "cellloc/dataset.hpp"

namespace cellloc {

struct FeatureVector {
  std::int64_t t = 0;
  std::vector<double> values;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

struct MomentConfig {
  std::size_t window = 2;  // L; 1 means raw features
};

/// One feature vector per frame, values = rssi verbatim.
std::vector<FeatureVector> raw_features(const MeasurementSet& set);

/// Short-term moments over a trailing window of min(L, frames seen) samples.
/// Output width is 2N, laid out per node as [mean, unbiased variance].
/// A single-sample window has variance 0.
std::vector<FeatureVector> moment_features(const MeasurementSet& set,
                                           MomentConfig cfg);

/// raw_features for L == 1, moment_features otherwise. The classifier
/// pipeline uses this so that L = 1 means "raw RSSI" with width N.
std::vector<FeatureVector> pipeline_features(const MeasurementSet& set,
                                             std::size_t window);

/// Sliding-window mean and unbiased variance of one scalar series.
///
/// Uses add/remove Welford updates. When the trailing run of identical
/// samples covers the whole window the state is reset to the exact
/// (value, 0) pair, so constant stretches give exactly zero variance and the
/// accumulated rounding from earlier removals is discarded.
class SlidingMoments {
 public:
  explicit SlidingMoments(std::size_t window);

  void push(double x);
  std::size_t count() const noexcept { return buf_.size(); }
  double mean() const noexcept { return mean_; }
  /// Divisor count - 1; 0 for fewer than two samples.
  double variance() const noexcept;

 private:
  std::size_t window_;
  std::deque<double> buf_;
  double mean_ = 0.0;
  double m2_ = 0.0;
  std::size_t run_ = 0;  // trailing samples equal to buf_.back()
};

inline constexpr double kSpeedOfLight = 299'792'458.0;

/// Channel coherence time 0.423 / f_m with f_m = v * f_c / c (maximum
/// Doppler shift for head-on motion). Throws ConfigError on non-positive
/// input.
double coherence_time(double speed_mps, double carrier_hz);

/// Max Doppler shift v * f_c / c.
double max_doppler(double speed_mps, double carrier_hz);

}  // namespace cellloc
