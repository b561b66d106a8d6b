#include "cellloc/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cellloc/error.hpp"

namespace cellloc {

SlidingMoments::SlidingMoments(std::size_t window) : window_(window) {
  if (window_ == 0) throw ConfigError("moment window L must be >= 1");
}

void SlidingMoments::push(double x) {
  if (!buf_.empty() && buf_.back() == x) {
    ++run_;
  } else {
    run_ = 1;
  }

  if (buf_.size() == window_) {
    const double old = buf_.front();
    buf_.pop_front();
    const double n = static_cast<double>(buf_.size());
    if (buf_.empty()) {
      mean_ = 0.0;
      m2_ = 0.0;
    } else {
      const double prev_mean = mean_;
      mean_ -= (old - mean_) / n;
      m2_ -= (old - prev_mean) * (old - mean_);
    }
  }

  buf_.push_back(x);
  const double n = static_cast<double>(buf_.size());
  const double delta = x - mean_;
  mean_ += delta / n;
  m2_ += delta * (x - mean_);
  if (m2_ < 0.0) m2_ = 0.0;

  if (run_ >= buf_.size()) {
    mean_ = x;
    m2_ = 0.0;
  }
}

double SlidingMoments::variance() const noexcept {
  if (buf_.size() < 2) return 0.0;
  return m2_ / static_cast<double>(buf_.size() - 1);
}

std::vector<FeatureVector> raw_features(const MeasurementSet& set) {
  std::vector<FeatureVector> out;
  out.reserve(set.size());
  for (const auto& f : set.frames()) out.push_back({f.t, f.rssi});
  return out;
}

std::vector<FeatureVector> moment_features(const MeasurementSet& set,
                                           MomentConfig cfg) {
  if (cfg.window == 0) throw ConfigError("moment window L must be >= 1");
  const std::size_t n_nodes = set.node_count();
  std::vector<SlidingMoments> acc(n_nodes, SlidingMoments(cfg.window));

  std::vector<FeatureVector> out;
  out.reserve(set.size());
  for (const auto& f : set.frames()) {
    FeatureVector fv{f.t, std::vector<double>(2 * n_nodes)};
    for (std::size_t k = 0; k < n_nodes; ++k) {
      acc[k].push(f.rssi[k]);
      fv.values[2 * k] = acc[k].mean();
      fv.values[2 * k + 1] = acc[k].variance();
    }
    out.push_back(std::move(fv));
  }
  return out;
}

std::vector<FeatureVector> pipeline_features(const MeasurementSet& set,
                                             std::size_t window) {
  if (window == 0) throw ConfigError("moment window L must be >= 1");
  if (window == 1) return raw_features(set);
  return moment_features(set, MomentConfig{window});
}

double max_doppler(double speed_mps, double carrier_hz) {
  if (!(speed_mps > 0.0) || !(carrier_hz > 0.0)) {
    throw ConfigError("speed and carrier frequency must be positive");
  }
  return speed_mps * carrier_hz / kSpeedOfLight;
}

double coherence_time(double speed_mps, double carrier_hz) {
  return 0.423 / max_doppler(speed_mps, carrier_hz);
}

}  // namespace cellloc
