#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cellloc/dataset.hpp"

namespace cellloc {

struct Sniffer {
  std::string name;
  double x = 0, y = 0, z = 0;
};

/// Sniffer layout plus the two cell borders along x. x > door is outside
/// (label 0), x <= test is the test position (label 2), in between is
/// inside (label 1).
struct Geometry {
  std::vector<Sniffer> sniffers;
  double x_door = 0.0;
  double x_test = -10.0;

  void validate() const;
  std::vector<std::string> names() const;
  Label label_at(double x) const;
  /// Sniffer i sits on the inside of the door plane.
  bool inside(std::size_t i) const { return sniffers[i].x <= x_door; }
};

/// Ten sniffers of the automotive testbed (positions in meters).
Geometry default_geometry();

/// Log-distance path loss with wall attenuation, AR(1) log-normal shadowing
/// and random link dropouts.
struct ChannelParams {
  double ref_rssi_dbm = -40.0;  ///< RSSI at 1 m
  double path_loss_exponent = 2.0;
  double wall_db = 20.0;        ///< extra loss across the door plane
  double shadow_std_db = 6.0;
  /// Per-step (100 ms) shadowing correlation. Unset means
  /// exp(-0.1 s / T_c) with T_c = coherence_time(speed, carrier).
  std::optional<double> shadow_corr;
  double carrier_hz = 2.44e9;
  /// Static per-node offset drawn once per generated set (hardware and
  /// mounting spread between sessions).
  double node_bias_std_db = 1.0;
  double dropout_prob = 0.05;
  double floor_dbm = kMissingLinkDbm;
  bool quantize_integer = true;  ///< otherwise 0.1 dB resolution
  std::uint64_t seed = 1;

  void validate() const;
};

/// Piecewise-linear drive along x at 100 ms steps. The car moves between
/// waypoints at `speed` and dwells at each for `dwell_s` seconds.
struct Trajectory {
  struct Waypoint {
    double x = 0;
    double dwell_s = 0;
  };
  std::vector<Waypoint> waypoints;
  double speed = 1.0;  ///< m/s
  double y = 1.5;
  double z = 1.0;
  double step_s = 0.1;

  void validate() const;
  /// Positions x(t) for every superframe.
  std::vector<double> sample() const;

  /// Outside -> test position -> outside, the pass used in the testbed.
  static Trajectory in_and_out(double speed = 1.0);
};

struct Scenario {
  Geometry geometry;
  ChannelParams channel;
  Trajectory trajectory;

  static Scenario defaults();
  /// Parses a scenario JSON document. Missing sections and fields keep their
  /// defaults; unknown fields and invalid values raise ConfigError.
  static Scenario from_json(std::string_view json);
  std::string to_json() const;
};

/// Free-space style log-distance loss in dB relative to 1 m.
double path_loss_db(double distance_m, double exponent);

/// Deterministic given chan.seed. Labels follow geometry.label_at(x).
MeasurementSet generate(const Geometry& geom, const ChannelParams& chan,
                        const Trajectory& traj, std::string id = "synth");

}  // namespace cellloc
