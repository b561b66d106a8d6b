#include "cellloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>
#include <unordered_set>

#include "cellloc/error.hpp"
#include "cellloc/features.hpp"
#include "rng.hpp"

namespace cellloc {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Geometry

void Geometry::validate() const {
  if (sniffers.empty()) throw ConfigError("geometry: no sniffers");
  if (sniffers.size() > kMaxMaskNodes) throw ConfigError("geometry: too many sniffers");
  if (!(x_test < x_door)) throw ConfigError("geometry: x_test must be < x_door");
  std::unordered_set<std::string> seen;
  for (const auto& s : sniffers) {
    if (s.name.empty() || !seen.insert(s.name).second) {
      throw ConfigError("geometry: sniffer names must be unique and non-empty");
    }
    if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.z)) {
      throw ConfigError("geometry: non-finite sniffer position");
    }
  }
}

std::vector<std::string> Geometry::names() const {
  std::vector<std::string> out;
  out.reserve(sniffers.size());
  for (const auto& s : sniffers) out.push_back(s.name);
  return out;
}

Label Geometry::label_at(double x) const {
  if (x > x_door) return 0;
  if (x <= x_test) return 2;
  return 1;
}

Geometry default_geometry() {
  Geometry g;
  g.sniffers = {
      {"I-E", -13.30, 0.90, 0.64},  {"I-T1", -9.88, -0.35, 3.92},
      {"I-T2", -6.58, -0.35, 3.92}, {"I-T3", -1.60, -0.35, 3.92},
      {"I-DR", -1.55, 3.19, 1.00},  {"I-DL", -1.55, -0.09, 1.00},
      {"O-E", 11.10, 2.02, 1.70},   {"O-M", 6.80, 2.32, 1.84},
      {"O-DR", 2.21, 3.10, 0.99},   {"O-DL", 2.21, 0.00, 1.00},
  };
  g.x_door = 0.0;
  g.x_test = -10.0;
  return g;
}

// ---------------------------------------------------------------------------
// Channel / trajectory

void ChannelParams::validate() const {
  if (!(path_loss_exponent > 0.0)) throw ConfigError("channel: exponent must be > 0");
  if (!(shadow_std_db >= 0.0)) throw ConfigError("channel: shadowing std must be >= 0");
  if (!(node_bias_std_db >= 0.0)) throw ConfigError("channel: node bias std must be >= 0");
  if (!(wall_db >= 0.0)) throw ConfigError("channel: wall attenuation must be >= 0");
  if (shadow_corr && !(*shadow_corr >= 0.0 && *shadow_corr < 1.0)) {
    throw ConfigError("channel: shadowing correlation must be in [0, 1)");
  }
  if (!(dropout_prob >= 0.0 && dropout_prob <= 1.0)) {
    throw ConfigError("channel: dropout probability must be in [0, 1]");
  }
  if (!(carrier_hz > 0.0)) throw ConfigError("channel: carrier must be > 0");
  if (floor_dbm != kMissingLinkDbm) {
    throw ConfigError("channel: dropout floor is fixed at -100 dBm");
  }
  if (!std::isfinite(ref_rssi_dbm)) throw ConfigError("channel: invalid reference RSSI");
}

void Trajectory::validate() const {
  if (waypoints.empty()) throw ConfigError("trajectory: no waypoints");
  if (!(speed > 0.0)) throw ConfigError("trajectory: speed must be > 0");
  if (!(step_s > 0.0)) throw ConfigError("trajectory: step must be > 0");
  for (const auto& w : waypoints) {
    if (!std::isfinite(w.x) || !(w.dwell_s >= 0.0)) {
      throw ConfigError("trajectory: invalid waypoint");
    }
  }
}

std::vector<double> Trajectory::sample() const {
  validate();
  const double max_step = speed * step_s;
  std::vector<double> xs;
  double x = waypoints.front().x;
  xs.push_back(x);
  for (std::size_t w = 0; w < waypoints.size(); ++w) {
    if (w > 0) {
      const double target = waypoints[w].x;
      const double dist = std::abs(target - x);
      const auto steps = static_cast<std::size_t>(std::ceil(dist / max_step));
      const double start = x;
      for (std::size_t s = 1; s <= steps; ++s) {
        // Even spacing keeps every step <= max_step and lands on target.
        x = start + (target - start) * static_cast<double>(s) /
                        static_cast<double>(steps);
        xs.push_back(x);
      }
      x = target;
    }
    const auto hold =
        static_cast<std::size_t>(std::llround(waypoints[w].dwell_s / step_s));
    for (std::size_t s = 0; s < hold; ++s) xs.push_back(x);
  }
  return xs;
}

Trajectory Trajectory::in_and_out(double speed) {
  Trajectory t;
  t.speed = speed;
  t.waypoints = {{10.0, 3.0}, {-11.5, 6.0}, {10.0, 3.0}};
  return t;
}

double path_loss_db(double distance_m, double exponent) {
  return 10.0 * exponent * std::log10(std::max(distance_m, 1.0));
}

// ---------------------------------------------------------------------------
// Generation

MeasurementSet generate(const Geometry& geom, const ChannelParams& chan,
                        const Trajectory& traj, std::string id) {
  geom.validate();
  chan.validate();
  const auto xs = traj.sample();

  const double rho =
      chan.shadow_corr ? *chan.shadow_corr
                       : std::exp(-traj.step_s /
                                  coherence_time(traj.speed, chan.carrier_hz));
  const double innovation = std::sqrt(1.0 - rho * rho);
  const std::size_t n = geom.sniffers.size();

  Rng rng(chan.seed);
  std::vector<double> bias(n), shadow(n);
  for (auto& b : bias) b = chan.node_bias_std_db * rng.normal();
  for (auto& s : shadow) s = chan.shadow_std_db * rng.normal();

  std::vector<RssiFrame> frames;
  frames.reserve(xs.size());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const double x = xs[t];
    RssiFrame f{static_cast<std::int64_t>(t), std::vector<double>(n),
                geom.label_at(x)};
    const bool mn_inside = x <= geom.x_door;
    for (std::size_t k = 0; k < n; ++k) {
      const auto& s = geom.sniffers[k];
      if (t > 0) {
        shadow[k] = rho * shadow[k] + innovation * chan.shadow_std_db * rng.normal();
      }
      const double d = std::sqrt((x - s.x) * (x - s.x) +
                                 (traj.y - s.y) * (traj.y - s.y) +
                                 (traj.z - s.z) * (traj.z - s.z));
      double v = chan.ref_rssi_dbm - path_loss_db(d, chan.path_loss_exponent) -
                 (mn_inside != geom.inside(k) ? chan.wall_db : 0.0) + bias[k] +
                 shadow[k];
      v = chan.quantize_integer ? std::round(v) : std::round(v * 10.0) / 10.0;
      v = std::clamp(v, chan.floor_dbm, kMaxRssiDbm);
      // Draw unconditionally so the stream layout does not depend on p.
      if (rng.uniform() < chan.dropout_prob) v = chan.floor_dbm;
      f.rssi[k] = v;
    }
    frames.push_back(std::move(f));
  }
  return MeasurementSet(std::move(id), geom.names(), std::move(frames));
}

// ---------------------------------------------------------------------------
// Scenario JSON

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& known,
                    const std::string& where) {
  if (!obj.is_object()) throw ConfigError("scenario: '" + where + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!known.count(key)) {
      throw ConfigError("scenario: unknown field '" + where + "." + key + "'");
    }
  }
}

template <class T>
void read_opt(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

Scenario Scenario::defaults() {
  return {default_geometry(), ChannelParams{}, Trajectory::in_and_out()};
}

Scenario Scenario::from_json(std::string_view text) {
  Scenario sc = defaults();
  try {
    const json j = json::parse(text);
    reject_unknown(j, {"geometry", "channel", "trajectory"}, "scenario");
    if (j.contains("geometry")) {
      const auto& g = j.at("geometry");
      reject_unknown(g, {"sniffers", "x_door", "x_test"}, "geometry");
      read_opt(g, "x_door", sc.geometry.x_door);
      read_opt(g, "x_test", sc.geometry.x_test);
      if (g.contains("sniffers")) {
        sc.geometry.sniffers.clear();
        for (const auto& s : g.at("sniffers")) {
          reject_unknown(s, {"name", "x", "y", "z"}, "geometry.sniffers[]");
          sc.geometry.sniffers.push_back({s.at("name").get<std::string>(),
                                          s.at("x").get<double>(),
                                          s.at("y").get<double>(),
                                          s.at("z").get<double>()});
        }
      }
    }
    if (j.contains("channel")) {
      const auto& c = j.at("channel");
      reject_unknown(c,
                     {"ref_rssi_dbm", "path_loss_exponent", "wall_db",
                      "shadow_std_db", "shadow_corr", "carrier_hz",
                      "node_bias_std_db", "dropout_prob", "floor_dbm",
                      "quantize_integer", "seed"},
                     "channel");
      auto& ch = sc.channel;
      read_opt(c, "ref_rssi_dbm", ch.ref_rssi_dbm);
      read_opt(c, "path_loss_exponent", ch.path_loss_exponent);
      read_opt(c, "wall_db", ch.wall_db);
      read_opt(c, "shadow_std_db", ch.shadow_std_db);
      if (c.contains("shadow_corr") && !c.at("shadow_corr").is_null()) {
        ch.shadow_corr = c.at("shadow_corr").get<double>();
      }
      read_opt(c, "carrier_hz", ch.carrier_hz);
      read_opt(c, "node_bias_std_db", ch.node_bias_std_db);
      read_opt(c, "dropout_prob", ch.dropout_prob);
      read_opt(c, "floor_dbm", ch.floor_dbm);
      read_opt(c, "quantize_integer", ch.quantize_integer);
      read_opt(c, "seed", ch.seed);
    }
    if (j.contains("trajectory")) {
      const auto& t = j.at("trajectory");
      reject_unknown(t, {"waypoints", "speed", "y", "z", "step_s"}, "trajectory");
      auto& tr = sc.trajectory;
      read_opt(t, "speed", tr.speed);
      read_opt(t, "y", tr.y);
      read_opt(t, "z", tr.z);
      read_opt(t, "step_s", tr.step_s);
      if (t.contains("waypoints")) {
        tr.waypoints.clear();
        for (const auto& w : t.at("waypoints")) {
          reject_unknown(w, {"x", "dwell_s"}, "trajectory.waypoints[]");
          Trajectory::Waypoint wp;
          wp.x = w.at("x").get<double>();
          read_opt(w, "dwell_s", wp.dwell_s);
          tr.waypoints.push_back(wp);
        }
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  sc.geometry.validate();
  sc.channel.validate();
  sc.trajectory.validate();
  return sc;
}

std::string Scenario::to_json() const {
  json sniffers = json::array();
  for (const auto& s : geometry.sniffers) {
    sniffers.push_back({{"name", s.name}, {"x", s.x}, {"y", s.y}, {"z", s.z}});
  }
  json waypoints = json::array();
  for (const auto& w : trajectory.waypoints) {
    waypoints.push_back({{"x", w.x}, {"dwell_s", w.dwell_s}});
  }
  json j;
  j["geometry"] = {{"sniffers", sniffers},
                   {"x_door", geometry.x_door},
                   {"x_test", geometry.x_test}};
  j["channel"] = {{"ref_rssi_dbm", channel.ref_rssi_dbm},
                  {"path_loss_exponent", channel.path_loss_exponent},
                  {"wall_db", channel.wall_db},
                  {"shadow_std_db", channel.shadow_std_db},
                  {"shadow_corr", channel.shadow_corr ? json(*channel.shadow_corr)
                                                      : json(nullptr)},
                  {"carrier_hz", channel.carrier_hz},
                  {"node_bias_std_db", channel.node_bias_std_db},
                  {"dropout_prob", channel.dropout_prob},
                  {"floor_dbm", channel.floor_dbm},
                  {"quantize_integer", channel.quantize_integer},
                  {"seed", channel.seed}};
  j["trajectory"] = {{"waypoints", waypoints},
                     {"speed", trajectory.speed},
                     {"y", trajectory.y},
                     {"z", trajectory.z},
                     {"step_s", trajectory.step_s}};
  return j.dump(2);
}

}  // namespace cellloc
