#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cpf/cpm.hpp"
#include "cpf/geometry.hpp"
#include "cpf/tracker.hpp"

namespace cpf::sim {

// Deterministic multi-station collective-perception simulator. Stations move
// along waypoint paths, sense pedestrians inside a circular range, track them
// with the intensity filter, exchange encoded messages over directed links
// with one tick of latency, and fuse what they receive. Everything is driven
// by one seeded generator in a fixed draw order, so a scenario plus a seed
// reproduces byte-identical results.

// Pose sample on a station's path; poses between samples interpolate linearly
// (headings along the shorter arc) and clamp outside the sampled interval.
struct TimedPose {
  double time = 0.0;
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

enum class ShareMode : std::uint8_t {
  Tracks,      // publish confirmed tracks
  Detections,  // publish raw sensor detections
};

struct StationSpec {
  std::uint32_t station_id = 0;
  cpm::StationType station_type = cpm::StationType::Vehicle;
  std::vector<TimedPose> waypoints;          // at least one; times strictly increasing
  double localization_position_std = 0.25;   // m, per axis
  double localization_heading_std = 0.00872665;  // rad (0.5 deg)
  double sensor_range = 30.0;                // m, circular field of view
  double sensor_noise_std = 0.2;             // m, per axis of each detection
  // Detection model the tracker assumes inside the field of view. The
  // simulated sensor itself reports every in-range pedestrian each tick, so
  // this stays near one; lowering it adds missed-detection caution (and
  // recorded-covariance inflation) without changing what the sensor emits.
  double detection_probability = 0.99;
  ShareMode share_mode = ShareMode::Tracks;
};

// Piecewise-constant velocity segment: active from start_time until the next
// segment begins. The first segment must start at or before time zero.
struct VelocitySegment {
  double start_time = 0.0;
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();  // m/s
};

struct PedestrianSpec {
  Eigen::Vector2d initial_position = Eigen::Vector2d::Zero();
  std::vector<VelocitySegment> velocity_profile;  // at least one segment
  double process_noise_std = 0.0;  // m/s of per-tick velocity jitter
};

// Directed communication link; messages flow from_station -> to_station with
// one tick of latency.
struct Link {
  std::uint32_t from_station = 0;
  std::uint32_t to_station = 0;
};

// Suppresses one station's detections of one pedestrian over [start, end).
// The station's tracker is unaware of the mask, mimicking a physical occluder.
struct OcclusionWindow {
  std::uint32_t station_id = 0;
  std::size_t pedestrian = 0;
  double start_time = 0.0;
  double end_time = 0.0;
};

// Plain-number tracker tuning shared by every station (the per-station
// detection model is derived from sensor_range and detection_probability).
struct TrackerSettings {
  double process_noise_velocity_std = 1.0;
  double clutter_density = 1e-6;
  double birth_weight = 0.1;
  double birth_velocity_std = 2.0;
  double prune_threshold = 1e-4;
  double merge_mahalanobis_threshold = 3.0;
  double alias_conflict_merge_distance = 2.0;
  double merge_distance_floor = 1.5;
  std::size_t max_tracks = 100;
  double confirm_weight = 0.5;
  double survival_probability = 1.0;
  double fusion_gate_mahalanobis2 = 25.0;

  [[nodiscard]] tracking::TrackerConfig to_config() const;
};

struct Scenario {
  std::string name;
  std::vector<StationSpec> stations;
  std::vector<PedestrianSpec> pedestrians;
  double duration = 10.0;   // s
  double tick_rate = 10.0;  // Hz
  std::vector<Link> topology;
  std::vector<OcclusionWindow> occlusions;
  TrackerSettings tracker;
  std::uint64_t rng_seed = 0;

  [[nodiscard]] std::size_t tick_count() const;
  [[nodiscard]] double tick_duration() const { return 1.0 / tick_rate; }
  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// One confirmed track at one station at one tick, expressed in the world
// frame (mapped out of the station frame through the true pose).
struct TrackObservation {
  std::uint64_t local_id = 0;
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  Eigen::Matrix4d cov = Eigen::Matrix4d::Identity();
  double weight = 0.0;
  double trace_xytheta = 0.0;  // tr over (x, y, heading); see trace_xytheta()
  int pedestrian = -1;         // nearest true pedestrian within the gate, else -1
  double position_error = std::numeric_limits<double>::quiet_NaN();  // m
  double nees = std::numeric_limits<double>::quiet_NaN();  // 2-dof position NEES
};

struct StationTickRecord {
  std::uint32_t station_id = 0;
  std::vector<TrackObservation> tracks;  // confirmed tracks only
  std::size_t pool_size = 0;             // all hypotheses, confirmed or not
};

struct TickRecord {
  double time = 0.0;
  std::vector<StationTickRecord> stations;  // scenario order, one per station
};

// Association gate for ground-truth matching in the records, m.
inline constexpr double kAssociationGate = 2.5;

// Detection probability stations assume for their peers' sensors inside the
// advertised detection area (outside it is zero).
inline constexpr double kRemoteDetectionProbability = 0.9;

// Scalar uncertainty of a track over position and heading: cov(x,x) +
// cov(y,y) + var(heading), with the heading variance obtained by propagating
// the velocity block through atan2's Jacobian and capped at pi^2/3 (the
// variance of a uniformly random angle) for near-zero speeds.
[[nodiscard]] double trace_xytheta(const Eigen::Vector4d& mean, const Eigen::Matrix4d& cov);

// Runs the scenario tick loop:
//   1. advance pedestrian truth with seeded velocity jitter;
//   2. draw each station's noisy self-pose and noisy in-range detections;
//   3. per station: re-anchor tracks to the current body frame, predict,
//      update with the station's own detections;
//   4. encode one message per station (tracks or detections per share_mode)
//      and hand it to the topology links;
//   5. deliver the payloads sent on the previous tick: decode, transform into
//      the receiver frame (inflating by both poses' uncertainty), then apply
//      detection payloads through the measurement-update path and track
//      payloads through alias-matched fusion, senders in ascending id order;
//   6. record confirmed tracks in the world frame.
// Throws std::invalid_argument if the scenario fails validate().
[[nodiscard]] std::vector<TickRecord> run_scenario(const Scenario& scenario);

// Nine static pedestrians on a 3x3 grid watched by four vehicles and one
// roadside unit whose ranges slice the grid into nine distinct coverage
// combinations. Configuration 'A' has the roadside unit publish its tracks
// like every vehicle; 'B' has it publish raw detections instead.
[[nodiscard]] Scenario build_coverage_grid_scenario(char configuration, std::uint64_t seed);

// Two vehicles approaching an intersection, two walkers hidden from station 1
// by an occluder until t = 6 s, and a jogger that outruns station 1's sensor
// range; bidirectional communication.
[[nodiscard]] Scenario build_occlusion_scenario(std::uint64_t seed);

}  // namespace cpf::sim
