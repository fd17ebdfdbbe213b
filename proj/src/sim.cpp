#include "cpf/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>

#include "cpf/ci.hpp"
#include "cpf/t2t.hpp"

namespace cpf::sim {

namespace {

constexpr double kPi = 3.14159265358979323846;

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  throw std::invalid_argument("scenario." + field + ": " + why);
}

void check_finite(double v, const std::string& field) {
  if (!std::isfinite(v)) {
    invalid(field, "must be finite");
  }
}

void check_nonneg(double v, const std::string& field) {
  check_finite(v, field);
  if (v < 0.0) {
    invalid(field, "must be >= 0");
  }
}

void check_positive(double v, const std::string& field) {
  check_finite(v, field);
  if (v <= 0.0) {
    invalid(field, "must be > 0");
  }
}

// Linear waypoint interpolation; headings travel the shorter arc and the path
// holds its endpoints outside the sampled time interval.
geom::Pose2D pose_at(const std::vector<TimedPose>& waypoints, double t) {
  geom::Pose2D pose;
  pose.cov.setZero();
  if (t <= waypoints.front().time) {
    const TimedPose& w = waypoints.front();
    pose.x = w.x;
    pose.y = w.y;
    pose.theta = geom::normalize_angle(w.theta);
    return pose;
  }
  if (t >= waypoints.back().time) {
    const TimedPose& w = waypoints.back();
    pose.x = w.x;
    pose.y = w.y;
    pose.theta = geom::normalize_angle(w.theta);
    return pose;
  }
  std::size_t hi = 1;
  while (waypoints[hi].time < t) {
    ++hi;
  }
  const TimedPose& a = waypoints[hi - 1];
  const TimedPose& b = waypoints[hi];
  const double f = (t - a.time) / (b.time - a.time);
  pose.x = a.x + f * (b.x - a.x);
  pose.y = a.y + f * (b.y - a.y);
  pose.theta = geom::normalize_angle(a.theta + f * geom::normalize_angle(b.theta - a.theta));
  return pose;
}

Eigen::Vector2d velocity_at(const PedestrianSpec& spec, double t) {
  Eigen::Vector2d v = spec.velocity_profile.front().velocity;
  for (const VelocitySegment& segment : spec.velocity_profile) {
    if (segment.start_time <= t) {
      v = segment.velocity;
    } else {
      break;
    }
  }
  return v;
}

// Pose of frame `from` expressed in frame `to`, both given in world
// coordinates: the rigid transform that re-anchors state between two body
// frames of one station across a tick. Exact (zero covariance) because a
// station knows its own inter-tick motion.
geom::Pose2D relative_pose(const geom::Pose2D& from, const geom::Pose2D& to) {
  geom::Pose2D rel;
  rel.cov.setZero();
  const Eigen::Rotation2Dd r_to(to.theta);
  const Eigen::Vector2d offset = r_to.toRotationMatrix().transpose() *
                                 (Eigen::Vector2d(from.x, from.y) - Eigen::Vector2d(to.x, to.y));
  rel.x = offset.x();
  rel.y = offset.y();
  rel.theta = geom::normalize_angle(from.theta - to.theta);
  return rel;
}

geom::Pose2D identity_pose() {
  geom::Pose2D pose;
  pose.cov.setZero();
  return pose;
}

// Per-station mutable state across the tick loop.
struct StationRuntime {
  const StationSpec* spec = nullptr;
  tracking::TrackerConfig config;
  std::vector<tracking::LocalTrack> tracks;
  tracking::IdAllocator ids;
  geom::Pose2D true_pose;
  geom::Pose2D prev_true_pose;
  geom::Pose2D believed_pose;
  std::vector<tracking::Detection> detections;  // this tick, body frame
  std::vector<std::uint8_t> outbox;             // encoded this tick
  // Payloads sent to this station on the previous tick: (sender id, bytes).
  std::vector<std::pair<std::uint32_t, std::vector<std::uint8_t>>> mailbox;
};

bool occluded(const Scenario& scenario, std::uint32_t station_id, std::size_t pedestrian,
              double t) {
  for (const OcclusionWindow& w : scenario.occlusions) {
    if (w.station_id == station_id && w.pedestrian == pedestrian && w.start_time <= t &&
        t < w.end_time) {
      return true;
    }
  }
  return false;
}

// Remaps every track of one station from the previous tick's body frame into
// the current one (means move, covariances rotate; ids and weights persist).
void reanchor_tracks(StationRuntime& st) {
  const geom::Pose2D rel = relative_pose(st.prev_true_pose, st.true_pose);
  const geom::Pose2D target = identity_pose();
  for (tracking::LocalTrack& track : st.tracks) {
    geom::GaussianEstimate est{track.mean, track.cov};
    const geom::GaussianEstimate moved = geom::transform_estimate(rel, est, target);
    track.mean = moved.mean;
    track.cov = moved.cov;
  }
}

// Builds this tick's outgoing message for one station.
std::vector<std::uint8_t> encode_share(const StationRuntime& st, double t) {
  cpm::CpmBuildOptions options;
  options.station_id = st.spec->station_id;
  options.generation_time = static_cast<std::uint64_t>(std::llround(t * 1000.0));
  options.station_type = st.spec->station_type;
  options.object_type = cpm::ObjectType::Pedestrian;
  cpm::SensorInfoContainer sensor;
  sensor.sensor_id = 0;
  sensor.sensor_type = cpm::SensorType::Fused;
  sensor.area.shape = cpm::DetectionArea::Shape::Circle;
  sensor.area.center.setZero();
  sensor.area.radius = st.spec->sensor_range;
  options.sensors = {sensor};

  const cpm::CpmBuildResult built =
      st.spec->share_mode == ShareMode::Tracks
          ? cpm::tracks_to_cpm(st.tracks, st.believed_pose, st.config, options)
          : cpm::detections_to_cpm(st.detections, st.believed_pose, options);
  return cpm::encode(built.cpm);
}

// Everything the receiver extracts from one decoded payload.
struct IncomingShare {
  std::uint32_t sender_id = 0;
  std::vector<tracking::Detection> detections;     // receiver frame
  std::vector<tracking::RemoteTrack> tracks;       // receiver frame
  t2t::RemoteDetectionModel model;                 // receiver frame
};

// Transforms one payload into the receiver's frame. Track means are first
// extrapolated across the one-tick transport delay and inflated by one step
// of process noise.
//
// The two object kinds carry different uncertainty budgets. Shared *tracks*
// pick up both the sender's transmitted pose uncertainty and the receiver's
// own localization uncertainty: a track is a persistent estimate whose frame
// alignment error would otherwise be double-counted as observation noise by
// repeated covariance-intersection updates, so it must be stated up front.
// Shared *detections* are single-shot measurements consumed once by the
// tracker's update step, which already averages independent per-tick errors;
// they carry the sender's pose uncertainty only, with the receiver's believed
// frame treated as the working reference. The receiver's own localization
// wobble still perturbs the transformed means — it is real — but it is left
// out of the stated covariance, trading a modest optimism in the reported
// uncertainty (visible as elevated but bounded NEES) for detection fusion
// that can actually average down to the sensor floor.
IncomingShare ingest_payload(const StationRuntime& receiver, std::uint32_t sender_id,
                             const cpm::Cpm& message, double dt) {
  IncomingShare share;
  share.sender_id = sender_id;
  const geom::Pose2D& sender_pose = message.management.reference_pose;

  geom::Pose2D reference_frame = receiver.believed_pose;
  reference_frame.cov.setZero();

  for (const cpm::PerceivedObjectContainer& object : message.perceived_objects) {
    if (object.abstraction == cpm::ObjectAbstraction::Detection) {
      geom::GaussianEstimate est{object.mean, object.cov};
      const geom::GaussianEstimate local =
          geom::transform_estimate(sender_pose, est, reference_frame);
      tracking::Detection detection;
      detection.mean = local.mean.head<2>();
      detection.cov = local.cov.topLeftCorner<2, 2>();
      detection.sensor_id = sender_id;
      share.detections.push_back(std::move(detection));
    } else {
      geom::GaussianEstimate est{object.mean, object.cov};
      if (est.mean.size() == 4) {
        est.mean.head<2>() += est.mean.tail<2>() * dt;
        est.cov += tracking::cv_process_noise(dt, receiver.config.process_noise_velocity_std);
      }
      const geom::GaussianEstimate local =
          geom::transform_estimate(sender_pose, est, receiver.believed_pose);
      tracking::RemoteTrack track;
      track.mean = local.mean;
      track.cov = local.cov;
      track.station_id = sender_id;
      track.remote_track_id = object.object_id;
      share.tracks.push_back(std::move(track));
    }
  }

  // The sender's detection area, re-centered into the receiver's frame.
  if (!message.sensors.empty()) {
    const cpm::SensorInfoContainer& sensor = message.sensors.front();
    const Eigen::Rotation2Dd r_recv(receiver.believed_pose.theta);
    const Eigen::Rotation2Dd r_send(sender_pose.theta);
    const Eigen::Vector2d center_world =
        sender_pose.translation() + r_send.toRotationMatrix() * sensor.area.center;
    const Eigen::Vector2d center_local =
        r_recv.toRotationMatrix().transpose() * (center_world - receiver.believed_pose.translation());
    share.model =
        t2t::RemoteDetectionModel::circle(center_local, sensor.area.radius,
                                          kRemoteDetectionProbability);
  } else {
    // No advertised coverage: the sender cannot vouch for misses anywhere.
    share.model = t2t::RemoteDetectionModel::constant(0.0);
  }
  return share;
}

void record_station(const StationRuntime& st, const std::vector<Eigen::Vector2d>& pedestrians,
                    StationTickRecord& out) {
  out.station_id = st.spec->station_id;
  out.pool_size = st.tracks.size();
  const geom::Pose2D target = identity_pose();
  for (const tracking::LocalTrack& track : st.tracks) {
    if (track.weight < st.config.confirm_weight) {
      continue;
    }
    geom::GaussianEstimate est{track.mean, track.cov};
    const geom::GaussianEstimate world = geom::transform_estimate(st.true_pose, est, target);

    TrackObservation obs;
    obs.local_id = track.local_id;
    obs.mean = world.mean;
    obs.cov = world.cov;
    obs.weight = track.weight;
    obs.trace_xytheta = trace_xytheta(obs.mean, obs.cov);

    double best = kAssociationGate;
    for (std::size_t p = 0; p < pedestrians.size(); ++p) {
      const double d = (pedestrians[p] - obs.mean.head<2>()).norm();
      if (d < best) {
        best = d;
        obs.pedestrian = static_cast<int>(p);
      }
    }
    if (obs.pedestrian >= 0) {
      obs.position_error = best;
      const Eigen::Vector2d e =
          obs.mean.head<2>() - pedestrians[static_cast<std::size_t>(obs.pedestrian)];
      Eigen::LLT<Eigen::Matrix2d> llt(obs.cov.topLeftCorner<2, 2>());
      if (llt.info() == Eigen::Success) {
        obs.nees = e.dot(llt.solve(e));
      }
    }
    out.tracks.push_back(std::move(obs));
  }
}

}  // namespace

tracking::TrackerConfig TrackerSettings::to_config() const {
  tracking::TrackerConfig config;
  config.process_noise_velocity_std = process_noise_velocity_std;
  config.clutter_density = clutter_density;
  config.birth_weight = birth_weight;
  config.birth_velocity_std = birth_velocity_std;
  config.prune_threshold = prune_threshold;
  config.merge_mahalanobis_threshold = merge_mahalanobis_threshold;
  config.alias_conflict_merge_distance = alias_conflict_merge_distance;
  config.merge_distance_floor = merge_distance_floor;
  config.max_tracks = max_tracks;
  config.confirm_weight = confirm_weight;
  config.survival_probability = survival_probability;
  config.fusion_gate_mahalanobis2 = fusion_gate_mahalanobis2;
  return config;
}

std::size_t Scenario::tick_count() const {
  return static_cast<std::size_t>(std::llround(duration * tick_rate));
}

void Scenario::validate() const {
  check_positive(tick_rate, "tick_rate");
  check_nonneg(duration, "duration");

  for (std::size_t i = 0; i < stations.size(); ++i) {
    const StationSpec& s = stations[i];
    const std::string prefix = "stations[" + std::to_string(i) + "].";
    for (std::size_t j = 0; j < i; ++j) {
      if (stations[j].station_id == s.station_id) {
        invalid(prefix + "station_id", "duplicate station id");
      }
    }
    if (s.waypoints.empty()) {
      invalid(prefix + "waypoints", "at least one waypoint required");
    }
    for (std::size_t w = 0; w < s.waypoints.size(); ++w) {
      const std::string wp = prefix + "waypoints[" + std::to_string(w) + "]";
      check_finite(s.waypoints[w].time, wp + ".time");
      check_finite(s.waypoints[w].x, wp + ".x");
      check_finite(s.waypoints[w].y, wp + ".y");
      check_finite(s.waypoints[w].theta, wp + ".theta");
      if (w > 0 && s.waypoints[w].time <= s.waypoints[w - 1].time) {
        invalid(wp + ".time", "waypoint times must strictly increase");
      }
    }
    check_nonneg(s.localization_position_std, prefix + "localization_position_std");
    check_nonneg(s.localization_heading_std, prefix + "localization_heading_std");
    check_positive(s.sensor_range, prefix + "sensor_range");
    check_nonneg(s.sensor_noise_std, prefix + "sensor_noise_std");
    check_finite(s.detection_probability, prefix + "detection_probability");
    if (s.detection_probability < 0.0 || s.detection_probability > 1.0) {
      invalid(prefix + "detection_probability", "must be in [0, 1]");
    }
  }

  for (std::size_t i = 0; i < pedestrians.size(); ++i) {
    const PedestrianSpec& p = pedestrians[i];
    const std::string prefix = "pedestrians[" + std::to_string(i) + "].";
    check_finite(p.initial_position.x(), prefix + "initial_position.x");
    check_finite(p.initial_position.y(), prefix + "initial_position.y");
    if (p.velocity_profile.empty()) {
      invalid(prefix + "velocity_profile", "at least one segment required");
    }
    if (p.velocity_profile.front().start_time > 0.0) {
      invalid(prefix + "velocity_profile[0].start_time", "first segment must start at or before 0");
    }
    for (std::size_t v = 0; v < p.velocity_profile.size(); ++v) {
      const std::string seg = prefix + "velocity_profile[" + std::to_string(v) + "]";
      check_finite(p.velocity_profile[v].start_time, seg + ".start_time");
      check_finite(p.velocity_profile[v].velocity.x(), seg + ".velocity.x");
      check_finite(p.velocity_profile[v].velocity.y(), seg + ".velocity.y");
      if (v > 0 && p.velocity_profile[v].start_time <= p.velocity_profile[v - 1].start_time) {
        invalid(seg + ".start_time", "segment start times must strictly increase");
      }
    }
    check_nonneg(p.process_noise_std, prefix + "process_noise_std");
  }

  auto station_exists = [&](std::uint32_t id) {
    return std::any_of(stations.begin(), stations.end(),
                       [id](const StationSpec& s) { return s.station_id == id; });
  };
  for (std::size_t i = 0; i < topology.size(); ++i) {
    const std::string prefix = "topology[" + std::to_string(i) + "].";
    if (!station_exists(topology[i].from_station)) {
      invalid(prefix + "from_station", "unknown station id");
    }
    if (!station_exists(topology[i].to_station)) {
      invalid(prefix + "to_station", "unknown station id");
    }
    if (topology[i].from_station == topology[i].to_station) {
      invalid(prefix + "to_station", "link endpoints must differ");
    }
  }

  for (std::size_t i = 0; i < occlusions.size(); ++i) {
    const std::string prefix = "occlusions[" + std::to_string(i) + "].";
    if (!station_exists(occlusions[i].station_id)) {
      invalid(prefix + "station_id", "unknown station id");
    }
    if (occlusions[i].pedestrian >= pedestrians.size()) {
      invalid(prefix + "pedestrian", "pedestrian index out of range");
    }
    check_finite(occlusions[i].start_time, prefix + "start_time");
    check_finite(occlusions[i].end_time, prefix + "end_time");
    if (occlusions[i].end_time <= occlusions[i].start_time) {
      invalid(prefix + "end_time", "must exceed start_time");
    }
  }

  check_nonneg(tracker.process_noise_velocity_std, "tracker.process_noise_velocity_std");
  check_nonneg(tracker.clutter_density, "tracker.clutter_density");
  check_nonneg(tracker.birth_weight, "tracker.birth_weight");
  check_nonneg(tracker.birth_velocity_std, "tracker.birth_velocity_std");
  check_nonneg(tracker.prune_threshold, "tracker.prune_threshold");
  check_finite(tracker.merge_mahalanobis_threshold, "tracker.merge_mahalanobis_threshold");
  check_nonneg(tracker.alias_conflict_merge_distance, "tracker.alias_conflict_merge_distance");
  check_nonneg(tracker.merge_distance_floor, "tracker.merge_distance_floor");
  if (tracker.max_tracks == 0) {
    invalid("tracker.max_tracks", "must be >= 1");
  }
  check_nonneg(tracker.confirm_weight, "tracker.confirm_weight");
  check_finite(tracker.survival_probability, "tracker.survival_probability");
  if (tracker.survival_probability < 0.0 || tracker.survival_probability > 1.0) {
    invalid("tracker.survival_probability", "must be in [0, 1]");
  }
  check_finite(tracker.fusion_gate_mahalanobis2, "tracker.fusion_gate_mahalanobis2");
}

double trace_xytheta(const Eigen::Vector4d& mean, const Eigen::Matrix4d& cov) {
  constexpr double kMaxHeadingVar = kPi * kPi / 3.0;
  const double speed2 = mean.tail<2>().squaredNorm();
  double heading_var = kMaxHeadingVar;
  if (speed2 > 1e-4) {
    // heading = atan2(vy, vx); d(heading)/d(vx, vy) = (-vy, vx) / speed^2.
    const Eigen::Vector2d j(-mean(3) / speed2, mean(2) / speed2);
    heading_var = std::min(kMaxHeadingVar, j.dot(cov.bottomRightCorner<2, 2>() * j));
  }
  return cov(0, 0) + cov(1, 1) + heading_var;
}

std::vector<TickRecord> run_scenario(const Scenario& scenario) {
  scenario.validate();

  std::mt19937_64 rng(scenario.rng_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double dt = scenario.tick_duration();
  const std::size_t ticks = scenario.tick_count();

  std::vector<Eigen::Vector2d> pedestrians;
  pedestrians.reserve(scenario.pedestrians.size());
  for (const PedestrianSpec& p : scenario.pedestrians) {
    pedestrians.push_back(p.initial_position);
  }

  std::vector<StationRuntime> stations(scenario.stations.size());
  for (std::size_t i = 0; i < stations.size(); ++i) {
    StationRuntime& st = stations[i];
    st.spec = &scenario.stations[i];
    st.config = scenario.tracker.to_config();
    const double range = st.spec->sensor_range;
    const double p_detect = st.spec->detection_probability;
    st.config.detection_probability = [range, p_detect](const Eigen::Vector4d& state) {
      return state.head<2>().norm() <= range ? p_detect : 0.0;
    };
    st.true_pose = pose_at(st.spec->waypoints, 0.0);
    st.prev_true_pose = st.true_pose;
  }
  auto station_index = [&](std::uint32_t id) -> std::size_t {
    for (std::size_t i = 0; i < stations.size(); ++i) {
      if (stations[i].spec->station_id == id) {
        return i;
      }
    }
    return stations.size();
  };

  std::vector<TickRecord> records;
  records.reserve(ticks);

  for (std::size_t k = 0; k < ticks; ++k) {
    const double t_prev = static_cast<double>(k) * dt;
    const double t = static_cast<double>(k + 1) * dt;

    // 1. Pedestrian truth: commanded velocity plus one tick of jitter.
    for (std::size_t p = 0; p < pedestrians.size(); ++p) {
      const PedestrianSpec& spec = scenario.pedestrians[p];
      const Eigen::Vector2d jitter(gauss(rng), gauss(rng));
      pedestrians[p] += (velocity_at(spec, t_prev) + spec.process_noise_std * jitter) * dt;
    }

    // 2. Station poses and detections.
    for (StationRuntime& st : stations) {
      st.prev_true_pose = st.true_pose;
      st.true_pose = pose_at(st.spec->waypoints, t);

      const double gx = gauss(rng), gy = gauss(rng), gt = gauss(rng);
      st.believed_pose.x = st.true_pose.x + st.spec->localization_position_std * gx;
      st.believed_pose.y = st.true_pose.y + st.spec->localization_position_std * gy;
      st.believed_pose.theta =
          geom::normalize_angle(st.true_pose.theta + st.spec->localization_heading_std * gt);
      st.believed_pose.cov.setZero();
      const double pos_var = st.spec->localization_position_std * st.spec->localization_position_std;
      const double hdg_var = st.spec->localization_heading_std * st.spec->localization_heading_std;
      st.believed_pose.cov(0, 0) = pos_var;
      st.believed_pose.cov(1, 1) = pos_var;
      st.believed_pose.cov(2, 2) = hdg_var;

      st.detections.clear();
      const Eigen::Matrix2d rotation = st.true_pose.rotation();
      for (std::size_t p = 0; p < pedestrians.size(); ++p) {
        const Eigen::Vector2d offset = pedestrians[p] - st.true_pose.translation();
        if (offset.norm() > st.spec->sensor_range ||
            occluded(scenario, st.spec->station_id, p, t)) {
          continue;
        }
        const Eigen::Vector2d noise(gauss(rng), gauss(rng));
        tracking::Detection detection;
        detection.mean = rotation.transpose() * offset + st.spec->sensor_noise_std * noise;
        detection.cov =
            st.spec->sensor_noise_std * st.spec->sensor_noise_std * Eigen::Matrix2d::Identity();
        detection.sensor_id = st.spec->station_id;
        st.detections.push_back(std::move(detection));
      }
    }

    // 3. Local tracking: re-anchor to the new body frame, predict, update.
    for (StationRuntime& st : stations) {
      if (k > 0) {
        reanchor_tracks(st);
      }
      tracking::predict(st.tracks, dt, st.config);
      tracking::update_with_detections(st.tracks, st.detections, st.config, st.ids);
    }

    // 4. Encode this tick's messages.
    for (StationRuntime& st : stations) {
      st.outbox = encode_share(st, t);
    }

    // 5. Consume what arrived (sent on the previous tick): detection payloads
    // through the measurement path, track payloads through alias fusion, both
    // in ascending sender order.
    for (StationRuntime& st : stations) {
      std::stable_sort(st.mailbox.begin(), st.mailbox.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      std::vector<IncomingShare> shares;
      shares.reserve(st.mailbox.size());
      for (const auto& [sender_id, payload] : st.mailbox) {
        const cpm::DecodeResult decoded = cpm::decode(payload);
        if (!cpm::ok(decoded)) {
          continue;  // self-produced payloads cannot be malformed
        }
        shares.push_back(ingest_payload(st, sender_id, cpm::value(decoded), dt));
      }
      st.mailbox.clear();

      for (const IncomingShare& share : shares) {
        if (share.detections.empty()) {
          continue;
        }
        tracking::TrackerConfig remote_config = st.config;
        remote_config.detection_probability = [model = share.model](const Eigen::Vector4d& x) {
          return model.at(x.head<2>());
        };
        tracking::update_with_detections(st.tracks, share.detections, remote_config, st.ids);
      }

      std::vector<t2t::StationBatch> batches;
      for (IncomingShare& share : shares) {
        if (share.tracks.empty()) {
          continue;
        }
        t2t::StationBatch batch;
        batch.station_id = share.sender_id;
        batch.remotes = std::move(share.tracks);
        batch.model = share.model;
        batches.push_back(std::move(batch));
      }
      if (!batches.empty()) {
        (void)t2t::fuse_all_stations(st.tracks, batches, st.config, st.ids);
      }
    }

    // Hand this tick's messages to the links; they arrive next tick.
    for (const Link& link : scenario.topology) {
      const std::size_t from = station_index(link.from_station);
      const std::size_t to = station_index(link.to_station);
      stations[to].mailbox.emplace_back(link.from_station, stations[from].outbox);
    }

    // 6. Record confirmed tracks in the world frame.
    TickRecord record;
    record.time = t;
    record.stations.resize(stations.size());
    for (std::size_t i = 0; i < stations.size(); ++i) {
      record_station(stations[i], pedestrians, record.stations[i]);
    }
    records.push_back(std::move(record));
  }
  return records;
}

Scenario build_coverage_grid_scenario(char configuration, std::uint64_t seed) {
  if (configuration != 'A' && configuration != 'B') {
    throw std::invalid_argument("configuration must be 'A' or 'B'");
  }

  Scenario scenario;
  scenario.name = configuration == 'A' ? "coverage-grid-A" : "coverage-grid-B";
  scenario.duration = 10.0;
  scenario.tick_rate = 10.0;
  scenario.rng_seed = seed;
  scenario.tracker.process_noise_velocity_std = 1.0;
  // Scenario-tuned hypothesis bookkeeping. A station that temporarily drops a
  // pedestrian from its messages weights the listeners' tracks down by 1-p_D
  // per silent covering station per tick, so with three overlapping stations a
  // track must out-climb a 100x-per-tick crush to re-confirm. The climb rate
  // of a detected track is capped at p_D*q/(clutter+birth_weight), so the
  // default birth weight (0.1) caps it near 30x and two simultaneously silent
  // stations become a self-sustaining deadlock: nobody re-confirms because
  // nobody else reports. A 0.01 birth weight raises the cap past the
  // two-station crush while leaving confirmation speed unchanged (the
  // post-update weight of a newborn is invariant to the birth scale). The
  // lower prune floor keeps one fusion cycle's worth of multiply-decayed
  // birth copies alive so re-binding can complete.
  scenario.tracker.birth_weight = 0.01;
  scenario.tracker.prune_threshold = 1e-5;

  // Pedestrian (r, c) stands at (5c, -5r): a 3x3 grid at 5 m spacing whose
  // top-left corner sits at the origin.
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      PedestrianSpec ped;
      ped.initial_position = {5.0 * c, -5.0 * r};
      ped.velocity_profile = {{0.0, Eigen::Vector2d::Zero()}};
      ped.process_noise_std = 1.0;
      scenario.pedestrians.push_back(std::move(ped));
    }
  }

  // Sensor radii slice the grid so that column coverage comes from the two
  // westward stations and row coverage from the three northward vehicles:
  //   column 0: vehicle 1 + unit 5   row 0: vehicles 2, 3, 4
  //   column 1: unit 5               row 1: vehicles 2, 3
  //   column 2: (neither)            row 2: vehicle 2
  // giving each pedestrian a distinct combination. Radii fall midway between
  // the nearest in- and out-of-coverage pedestrians (margins > 2 m against
  // the random walk). Stations sit tens of meters from the grid, not
  // hundreds: a receiver's heading uncertainty enters every ingested object
  // scaled by the lever arm to the target, so the listening vehicle's
  // distance to the grid sets the floor on what fusion can achieve there.
  auto station = [](std::uint32_t id, double x, double y, double range,
                    cpm::StationType type) {
    StationSpec s;
    s.station_id = id;
    s.station_type = type;
    s.waypoints = {{0.0, x, y, 0.0}};
    s.sensor_range = range;
    s.localization_position_std = 0.25;
    s.localization_heading_std = 0.00872665;  // 0.5 deg
    s.sensor_noise_std = 0.2;
    s.share_mode = ShareMode::Tracks;
    return s;
  };
  scenario.stations.push_back(station(1, -20.0, -5.0, 22.8, cpm::StationType::Vehicle));
  scenario.stations.push_back(station(2, 5.0, 25.0, 42.0, cpm::StationType::Vehicle));
  scenario.stations.push_back(station(3, 5.0, 30.0, 37.7, cpm::StationType::Vehicle));
  scenario.stations.push_back(station(4, 5.0, 35.0, 37.7, cpm::StationType::Vehicle));

  StationSpec irsu = station(5, -25.0, -5.0, 32.7, cpm::StationType::RoadsideUnit);
  irsu.localization_position_std = 0.005;
  irsu.localization_heading_std = 1e-9;
  irsu.share_mode = configuration == 'A' ? ShareMode::Tracks : ShareMode::Detections;
  scenario.stations.push_back(std::move(irsu));

  // Full-mesh vehicle-to-vehicle links; the roadside unit only transmits.
  for (std::uint32_t a = 1; a <= 4; ++a) {
    for (std::uint32_t b = 1; b <= 4; ++b) {
      if (a != b) {
        scenario.topology.push_back({a, b});
      }
    }
  }
  for (std::uint32_t b = 1; b <= 4; ++b) {
    scenario.topology.push_back({5, b});
  }
  return scenario;
}

Scenario build_occlusion_scenario(std::uint64_t seed) {
  Scenario scenario;
  scenario.name = "occlusion-intersection";
  scenario.duration = 14.0;
  scenario.tick_rate = 10.0;
  scenario.rng_seed = seed;
  scenario.tracker.process_noise_velocity_std = 0.5;

  StationSpec ego;
  ego.station_id = 1;
  ego.station_type = cpm::StationType::Vehicle;
  ego.waypoints = {{0.0, -14.0, -3.0, 0.0}, {14.0, 7.0, -3.0, 0.0}};  // 1.5 m/s eastbound
  ego.sensor_range = 16.0;
  scenario.stations.push_back(std::move(ego));

  StationSpec peer;
  peer.station_id = 2;
  peer.station_type = cpm::StationType::Vehicle;
  peer.waypoints = {{0.0, 3.0, -30.0, 1.5707963267948966},
                    {14.0, 3.0, -9.0, 1.5707963267948966}};  // 1.5 m/s northbound
  peer.sensor_range = 45.0;
  scenario.stations.push_back(std::move(peer));

  auto walker = [](double x, double y, double vx, double vy) {
    PedestrianSpec p;
    p.initial_position = {x, y};
    p.velocity_profile = {{0.0, Eigen::Vector2d(vx, vy)}};
    p.process_noise_std = 0.5;
    return p;
  };
  scenario.pedestrians.push_back(walker(-2.0, 8.0, 0.0, -1.2));  // walker behind the occluder
  scenario.pedestrians.push_back(walker(2.0, 10.0, 0.0, -1.2));  // second hidden walker
  scenario.pedestrians.push_back(walker(-6.0, -1.0, 2.8, 0.0));  // jogger outrunning station 1

  // A building blocks station 1's view of both walkers until t = 6 s.
  scenario.occlusions.push_back({1, 0, 0.0, 6.0});
  scenario.occlusions.push_back({1, 1, 0.0, 6.0});

  scenario.topology = {{1, 2}, {2, 1}};
  return scenario;
}

}  // namespace cpf::sim
