#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace cpf::tracking {

/// (station_id, track_id) pair under which a local track is known to a remote
/// station. A track carries at most one alias per station.
struct AliasId {
  std::uint32_t station_id = 0;
  std::uint64_t remote_track_id = 0;
  /// Consecutive fusion batches from station_id that no longer reported
  /// remote_track_id. Zero while the binding is live; at 2 or more the entry
  /// is treated as stale (the sender has retired the id), making the track
  /// eligible for re-binding and exempting the entry from identity checks.
  /// One-batch dropouts keep the binding so the next report re-matches
  /// instantly.
  std::uint8_t missed_count = 0;

  static constexpr std::uint8_t kStaleAfter = 2;  ///< misses before re-binding opens
  static constexpr std::uint8_t kDropAfter = 4;   ///< misses before the entry is removed

  [[nodiscard]] bool stale() const { return missed_count >= kStaleAfter; }

  friend bool operator==(const AliasId& a, const AliasId& b) {
    return a.station_id == b.station_id && a.remote_track_id == b.remote_track_id;
  }
};

/// Weighted Gaussian hypothesis over (x, y, vx, vy) in the owning station's
/// frame, plus the identity bookkeeping that lets other stations refer to it.
/// The weight is the expected number of objects the hypothesis accounts for.
struct LocalTrack {
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  Eigen::Matrix4d cov = Eigen::Matrix4d::Identity();
  double weight = 0.0;
  std::uint64_t local_id = 0;
  std::vector<AliasId> alias_ids;

  [[nodiscard]] Eigen::Vector2d position() const { return mean.head<2>(); }
  [[nodiscard]] std::optional<std::uint64_t> alias_for(std::uint32_t station_id) const;
  [[nodiscard]] bool has_alias(std::uint32_t station_id) const;
  /// Adds (station_id, remote_track_id); throws if the station already has one.
  void add_alias(std::uint32_t station_id, std::uint64_t remote_track_id);
  /// Adds or replaces the entry for station_id, keeping one entry per station.
  void set_alias(std::uint32_t station_id, std::uint64_t remote_track_id);
};

/// Track received from another station, already expressed in the local frame
/// and time-aligned by the caller. The mean is (x, y) or (x, y, vx, vy).
struct RemoteTrack {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::uint32_t station_id = 0;
  std::uint64_t remote_track_id = 0;
};

/// Point detection in the local frame.
struct Detection {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
  std::uint32_t sensor_id = 0;
};

/// State-dependent detection probability in [0, 1].
using DetectionProbability = std::function<double(const Eigen::Vector4d&)>;

struct TrackerConfig {
  /// Drives the prediction noise Q; per axis the position picks up one step of
  /// independent velocity jitter (std * dt) and the velocity a slow random
  /// walk, so Q vanishes as dt -> 0.
  double process_noise_velocity_std = 1.0;
  /// Detection probability of the local sensor; empty means constant 0.9.
  DetectionProbability detection_probability;
  /// Expected false detections per square meter.
  double clutter_density = 1e-6;
  /// Initial weight of measurement-driven births.
  double birth_weight = 0.1;
  /// Velocity prior std for births whose source carries no velocity.
  double birth_velocity_std = 2.0;
  double prune_threshold = 1e-4;
  /// Gate on sqrt(d^T (Si + Sj)^-1 d) below which two hypotheses merge.
  double merge_mahalanobis_threshold = 3.0;
  /// Hypotheses whose means sit farther apart than this (meters) and whose
  /// alias lists name different remote ids for the same station are kept
  /// separate regardless of the Mahalanobis test: identity evidence says they
  /// are different objects. Below this distance they are treated as duplicate
  /// hypotheses of one object and may merge.
  double alias_conflict_merge_distance = 2.0;
  /// Hypotheses closer than this (meters) merge unconditionally (unless the
  /// alias-conflict rule above vetoes). Tight covariances make sub-meter
  /// duplicates of one object fail the Mahalanobis test, which would leave an
  /// object's weight split into sub-confirmation shards.
  double merge_distance_floor = 1.5;
  std::size_t max_tracks = 100;
  /// Tracks at or above this weight are reported and shared with peers.
  double confirm_weight = 0.5;
  double survival_probability = 1.0;
  /// Squared-Mahalanobis gate on the position innovation when associating
  /// remote tracks; values <= 0 or non-finite disable gating.
  double fusion_gate_mahalanobis2 = 25.0;

  [[nodiscard]] double detection_probability_at(const Eigen::Vector4d& state) const;
};

/// Hands out track ids unique for the lifetime of the allocator; ids are
/// never reused, including after merges and prunes.
class IdAllocator {
 public:
  [[nodiscard]] std::uint64_t allocate() { return next_++; }
  [[nodiscard]] std::uint64_t peek() const { return next_; }

 private:
  std::uint64_t next_ = 1;
};

/// Constant-velocity transition over (x, y, vx, vy).
[[nodiscard]] Eigen::Matrix4d cv_transition(double dt);
/// Process noise matching cv_transition; see TrackerConfig for the model.
[[nodiscard]] Eigen::Matrix4d cv_process_noise(double dt, double velocity_std);

/// Constant-velocity prediction of every track. Weights are scaled by the
/// survival probability (1 by default); ids and aliases are untouched.
/// Throws std::invalid_argument for negative or non-finite dt.
void predict(std::vector<LocalTrack>& tracks, double dt, const TrackerConfig& config);

/// Intensity-filter measurement update. Every track keeps a missed-detection
/// copy weighted by (1 - p_D); each detection spawns one updated hypothesis
/// per track weighted by p_D * w * N(innovation) plus one fresh birth track
/// of weight birth_weight. Per detection, the updated hypotheses are
/// normalized against (clutter_density + birth_weight + their sum) so the
/// detection accounts for at most one object. Ends with prune_merge_cap.
void update_with_detections(std::vector<LocalTrack>& tracks,
                            std::span<const Detection> detections,
                            const TrackerConfig& config, IdAllocator& ids);

/// Drops hypotheses below prune_threshold, merges near-coincident ones by
/// moment matching (the merged track keeps the oldest member's local_id so
/// peer stations' references survive; alias lists are unioned with station
/// collisions resolved in the heaviest member's favor), and keeps at most
/// max_tracks by weight. Finishes by re-asserting local_id uniqueness: on a
/// collision the heaviest claimant keeps the id and the rest draw fresh ones.
void prune_merge_cap(std::vector<LocalTrack>& tracks, const TrackerConfig& config,
                     IdAllocator& ids);

/// Kalman update of a single track against one detection (Joseph form).
/// Returns the updated mean/cov plus the Gaussian likelihood of the innovation.
struct DetectionUpdate {
  Eigen::Vector4d mean;
  Eigen::Matrix4d cov;
  double likelihood = 0.0;
};
[[nodiscard]] DetectionUpdate detection_update(const LocalTrack& track, const Detection& detection);

/// Gaussian density of residual y under covariance s.
[[nodiscard]] double gaussian_density(const Eigen::VectorXd& y, const Eigen::MatrixXd& s);

/// Stateful convenience wrapper owning tracks, config and the id allocator.
class Tracker {
 public:
  explicit Tracker(TrackerConfig config) : config_(std::move(config)) {}

  void predict(double dt) { tracking::predict(tracks_, dt, config_); }
  void update(std::span<const Detection> detections) {
    update_with_detections(tracks_, detections, config_, ids_);
  }
  void update(std::span<const Detection> detections, const TrackerConfig& override_config) {
    update_with_detections(tracks_, detections, override_config, ids_);
  }

  [[nodiscard]] const std::vector<LocalTrack>& tracks() const { return tracks_; }
  [[nodiscard]] std::vector<LocalTrack>& tracks() { return tracks_; }
  [[nodiscard]] std::vector<LocalTrack> confirmed_tracks() const;
  [[nodiscard]] const TrackerConfig& config() const { return config_; }
  [[nodiscard]] IdAllocator& ids() { return ids_; }

 private:
  TrackerConfig config_;
  std::vector<LocalTrack> tracks_;
  IdAllocator ids_;
};

}  // namespace cpf::tracking
