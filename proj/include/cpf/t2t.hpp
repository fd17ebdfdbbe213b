#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cpf/ci.hpp"
#include "cpf/tracker.hpp"

namespace cpf::t2t {

/// Detection-probability model of a transmitting station, evaluated at
/// local-frame positions. Returns 0 outside the transmitter's declared
/// sensing region, so tracks it could never have seen are not penalized
/// for being absent from its reports.
struct RemoteDetectionModel {
  std::function<double(const Eigen::Vector2d&)> detection_probability;

  [[nodiscard]] static RemoteDetectionModel constant(double p);
  [[nodiscard]] static RemoteDetectionModel circle(const Eigen::Vector2d& center, double radius,
                                                   double p_inside = 0.9);

  [[nodiscard]] double at(const Eigen::Vector2d& position) const;
};

/// Where each posterior hypothesis of a station fusion came from, in
/// construction order (before prune/merge reorders the track list).
enum class Origin : std::uint8_t { Matched, Birth, UnmatchedUpdated, Undetected };

struct FusionReport {
  std::size_t matched_count = 0;
  std::size_t new_track_count = 0;
  std::size_t undetected_count = 0;
  std::vector<double> omegas;    // one entry per covariance-intersection update
  std::vector<Origin> origins;   // posterior labels in construction order
};

/// One covariance-intersection update of a local track with a remote track.
/// The inputs' covariances are inflated by 1/omega and 1/(1-omega) (omega
/// clamped away from the endpoints for the divisions) and then combined with
/// a Joseph-form Kalman step, which is algebraically the intersection fusion
/// but keeps the update numerically well-behaved. The returned weight is the
/// unnormalized p_D * N(position innovation) * prior weight, with the density
/// evaluated under the plain (uninflated) pair position covariance so that
/// the association strength reflects geometric agreement rather than the
/// blend weight or transient velocity spread; see the implementation note.
struct CiTrackUpdate {
  Eigen::Vector4d mean;
  Eigen::Matrix4d cov;
  double weight = 0.0;
  double omega = 0.0;
};
[[nodiscard]] CiTrackUpdate ci_track_update(const tracking::LocalTrack& local,
                                            const tracking::RemoteTrack& remote,
                                            const RemoteDetectionModel& model);

/// Folds one station's track report into the local track list:
///   1. remotes matched through the alias lists update every local carrying
///      that alias; each matched group is normalized to unit weight,
///   2. unmatched remotes spawn a birth (seeded with their alias) and softly
///      update, as a copy, every alias-unmatched local that has no alias for
///      this station yet; the group (birth included) is normalized once at
///      least one local associates, otherwise the birth keeps its configured
///      weight,
///   3. every local not claimed in pass 1 — including those copied in pass 2 —
///      yields a missed-detection hypothesis: weight scaled by (1 - p_D) where
///      the transmitter could have seen it, untouched outside its region.
/// The posterior is the concatenation of the three subsets (a pass-2 copy and
/// its decayed original may briefly coexist under one track id), then
/// prune_merge_cap runs. All remotes must share one station_id.
[[nodiscard]] FusionReport fuse_station(std::vector<tracking::LocalTrack>& tracks,
                                        std::span<const tracking::RemoteTrack> remotes,
                                        const RemoteDetectionModel& model,
                                        const tracking::TrackerConfig& config,
                                        tracking::IdAllocator& ids);

/// One station's worth of remote tracks plus its detection model.
struct StationBatch {
  std::uint32_t station_id = 0;
  std::vector<tracking::RemoteTrack> remotes;
  RemoteDetectionModel model;
};

/// Applies fuse_station sequentially in the order given, feeding each
/// station's posterior into the next fusion. Batches must come from distinct
/// stations; callers order them by arrival time with station id as tie-break.
[[nodiscard]] std::vector<FusionReport> fuse_all_stations(
    std::vector<tracking::LocalTrack>& tracks, std::span<const StationBatch> batches,
    const tracking::TrackerConfig& config, tracking::IdAllocator& ids);

}  // namespace cpf::t2t
