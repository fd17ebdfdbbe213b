#include "cpf/t2t.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cpf::t2t {

namespace {

constexpr double kOmegaClamp = 1e-12;

Eigen::Matrix4d symmetric(const Eigen::Matrix4d& m) { return 0.5 * (m + m.transpose()); }

void validate_remote(const tracking::RemoteTrack& remote) {
  const Eigen::Index n = remote.mean.size();
  if (n != 2 && n != 4) {
    throw std::invalid_argument("remote track: mean layout must be (x, y) or (x, y, vx, vy)");
  }
  geom::validate_estimate({remote.mean, remote.cov});
}

// Position-innovation gate shared by the association pass. Uses the plain
// (un-inflated) innovation covariance, like a Kalman gate.
bool gate_rejects(const tracking::LocalTrack& local, const tracking::RemoteTrack& remote,
                  double gate_mahalanobis2) {
  if (!(gate_mahalanobis2 > 0.0) || !std::isfinite(gate_mahalanobis2)) {
    return false;
  }
  const Eigen::Vector2d y = remote.mean.head<2>() - local.mean.head<2>();
  const Eigen::Matrix2d s =
      local.cov.topLeftCorner<2, 2>() + remote.cov.topLeftCorner<2, 2>();
  Eigen::LLT<Eigen::Matrix2d> llt(s);
  if (llt.info() != Eigen::Success) {
    return false;
  }
  return y.dot(llt.solve(y)) > gate_mahalanobis2;
}

// Rescales tracks[start..] so the group carries exactly one object's worth of
// weight. When every raw weight underflowed to zero (e.g. the transmitter's
// detection probability vanishes at the tracks), the limit of the rescaling is
// uniform — the group still must sum to one, not silently die.
void normalize_group(std::vector<tracking::LocalTrack>& tracks, std::size_t start) {
  const std::size_t n = tracks.size() - start;
  if (n == 0) {
    return;
  }
  double sum = 0.0;
  for (std::size_t i = start; i < tracks.size(); ++i) {
    sum += tracks[i].weight;
  }
  for (std::size_t i = start; i < tracks.size(); ++i) {
    tracks[i].weight = (sum > 0.0) ? tracks[i].weight / sum : 1.0 / static_cast<double>(n);
  }
}

tracking::LocalTrack birth_from_remote(const tracking::RemoteTrack& remote,
                                       const tracking::TrackerConfig& config,
                                       tracking::IdAllocator& ids) {
  tracking::LocalTrack track;
  track.local_id = ids.allocate();
  track.weight = config.birth_weight;
  track.alias_ids = {{remote.station_id, remote.remote_track_id}};
  if (remote.mean.size() == 4) {
    track.mean = remote.mean;
    track.cov = symmetric(remote.cov);
  } else {
    track.mean.head<2>() = remote.mean;
    track.mean.tail<2>().setZero();
    track.cov.setZero();
    track.cov.topLeftCorner<2, 2>() = remote.cov;
    track.cov(2, 2) = track.cov(3, 3) = config.birth_velocity_std * config.birth_velocity_std;
  }
  return track;
}

}  // namespace

RemoteDetectionModel RemoteDetectionModel::constant(double p) {
  return {[p](const Eigen::Vector2d&) { return p; }};
}

RemoteDetectionModel RemoteDetectionModel::circle(const Eigen::Vector2d& center, double radius,
                                                  double p_inside) {
  return {[center, radius, p_inside](const Eigen::Vector2d& x) {
    return (x - center).norm() <= radius ? p_inside : 0.0;
  }};
}

double RemoteDetectionModel::at(const Eigen::Vector2d& position) const {
  if (!detection_probability) {
    return 0.9;
  }
  return std::clamp(detection_probability(position), 0.0, 1.0);
}

CiTrackUpdate ci_track_update(const tracking::LocalTrack& local,
                              const tracking::RemoteTrack& remote,
                              const RemoteDetectionModel& model) {
  validate_remote(remote);
  const Eigen::Index m = remote.mean.size();
  const ci::ObservationMatrix h = (m == 4) ? ci::ObservationMatrix::identity(4)
                                           : ci::ObservationMatrix::leading_block(2, 4);

  const Eigen::MatrixXd info_l = ci::invert_spd(local.cov);
  const Eigen::MatrixXd info_r = ci::invert_spd(remote.cov);
  const Eigen::MatrixXd info_r_mapped =
      (h.matrix().transpose() * info_r * h.matrix()).eval();

  CiTrackUpdate out;
  out.omega = ci::optimize_omega(info_l, info_r_mapped);

  // The endpoint weights are reachable; keep the covariance inflations finite.
  const double w = std::clamp(out.omega, kOmegaClamp, 1.0 - kOmegaClamp);
  const Eigen::Matrix4d cov_l = local.cov / w;
  const Eigen::MatrixXd cov_r = remote.cov / (1.0 - w);

  const Eigen::VectorXd y = remote.mean - h.matrix() * local.mean;
  const Eigen::MatrixXd s = cov_r + h.matrix() * cov_l * h.matrix().transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (s + s.transpose()));
  if (llt.info() != Eigen::Success) {
    throw ci::SingularMatrixError("ci_track_update: innovation covariance not positive definite");
  }
  const Eigen::MatrixXd gain =
      cov_l * h.matrix().transpose() * llt.solve(Eigen::MatrixXd::Identity(m, m));

  out.mean = local.mean + gain * y;
  const Eigen::Matrix4d i_kh = Eigen::Matrix4d::Identity() - gain * h.matrix();
  out.cov = symmetric(i_kh * cov_l * i_kh.transpose() + gain * cov_r * gain.transpose());

  // The association likelihood uses the plain position-marginal innovation
  // covariance — not the intersection-inflated, full-state one — for two
  // reasons. First, when the optimal blend sits at an endpoint (one estimate
  // fully dominates) the inflated covariance blows up by the clamp factor and
  // the density collapses to ~0 even for perfectly coincident tracks, which
  // would starve every established track of weight and hand its identity to a
  // fresh birth each cycle. Second, velocity estimates carry large transient
  // variances (births start nearly uninformative there), so a full-state
  // density would keep association weights tiny long after the positions
  // agree. Position is what the gate tests, what the sensors measure, and
  // what identity should follow.
  const Eigen::MatrixXd s_pair =
      remote.cov + h.matrix() * local.cov * h.matrix().transpose();
  out.weight = model.at(local.position()) *
               tracking::gaussian_density(y.head<2>(), s_pair.topLeftCorner<2, 2>()) *
               local.weight;
  return out;
}

FusionReport fuse_station(std::vector<tracking::LocalTrack>& tracks,
                          std::span<const tracking::RemoteTrack> remotes,
                          const RemoteDetectionModel& model,
                          const tracking::TrackerConfig& config,
                          tracking::IdAllocator& ids) {
  for (const tracking::RemoteTrack& remote : remotes) {
    validate_remote(remote);
    if (remote.station_id != remotes.front().station_id) {
      throw std::invalid_argument("fuse_station: remotes must all come from one station");
    }
  }

  FusionReport report;
  std::vector<tracking::LocalTrack> matched;
  std::vector<tracking::LocalTrack> associated;  // births + soft updates, per remote
  std::vector<bool> alias_matched(tracks.size(), false);  // claimed by the first pass
  std::vector<std::size_t> unmatched_remotes;
  std::vector<Origin> associated_origins;

  // Pass 1: remotes whose (station, id) appears in a local alias list update
  // those locals directly; each remote's hypothesis group renormalizes to one
  // object's worth of weight.
  for (std::size_t r = 0; r < remotes.size(); ++r) {
    const tracking::RemoteTrack& remote = remotes[r];
    const std::size_t group_start = matched.size();
    for (std::size_t l = 0; l < tracks.size(); ++l) {
      const auto alias = tracks[l].alias_for(remote.station_id);
      if (!alias || *alias != remote.remote_track_id) {
        continue;
      }
      CiTrackUpdate update = ci_track_update(tracks[l], remote, model);
      tracking::LocalTrack fused = tracks[l];
      fused.mean = update.mean;
      fused.cov = update.cov;
      fused.weight = update.weight;
      for (tracking::AliasId& entry : fused.alias_ids) {
        if (entry.station_id == remote.station_id) {
          entry.missed_count = 0;  // the binding just proved itself
        }
      }
      matched.push_back(std::move(fused));
      report.omegas.push_back(update.omega);
      alias_matched[l] = true;
    }
    if (matched.size() == group_start) {
      unmatched_remotes.push_back(r);
      continue;
    }
    normalize_group(matched, group_start);
    report.matched_count += matched.size() - group_start;
  }

  // An alias whose id this sender has stopped reporting for several batches
  // is stale: the sender has retired the id (trackers prune and re-issue
  // ids), and a stale entry must not block the track from re-binding to the
  // sender's replacement id below. Keeping stale bindings frozen starves the
  // track of updates from this sender forever while its association copies
  // mis-bind to neighbors, which destabilizes every station listening to
  // this one. One-batch dropouts stay live so a returning id re-matches in
  // the first pass without churn.
  const auto alias_is_live = [&](const tracking::LocalTrack& track) {
    for (const tracking::AliasId& alias : track.alias_ids) {
      if (alias.station_id == remotes.front().station_id) {
        return !alias.stale();
      }
    }
    return false;
  };

  // Pass 2: a remote nobody claimed births a new track and softly associates
  // with every alias-unmatched local whose alias for this station is absent or
  // stale. The association produces a *copy* (with the alias entry added or
  // replaced); the original local stays available to later remotes and still
  // receives its missed-detection decay in pass 3, so a low-weight association
  // can never erase an established track.
  for (std::size_t r : unmatched_remotes) {
    const tracking::RemoteTrack& remote = remotes[r];
    const std::size_t group_start = associated.size();
    associated.push_back(birth_from_remote(remote, config, ids));
    associated_origins.push_back(Origin::Birth);
    report.new_track_count += 1;

    bool any_update = false;
    for (std::size_t l = 0; l < tracks.size(); ++l) {
      if (alias_matched[l] || alias_is_live(tracks[l])) {
        continue;
      }
      if (gate_rejects(tracks[l], remote, config.fusion_gate_mahalanobis2)) {
        continue;
      }
      CiTrackUpdate update = ci_track_update(tracks[l], remote, model);
      tracking::LocalTrack fused = tracks[l];
      fused.mean = update.mean;
      fused.cov = update.cov;
      fused.weight = update.weight;
      fused.set_alias(remote.station_id, remote.remote_track_id);
      associated.push_back(std::move(fused));
      associated_origins.push_back(Origin::UnmatchedUpdated);
      report.omegas.push_back(update.omega);
      any_update = true;
    }
    if (!any_update) {
      continue;  // a lone birth keeps its configured weight
    }
    normalize_group(associated, group_start);
  }

  // Pass 3: every local the first pass did not claim gets a missed-detection
  // copy, weighted down where the transmitter could have seen it and untouched
  // where it could not. Locals softly associated in pass 2 are included: the
  // association copy and the decayed original coexist until pruning or merging
  // settles which hypothesis carries the identity. The sender reported a batch
  // that lacked this track's aliased id, so the alias miss counter advances;
  // entries missing long enough are removed outright.
  const std::uint32_t sender = remotes.empty() ? 0 : remotes.front().station_id;
  std::vector<tracking::LocalTrack> undetected;
  for (std::size_t l = 0; l < tracks.size(); ++l) {
    if (alias_matched[l]) {
      continue;
    }
    tracking::LocalTrack decayed = tracks[l];
    if (!remotes.empty()) {
      for (tracking::AliasId& alias : decayed.alias_ids) {
        if (alias.station_id == sender &&
            alias.missed_count < tracking::AliasId::kDropAfter) {
          ++alias.missed_count;
        }
      }
      std::erase_if(decayed.alias_ids, [sender](const tracking::AliasId& a) {
        return a.station_id == sender && a.missed_count >= tracking::AliasId::kDropAfter;
      });
    }
    decayed.weight *= 1.0 - model.at(decayed.position());
    undetected.push_back(std::move(decayed));
  }
  report.undetected_count = undetected.size();

  // Assemble the posterior: matched, then per-remote groups, then undetected.
  std::vector<tracking::LocalTrack> posterior;
  posterior.reserve(matched.size() + associated.size() + undetected.size());
  report.origins.reserve(posterior.capacity());
  for (auto& t : matched) {
    posterior.push_back(std::move(t));
    report.origins.push_back(Origin::Matched);
  }
  for (std::size_t i = 0; i < associated.size(); ++i) {
    posterior.push_back(std::move(associated[i]));
    report.origins.push_back(associated_origins[i]);
  }
  for (auto& t : undetected) {
    posterior.push_back(std::move(t));
    report.origins.push_back(Origin::Undetected);
  }

  tracks = std::move(posterior);
  prune_merge_cap(tracks, config, ids);
  return report;
}

std::vector<FusionReport> fuse_all_stations(std::vector<tracking::LocalTrack>& tracks,
                                            std::span<const StationBatch> batches,
                                            const tracking::TrackerConfig& config,
                                            tracking::IdAllocator& ids) {
  for (std::size_t i = 0; i < batches.size(); ++i) {
    for (std::size_t j = i + 1; j < batches.size(); ++j) {
      if (batches[i].station_id == batches[j].station_id) {
        throw std::invalid_argument("fuse_all_stations: duplicate station in one fusion round");
      }
    }
    for (const tracking::RemoteTrack& remote : batches[i].remotes) {
      if (remote.station_id != batches[i].station_id) {
        throw std::invalid_argument("fuse_all_stations: remote track not from its batch station");
      }
    }
  }
  std::vector<FusionReport> reports;
  reports.reserve(batches.size());
  for (const StationBatch& batch : batches) {
    reports.push_back(fuse_station(tracks, batch.remotes, batch.model, config, ids));
  }
  return reports;
}

}  // namespace cpf::t2t
