#include "cpf/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cpf/ci.hpp"

namespace cpf::tracking {

namespace {

Eigen::Matrix4d symmetric(const Eigen::Matrix4d& m) { return 0.5 * (m + m.transpose()); }

// True when the two tracks name different remote ids for the same station.
// Stale entries carry no identity evidence and are ignored.
bool aliases_conflict(const LocalTrack& a, const LocalTrack& b) {
  for (const AliasId& alias : a.alias_ids) {
    if (alias.stale()) {
      continue;
    }
    for (const AliasId& other : b.alias_ids) {
      if (other.station_id == alias.station_id && !other.stale() &&
          other.remote_track_id != alias.remote_track_id) {
        return true;
      }
    }
  }
  return false;
}

// Position-measurement model shared by detection updates.
Eigen::Matrix<double, 2, 4> position_observation() {
  Eigen::Matrix<double, 2, 4> h = Eigen::Matrix<double, 2, 4>::Zero();
  h(0, 0) = 1.0;
  h(1, 1) = 1.0;
  return h;
}

}  // namespace

std::optional<std::uint64_t> LocalTrack::alias_for(std::uint32_t station_id) const {
  for (const AliasId& alias : alias_ids) {
    if (alias.station_id == station_id) {
      return alias.remote_track_id;
    }
  }
  return std::nullopt;
}

bool LocalTrack::has_alias(std::uint32_t station_id) const {
  return alias_for(station_id).has_value();
}

void LocalTrack::add_alias(std::uint32_t station_id, std::uint64_t remote_track_id) {
  if (has_alias(station_id)) {
    throw std::invalid_argument("LocalTrack: track already carries an alias for this station");
  }
  alias_ids.push_back({station_id, remote_track_id});
}

void LocalTrack::set_alias(std::uint32_t station_id, std::uint64_t remote_track_id) {
  for (AliasId& alias : alias_ids) {
    if (alias.station_id == station_id) {
      alias.remote_track_id = remote_track_id;
      alias.missed_count = 0;
      return;
    }
  }
  alias_ids.push_back({station_id, remote_track_id});
}

double TrackerConfig::detection_probability_at(const Eigen::Vector4d& state) const {
  if (!detection_probability) {
    return 0.9;
  }
  return std::clamp(detection_probability(state), 0.0, 1.0);
}

Eigen::Matrix4d cv_transition(double dt) {
  Eigen::Matrix4d f = Eigen::Matrix4d::Identity();
  f(0, 2) = dt;
  f(1, 3) = dt;
  return f;
}

Eigen::Matrix4d cv_process_noise(double dt, double velocity_std) {
  const double v2 = velocity_std * velocity_std;
  Eigen::Matrix4d q = Eigen::Matrix4d::Zero();
  q(0, 0) = q(1, 1) = v2 * dt * dt;  // one step of independent velocity jitter
  q(2, 2) = q(3, 3) = v2 * dt;       // slow random-walk drift of the velocity
  return q;
}

void predict(std::vector<LocalTrack>& tracks, double dt, const TrackerConfig& config) {
  if (!std::isfinite(dt) || dt < 0.0) {
    throw std::invalid_argument("predict: dt must be finite and non-negative");
  }
  const Eigen::Matrix4d f = cv_transition(dt);
  const Eigen::Matrix4d q = cv_process_noise(dt, config.process_noise_velocity_std);
  for (LocalTrack& track : tracks) {
    track.mean = f * track.mean;
    track.cov = symmetric(f * track.cov * f.transpose() + q);
    track.weight *= config.survival_probability;
  }
}

double gaussian_density(const Eigen::VectorXd& y, const Eigen::MatrixXd& s) {
  const Eigen::Index m = y.size();
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (s + s.transpose()));
  if (llt.info() != Eigen::Success) {
    throw ci::SingularMatrixError("gaussian_density: innovation covariance not positive definite");
  }
  const double quad = y.dot(llt.solve(y));
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double log_norm = -0.5 * (static_cast<double>(m) * std::log(2.0 * std::numbers::pi) + logdet);
  return std::exp(log_norm - 0.5 * quad);
}

DetectionUpdate detection_update(const LocalTrack& track, const Detection& detection) {
  static const Eigen::Matrix<double, 2, 4> h = position_observation();
  const Eigen::Vector2d innovation = detection.mean - h * track.mean;
  const Eigen::Matrix2d s = h * track.cov * h.transpose() + detection.cov;
  Eigen::LLT<Eigen::Matrix2d> llt(s);
  if (llt.info() != Eigen::Success) {
    throw ci::SingularMatrixError("detection_update: innovation covariance not positive definite");
  }
  const Eigen::Matrix<double, 4, 2> gain = track.cov * h.transpose() * llt.solve(Eigen::Matrix2d::Identity());

  DetectionUpdate out;
  out.mean = track.mean + gain * innovation;
  const Eigen::Matrix4d i_kh = Eigen::Matrix4d::Identity() - gain * h;
  out.cov = symmetric(i_kh * track.cov * i_kh.transpose() + gain * detection.cov * gain.transpose());
  out.likelihood = gaussian_density(innovation, s);
  return out;
}

void update_with_detections(std::vector<LocalTrack>& tracks,
                            std::span<const Detection> detections,
                            const TrackerConfig& config, IdAllocator& ids) {
  std::vector<LocalTrack> posterior;
  posterior.reserve(tracks.size() * (detections.size() + 1) + detections.size());

  // Missed-detection branch: each track survives undetected with (1 - p_D).
  for (const LocalTrack& track : tracks) {
    LocalTrack missed = track;
    missed.weight *= 1.0 - config.detection_probability_at(track.mean);
    posterior.push_back(std::move(missed));
  }

  for (const Detection& detection : detections) {
    if (!detection.mean.allFinite() || !geom::is_valid_covariance(detection.cov)) {
      throw std::invalid_argument("update_with_detections: detection must be finite with PSD covariance");
    }
    std::vector<LocalTrack> updated;
    updated.reserve(tracks.size());
    double sum = 0.0;
    for (const LocalTrack& track : tracks) {
      const double p_d = config.detection_probability_at(track.mean);
      if (p_d <= 0.0 || track.weight <= 0.0) {
        continue;
      }
      const DetectionUpdate up = detection_update(track, detection);
      LocalTrack hypothesis = track;
      hypothesis.mean = up.mean;
      hypothesis.cov = up.cov;
      hypothesis.weight = p_d * track.weight * up.likelihood;
      sum += hypothesis.weight;
      updated.push_back(std::move(hypothesis));
    }
    // The detection explains at most one object: split its unit of evidence
    // between clutter, a potential birth and the updated hypotheses.
    const double denom = config.clutter_density + config.birth_weight + sum;
    if (denom > 0.0) {
      for (LocalTrack& hypothesis : updated) {
        hypothesis.weight /= denom;
      }
    }
    for (LocalTrack& hypothesis : updated) {
      posterior.push_back(std::move(hypothesis));
    }

    LocalTrack birth;
    birth.mean.head<2>() = detection.mean;
    birth.mean.tail<2>().setZero();
    birth.cov.setZero();
    birth.cov.topLeftCorner<2, 2>() = detection.cov;
    birth.cov(2, 2) = birth.cov(3, 3) = config.birth_velocity_std * config.birth_velocity_std;
    // Measurement-driven initiation: a detection births in proportion to how
    // poorly the existing tracks explain it. An unexplained detection starts a
    // track at the full configured weight; one that matches an established
    // track contributes only a residual, so recurring births do not keep
    // diluting a converged track through the merge step.
    const double explained = denom > 0.0 ? sum / denom : 0.0;
    birth.weight = config.birth_weight * (1.0 - explained);
    birth.local_id = ids.allocate();
    posterior.push_back(std::move(birth));
  }

  tracks = std::move(posterior);
  prune_merge_cap(tracks, config, ids);
}

void prune_merge_cap(std::vector<LocalTrack>& tracks, const TrackerConfig& config,
                     IdAllocator& ids) {
  // Prune.
  std::erase_if(tracks, [&](const LocalTrack& t) { return t.weight < config.prune_threshold; });

  // Merge, strongest hypothesis first.
  std::stable_sort(tracks.begin(), tracks.end(),
                   [](const LocalTrack& a, const LocalTrack& b) { return a.weight > b.weight; });
  std::vector<LocalTrack> merged;
  merged.reserve(tracks.size());
  std::vector<bool> used(tracks.size(), false);
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    if (used[i]) {
      continue;
    }
    std::vector<std::size_t> members{i};
    if (config.merge_mahalanobis_threshold > 0.0) {
      for (std::size_t j = i + 1; j < tracks.size(); ++j) {
        if (used[j]) {
          continue;
        }
        // Hypotheses carrying different remote ids for the same station track
        // different physical objects by that station's bookkeeping; merging
        // them would weld two objects into one blob whose alias list then
        // rejects one object's updates forever. Identity evidence beats the
        // Mahalanobis test, which goes blind during transient covariance
        // inflation — but only at genuine object separation. Near-coincident
        // means are duplicates of one object whose bindings diverged when a
        // sender re-issued an id, and holding those apart lets them multiply.
        const Eigen::Vector2d gap = tracks[j].position() - tracks[i].position();
        if (gap.norm() > config.alias_conflict_merge_distance &&
            aliases_conflict(tracks[i], tracks[j])) {
          continue;
        }
        // Near-coincident hypotheses always merge: once covariances tighten,
        // sub-meter duplicates of one object look like many sigma and the
        // Mahalanobis test alone would keep them apart forever, splitting the
        // object's weight into permanently sub-threshold shards. Real objects
        // sit meters apart, so an absolute floor separates the two regimes.
        if (gap.norm() <= config.merge_distance_floor) {
          members.push_back(j);
          continue;
        }
        const Eigen::Vector4d d = tracks[j].mean - tracks[i].mean;
        const Eigen::Matrix4d s = symmetric(tracks[i].cov + tracks[j].cov);
        Eigen::LLT<Eigen::Matrix4d> llt(s);
        if (llt.info() != Eigen::Success) {
          continue;
        }
        const double dist = std::sqrt(std::max(0.0, d.dot(llt.solve(d))));
        if (dist < config.merge_mahalanobis_threshold) {
          members.push_back(j);
        }
      }
    }
    if (members.size() == 1) {
      merged.push_back(std::move(tracks[i]));
      used[i] = true;
      continue;
    }
    // Moment-matched combination. The merged hypothesis keeps the *oldest*
    // member's id (the smallest, since ids allocate monotonically): identity
    // must survive merging with newborn hypotheses, because peer stations
    // address this station's tracks by these ids, and a merge that let a
    // fresh birth's id win would silently invalidate every peer's alias for
    // the established track. State and aliases still favor the heavier
    // members: the mixture is weight-ordered and collisions keep the first
    // (heaviest) entry.
    double weight = 0.0;
    for (std::size_t m : members) {
      weight += tracks[m].weight;
    }
    Eigen::Vector4d mean = Eigen::Vector4d::Zero();
    for (std::size_t m : members) {
      mean += tracks[m].weight / weight * tracks[m].mean;
    }
    Eigen::Matrix4d cov = Eigen::Matrix4d::Zero();
    for (std::size_t m : members) {
      const Eigen::Vector4d d = tracks[m].mean - mean;
      cov += tracks[m].weight / weight * (tracks[m].cov + d * d.transpose());
    }
    LocalTrack out = tracks[members.front()];  // members are weight-sorted; front is heaviest
    out.mean = mean;
    out.cov = symmetric(cov);
    out.weight = weight;
    for (std::size_t m : members) {
      used[m] = true;
      if (m == members.front()) {
        continue;
      }
      out.local_id = std::min(out.local_id, tracks[m].local_id);
      for (const AliasId& alias : tracks[m].alias_ids) {
        if (!out.has_alias(alias.station_id)) {
          out.alias_ids.push_back(alias);  // collisions resolve for the heavier member
        }
      }
    }
    merged.push_back(std::move(out));
  }
  tracks = std::move(merged);

  // Cap (already weight-sorted).
  if (tracks.size() > config.max_tracks) {
    tracks.resize(config.max_tracks);
  }

  // A track id must denote one hypothesis; later (lighter) claimants re-draw.
  std::vector<std::uint64_t> seen;
  for (LocalTrack& track : tracks) {
    if (std::find(seen.begin(), seen.end(), track.local_id) != seen.end()) {
      track.local_id = ids.allocate();
    }
    seen.push_back(track.local_id);
  }
}

std::vector<LocalTrack> Tracker::confirmed_tracks() const {
  std::vector<LocalTrack> out;
  for (const LocalTrack& track : tracks_) {
    if (track.weight >= config_.confirm_weight) {
      out.push_back(track);
    }
  }
  return out;
}

}  // namespace cpf::tracking
