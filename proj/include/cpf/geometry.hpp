#pragma once

#include <Eigen/Dense>

namespace cpf::geom {

/// 2-D pose (x, y, heading) with a 3x3 covariance over (x, y, theta).
/// theta is kept in (-pi, pi].
struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();

  [[nodiscard]] Eigen::Vector2d translation() const { return {x, y}; }
  [[nodiscard]] Eigen::Matrix2d rotation() const;
};

/// Gaussian state estimate: mean plus covariance of matching dimension.
struct GaussianEstimate {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Wraps an angle to (-pi, pi]. Throws std::invalid_argument for non-finite input.
[[nodiscard]] double normalize_angle(double theta);

/// True when `cov` is square, finite, symmetric to a small relative tolerance,
/// and positive semidefinite up to lambda_min >= -1e-9 * trace.
[[nodiscard]] bool is_valid_covariance(const Eigen::MatrixXd& cov);

/// Checks mean finiteness, mean/cov dimension agreement and is_valid_covariance.
/// Throws std::invalid_argument naming the violated property.
void validate_estimate(const GaussianEstimate& estimate);

/// cov <- (cov + cov^T) / 2. Cheap insurance after any propagation.
void symmetrize(Eigen::MatrixXd& cov);

/// Re-expresses an estimate given in `source_frame` into `target_frame`.
/// Supported mean layouts: (x, y) and (x, y, vx, vy). Velocities rotate with
/// the frame change but do not pick up the translation. The output covariance
/// adds first-order (Jacobian) contributions from both pose covariances on
/// top of the rotated input covariance, so uncertainty never shrinks.
[[nodiscard]] GaussianEstimate transform_estimate(const Pose2D& source_frame,
                                                  const GaussianEstimate& estimate,
                                                  const Pose2D& target_frame);

}  // namespace cpf::geom
