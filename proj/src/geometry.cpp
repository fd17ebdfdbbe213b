#include "cpf/geometry.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cpf::geom {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Eigen::Matrix2d rotation_of(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

// d/dtheta of rotation_of(theta).
Eigen::Matrix2d rotation_derivative(double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Eigen::Matrix2d r;
  r << -s, -c, c, -s;
  return r;
}

void validate_pose(const Pose2D& pose, const char* name) {
  if (!std::isfinite(pose.x) || !std::isfinite(pose.y) || !std::isfinite(pose.theta)) {
    throw std::invalid_argument(std::string(name) + ": pose components must be finite");
  }
  if (!is_valid_covariance(pose.cov)) {
    throw std::invalid_argument(std::string(name) + ": pose covariance is not symmetric PSD");
  }
}

}  // namespace

Eigen::Matrix2d Pose2D::rotation() const { return rotation_of(theta); }

double normalize_angle(double theta) {
  if (!std::isfinite(theta)) {
    throw std::invalid_argument("normalize_angle: angle must be finite");
  }
  double r = std::remainder(theta, kTwoPi);  // lands in [-pi, pi]
  if (r <= -std::numbers::pi) {
    r += kTwoPi;  // fold the closed lower end onto +pi
  }
  return r;
}

bool is_valid_covariance(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols() || cov.rows() == 0) {
    return false;
  }
  if (!cov.allFinite()) {
    return false;
  }
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    return false;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (cov + cov.transpose()),
                                                     Eigen::EigenvaluesOnly);
  const double trace = std::max(cov.trace(), 0.0);
  return eig.eigenvalues().minCoeff() >= -1e-9 * std::max(trace, 1e-12);
}

void validate_estimate(const GaussianEstimate& estimate) {
  if (estimate.mean.size() == 0) {
    throw std::invalid_argument("estimate: empty mean");
  }
  if (!estimate.mean.allFinite()) {
    throw std::invalid_argument("estimate: mean must be finite");
  }
  if (estimate.cov.rows() != estimate.mean.size() || estimate.cov.cols() != estimate.mean.size()) {
    throw std::invalid_argument("estimate: covariance dimension does not match mean");
  }
  if (!is_valid_covariance(estimate.cov)) {
    throw std::invalid_argument("estimate: covariance is not symmetric PSD");
  }
}

void symmetrize(Eigen::MatrixXd& cov) { cov = 0.5 * (cov + cov.transpose()).eval(); }

GaussianEstimate transform_estimate(const Pose2D& source_frame,
                                    const GaussianEstimate& estimate,
                                    const Pose2D& target_frame) {
  validate_pose(source_frame, "transform_estimate: source frame");
  validate_pose(target_frame, "transform_estimate: target frame");
  validate_estimate(estimate);
  const Eigen::Index n = estimate.mean.size();
  if (n != 2 && n != 4) {
    throw std::invalid_argument("transform_estimate: mean layout must be (x, y) or (x, y, vx, vy)");
  }

  const Eigen::Matrix2d rs = rotation_of(source_frame.theta);
  const Eigen::Matrix2d rt = rotation_of(target_frame.theta);
  const Eigen::Matrix2d rs_d = rotation_derivative(source_frame.theta);
  const Eigen::Matrix2d rt_d = rotation_derivative(target_frame.theta);

  const Eigen::Vector2d p = estimate.mean.head<2>();
  const Eigen::Vector2d p_world = rs * p + source_frame.translation();
  const Eigen::Vector2d offset = p_world - target_frame.translation();

  GaussianEstimate out;
  out.mean.resize(n);
  out.mean.head<2>() = rt.transpose() * offset;

  // Jacobians of the output w.r.t. the input state, the source pose
  // (x, y, theta) and the target pose (x, y, theta).
  Eigen::MatrixXd j_state = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd j_source = Eigen::MatrixXd::Zero(n, 3);
  Eigen::MatrixXd j_target = Eigen::MatrixXd::Zero(n, 3);

  const Eigen::Matrix2d relative_rotation = rt.transpose() * rs;
  j_state.topLeftCorner<2, 2>() = relative_rotation;
  j_source.topLeftCorner<2, 2>() = rt.transpose();
  j_source.block<2, 1>(0, 2) = rt.transpose() * (rs_d * p);
  j_target.topLeftCorner<2, 2>() = -rt.transpose();
  j_target.block<2, 1>(0, 2) = rt_d.transpose() * offset;

  if (n == 4) {
    const Eigen::Vector2d v = estimate.mean.tail<2>();
    out.mean.tail<2>() = relative_rotation * v;
    j_state.bottomRightCorner<2, 2>() = relative_rotation;
    j_source.block<2, 1>(2, 2) = rt.transpose() * (rs_d * v);
    j_target.block<2, 1>(2, 2) = rt_d.transpose() * (rs * v);
  }

  out.cov = j_state * estimate.cov * j_state.transpose() +
            j_source * source_frame.cov * j_source.transpose() +
            j_target * target_frame.cov * j_target.transpose();
  symmetrize(out.cov);
  return out;
}

}  // namespace cpf::geom
