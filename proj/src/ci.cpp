#include "cpf/ci.hpp"

#include <cmath>
#include <limits>

namespace cpf::ci {

namespace {

constexpr double kGoldenTolerance = 1e-9;
constexpr double kInverseGolden = 0.6180339887498949;  // 1/phi

Eigen::MatrixXd symmetric(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// Objective to minimize over omega. Determinant mode uses -logdet of the
// information matrix (equivalent to minimizing det of the covariance);
// trace mode uses trace of the covariance directly. Non-invertible
// combinations score +inf so the search steers away from them.
double objective(const Eigen::MatrixXd& info_a, const Eigen::MatrixXd& info_b, double omega,
                 OmegaCriterion criterion) {
  const Eigen::MatrixXd info = symmetric(omega * info_a + (1.0 - omega) * info_b);
  if (criterion == OmegaCriterion::Determinant) {
    const double ld = logdet_spd(info);
    return std::isfinite(ld) ? -ld : std::numeric_limits<double>::infinity();
  }
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success) {
    return std::numeric_limits<double>::infinity();
  }
  return llt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols())).trace();
}

}  // namespace

ObservationMatrix::ObservationMatrix(Eigen::MatrixXd h) : h_(std::move(h)) {
  if (h_.rows() == 0 || h_.cols() == 0 || h_.rows() > h_.cols()) {
    throw std::invalid_argument("ObservationMatrix: requires m x n with 1 <= m <= n");
  }
  if (!h_.allFinite()) {
    throw std::invalid_argument("ObservationMatrix: entries must be finite");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(h_.transpose());
  if (qr.rank() < h_.rows()) {
    throw std::invalid_argument("ObservationMatrix: rows must be linearly independent");
  }
}

ObservationMatrix ObservationMatrix::identity(Eigen::Index n) {
  return ObservationMatrix(Eigen::MatrixXd::Identity(n, n));
}

ObservationMatrix ObservationMatrix::leading_block(Eigen::Index observed, Eigen::Index state_dim) {
  if (observed > state_dim) {
    throw std::invalid_argument("ObservationMatrix: observed dimension exceeds state dimension");
  }
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(observed, state_dim);
  h.leftCols(observed).setIdentity();
  return ObservationMatrix(std::move(h));
}

Eigen::MatrixXd invert_spd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw std::invalid_argument("invert_spd: matrix must be square");
  }
  if (!m.allFinite()) {
    throw std::invalid_argument("invert_spd: matrix must be finite");
  }
  const Eigen::MatrixXd sym = symmetric(m);
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  Eigen::LLT<Eigen::MatrixXd> llt(sym);
  if (llt.info() == Eigen::Success) {
    return llt.solve(id);
  }
  // Cholesky rejected the matrix: distinguish "genuinely indefinite" from
  // "positive but numerically on the edge", which gets one jitter retry.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  const double trace = std::max(sym.trace(), 1e-12);
  if (eig.eigenvalues().minCoeff() < -1e-9 * trace) {
    throw std::invalid_argument("invert_spd: matrix is not positive semidefinite");
  }
  Eigen::LLT<Eigen::MatrixXd> retry(sym + 1e-12 * trace * id);
  if (retry.info() == Eigen::Success) {
    return retry.solve(id);
  }
  throw SingularMatrixError("invert_spd: matrix is singular beyond jitter repair");
}

double logdet_spd(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(symmetric(m));
  if (llt.info() != Eigen::Success) {
    return -std::numeric_limits<double>::infinity();
  }
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double optimize_omega(const Eigen::MatrixXd& info_a, const Eigen::MatrixXd& info_b,
                      OmegaCriterion criterion) {
  if (info_a.rows() != info_a.cols() || info_b.rows() != info_b.cols() ||
      info_a.rows() != info_b.rows()) {
    throw std::invalid_argument("optimize_omega: information matrices must be square and matching");
  }
  if (!geom::is_valid_covariance(info_a) || !geom::is_valid_covariance(info_b)) {
    throw std::invalid_argument("optimize_omega: information matrices must be symmetric PSD");
  }

  const auto f = [&](double w) { return objective(info_a, info_b, w, criterion); };

  // Golden-section search for the interior minimum; the objective is unimodal
  // on [0, 1] for both criteria.
  double lo = 0.0, hi = 1.0;
  double x1 = hi - kInverseGolden * (hi - lo);
  double x2 = lo + kInverseGolden * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  while (hi - lo > kGoldenTolerance) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInverseGolden * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInverseGolden * (hi - lo);
      f2 = f(x2);
    }
  }
  double best = 0.5 * (lo + hi);
  double best_f = f(best);

  // Evaluate the endpoints explicitly so exact 0/1 are reachable. Strict
  // comparison keeps the interior point on a perfectly flat objective.
  const double f0 = f(0.0);
  const double f1_end = f(1.0);
  if (f1_end < best_f) {
    best = 1.0;
    best_f = f1_end;
  }
  if (f0 < best_f) {
    best = 0.0;
    best_f = f0;
  }
  if (!std::isfinite(best_f)) {
    throw SingularMatrixError("optimize_omega: no weight yields an invertible combination");
  }
  return best;
}

CiResult ci_fuse(const geom::GaussianEstimate& a, const geom::GaussianEstimate& b,
                 const ObservationMatrix& h, const CiOptions& options) {
  geom::validate_estimate(a);
  geom::validate_estimate(b);
  if (h.state_dim() != a.mean.size()) {
    throw std::invalid_argument("ci_fuse: observation matrix columns must match dim of a");
  }
  if (h.observed_dim() != b.mean.size()) {
    throw std::invalid_argument("ci_fuse: observation matrix rows must match dim of b");
  }

  const Eigen::MatrixXd info_a = invert_spd(a.cov);
  const Eigen::MatrixXd info_b_full = invert_spd(b.cov);
  const Eigen::MatrixXd info_b = symmetric(h.matrix().transpose() * info_b_full * h.matrix());

  const double omega = optimize_omega(info_a, info_b, options.criterion);

  const Eigen::MatrixXd info = symmetric(omega * info_a + (1.0 - omega) * info_b);
  CiResult result;
  result.omega = omega;
  result.fused.cov = invert_spd(info);
  geom::symmetrize(result.fused.cov);
  result.fused.mean = result.fused.cov * (omega * info_a * a.mean +
                                          (1.0 - omega) * h.matrix().transpose() *
                                              (info_b_full * b.mean));
  return result;
}

}  // namespace cpf::ci
