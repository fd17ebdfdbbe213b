#pragma once

#include <Eigen/Dense>
#include <stdexcept>

#include "cpf/geometry.hpp"

namespace cpf::ci {

/// Thrown when a covariance cannot be Cholesky-inverted even after one
/// jitter retry; callers should treat the estimate as unusable, not crash.
struct SingularMatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Linear map H (m x n, m <= n, full row rank) taking the state of one
/// estimate onto the lower-dimensional space a second estimate lives in.
/// Validated once at construction so fusion hot paths can trust it.
class ObservationMatrix {
 public:
  explicit ObservationMatrix(Eigen::MatrixXd h);

  [[nodiscard]] static ObservationMatrix identity(Eigen::Index n);
  /// [I 0]: keeps the first `observed` components of a `state_dim` state.
  [[nodiscard]] static ObservationMatrix leading_block(Eigen::Index observed,
                                                       Eigen::Index state_dim);

  [[nodiscard]] const Eigen::MatrixXd& matrix() const { return h_; }
  [[nodiscard]] Eigen::Index observed_dim() const { return h_.rows(); }
  [[nodiscard]] Eigen::Index state_dim() const { return h_.cols(); }

 private:
  Eigen::MatrixXd h_;
};

/// Scalar functional of the fused covariance minimized by the weight search.
/// Determinant is the default; Trace is available for experimentation.
enum class OmegaCriterion { Determinant, Trace };

struct CiOptions {
  OmegaCriterion criterion = OmegaCriterion::Determinant;
};

struct CiResult {
  geom::GaussianEstimate fused;
  double omega = 0.0;
};

/// Inverts a symmetric positive-definite matrix via Cholesky after
/// re-symmetrizing. Retries once with +1e-12 * trace jitter on the diagonal,
/// then throws SingularMatrixError. Indefinite input (a negative eigenvalue
/// beyond tolerance) throws std::invalid_argument instead.
[[nodiscard]] Eigen::MatrixXd invert_spd(const Eigen::MatrixXd& m);

/// log(det(m)) through Cholesky; -inf when m is not positive definite.
[[nodiscard]] double logdet_spd(const Eigen::MatrixXd& m);

/// Finds the weight in [0, 1] minimizing the chosen functional of
///   C(omega) = (omega * info_a + (1 - omega) * info_b)^-1
/// by golden-section search with interval tolerance 1e-9. Both endpoints are
/// also evaluated explicitly, so 0 and 1 are returned exactly when they win;
/// on a flat objective the interior golden-section point is kept. Arguments
/// are information matrices (inverse covariances); info_b may be rank
/// deficient, in which case omega = 0 can never win.
[[nodiscard]] double optimize_omega(const Eigen::MatrixXd& info_a,
                                    const Eigen::MatrixXd& info_b,
                                    OmegaCriterion criterion = OmegaCriterion::Determinant);

/// Covariance intersection: fuses two estimates whose cross-correlation is
/// unknown,
///   C^-1 = w A^-1 + (1 - w) H^T B^-1 H
///   c    = C (w A^-1 a + (1 - w) H^T B^-1 b)
/// with w chosen by optimize_omega. H maps the state of `a` onto the space of
/// `b` (identity when both have the same layout). The result is consistent for
/// any correlation between the inputs at the price of a conservative C; fusing
/// an estimate with information already folded into it leaves it unchanged.
[[nodiscard]] CiResult ci_fuse(const geom::GaussianEstimate& a,
                               const geom::GaussianEstimate& b,
                               const ObservationMatrix& h,
                               const CiOptions& options = {});

}  // namespace cpf::ci
