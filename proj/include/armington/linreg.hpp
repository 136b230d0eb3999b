#pragma once

// Linear estimation engines shared by every pipeline: OLS/WLS and two-stage
// least squares. Solves go through rank-revealing QR, never an explicit
// inverse of X'X; rank tolerance is eps * max(n, k) * |largest pivot|.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "armington/errors.hpp"

namespace armington {

struct LinearSystem {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  Eigen::VectorXd weights;      // empty => unweighted
  Eigen::MatrixXd instruments;  // empty => none
  // Degrees of freedom absorbed upstream (e.g. two-way demeaning removes
  // N + T - 1 effects); enters the residual-variance denominator.
  long absorbed_dof = 0;

  long n() const { return y.size(); }
  long k() const { return X.cols(); }
  long m() const { return instruments.size() == 0 ? 0 : instruments.cols(); }
};

enum class EstimatorTag { ols, wls, tsls, sur };

enum class CovKind { classical, robust };

struct RegressionResult {
  Eigen::VectorXd beta;
  Eigen::MatrixXd cov;
  Eigen::VectorXd residuals;  // original (unweighted) scale
  double rss = 0.0;           // weighted when the system is weighted
  double sigma2 = 0.0;        // rss / dof
  long n = 0, k = 0, m = 0;
  long dof = 0;
  EstimatorTag tag = EstimatorTag::ols;

  double se(Eigen::Index j) const { return std::sqrt(cov(j, j)); }
  double tstat(Eigen::Index j) const { return beta(j) / se(j); }
};

namespace detail {

inline void check_weights(const LinearSystem& sys) {
  if (sys.weights.size() == 0) return;
  if (sys.weights.size() != sys.n())
    throw DimensionError("weights length does not match observation count");
  for (Eigen::Index r = 0; r < sys.weights.size(); ++r)
    if (!(sys.weights(r) > 0.0) || !std::isfinite(sys.weights(r)))
      throw DimensionError("weights must be strictly positive and finite");
}

// Rank-checked QR solve; returns (beta, (X'X)^-1).
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> qr_solve(const Eigen::MatrixXd& X,
                                                            const Eigen::VectorXd& y,
                                                            const char* what) {
  const long n = X.rows();
  const long k = X.cols();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(n, k)));
  if (qr.rank() < k) {
    const Eigen::Index offending = qr.colsPermutation().indices()(qr.rank());
    throw SingularityError(std::string(what) + ": design is rank deficient at column " +
                           std::to_string(offending));
  }
  const Eigen::VectorXd beta = qr.solve(y);
  // (X'X)^-1 = P R^-1 R^-T P'
  const Eigen::MatrixXd r =
      qr.matrixQR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
  const Eigen::MatrixXd rinv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  Eigen::MatrixXd xtx_inv = rinv * rinv.transpose();
  const auto& perm = qr.colsPermutation();
  xtx_inv = perm * xtx_inv * perm.transpose();
  return {beta, xtx_inv};
}

inline Eigen::MatrixXd robust_sandwich(const Eigen::MatrixXd& X, const Eigen::VectorXd& resid,
                                       const Eigen::MatrixXd& xtx_inv) {
  // HC0 sandwich
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(X.cols(), X.cols());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double e2 = resid(r) * resid(r);
    meat.noalias() += e2 * X.row(r).transpose() * X.row(r);
  }
  return xtx_inv * meat * xtx_inv;
}

}  // namespace detail

// (Weighted) least squares with classical covariance sigma2 * (X'WX)^-1 by
// default; robust switches to the HC0 sandwich.
inline RegressionResult ols(const LinearSystem& sys, CovKind cov_kind = CovKind::classical) {
  const long n = sys.n();
  const long k = sys.k();
  if (sys.X.rows() != n) throw DimensionError("ols: X rows do not match y");
  if (n <= k + sys.absorbed_dof)
    throw DimensionError("ols: need more observations than parameters (n=" + std::to_string(n) +
                         ", k=" + std::to_string(k) + ")");
  if (sys.instruments.size() != 0) throw DimensionError("ols: system carries instruments; use tsls");
  detail::check_weights(sys);

  Eigen::MatrixXd Xw = sys.X;
  Eigen::VectorXd yw = sys.y;
  const bool weighted = sys.weights.size() > 0;
  if (weighted) {
    const Eigen::ArrayXd sw = sys.weights.array().sqrt();
    Xw.array().colwise() *= sw;
    yw.array() *= sw;
  }

  auto [beta, xtx_inv] = detail::qr_solve(Xw, yw, "ols");

  RegressionResult res;
  res.beta = beta;
  res.residuals = sys.y - sys.X * beta;
  res.rss = weighted ? (sys.weights.array() * res.residuals.array().square()).sum()
                     : res.residuals.squaredNorm();
  res.n = n;
  res.k = k;
  res.m = 0;
  res.dof = n - k - sys.absorbed_dof;
  res.sigma2 = res.rss / res.dof;
  if (cov_kind == CovKind::classical) {
    res.cov = res.sigma2 * xtx_inv;
  } else {
    Eigen::VectorXd resid_w = res.residuals;
    if (weighted) resid_w.array() *= sys.weights.array().sqrt();
    res.cov = detail::robust_sandwich(Xw, resid_w, xtx_inv);
  }
  res.tag = weighted ? EstimatorTag::wls : EstimatorTag::ols;
  return res;
}

// Two-stage least squares. Instruments must span at least k directions; the
// classical covariance is sigma2 * (Xhat'Xhat)^-1 with residuals measured
// against the original regressors.
inline RegressionResult tsls(const LinearSystem& sys, CovKind cov_kind = CovKind::classical) {
  const long n = sys.n();
  const long k = sys.k();
  const long m = sys.m();
  if (sys.X.rows() != n) throw DimensionError("tsls: X rows do not match y");
  if (m == 0) throw DimensionError("tsls: no instruments supplied");
  if (sys.instruments.rows() != n) throw DimensionError("tsls: instrument rows do not match y");
  if (m < k)
    throw DimensionError("tsls: under-identified, " + std::to_string(m) + " instruments for " +
                         std::to_string(k) + " regressors");
  if (n <= k + sys.absorbed_dof) throw DimensionError("tsls: need more observations than parameters");
  if (sys.weights.size() != 0) throw DimensionError("tsls: weights are not supported");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> wqr(sys.instruments);
  wqr.setThreshold(std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(n, m)));
  if (wqr.rank() < m) {
    const Eigen::Index offending = wqr.colsPermutation().indices()(wqr.rank());
    throw SingularityError("tsls: instrument matrix is rank deficient at column " +
                           std::to_string(offending));
  }
  const Eigen::MatrixXd q = wqr.householderQ() * Eigen::MatrixXd::Identity(n, m);
  const Eigen::MatrixXd x_hat = q * (q.transpose() * sys.X);

  Eigen::VectorXd beta;
  Eigen::MatrixXd xtx_inv;
  try {
    std::tie(beta, xtx_inv) = detail::qr_solve(x_hat, sys.y, "tsls projected design");
  } catch (const SingularityError&) {
    throw SingularityError("tsls: projected design is rank deficient (weak or collinear instruments)");
  }

  RegressionResult res;
  res.beta = beta;
  res.residuals = sys.y - sys.X * beta;
  res.rss = res.residuals.squaredNorm();
  res.n = n;
  res.k = k;
  res.m = m;
  res.dof = n - k - sys.absorbed_dof;
  res.sigma2 = res.rss / res.dof;
  res.cov = cov_kind == CovKind::classical
                ? Eigen::MatrixXd(res.sigma2 * xtx_inv)
                : detail::robust_sandwich(x_hat, res.residuals, xtx_inv);
  res.tag = EstimatorTag::tsls;
  return res;
}

}  // namespace armington
