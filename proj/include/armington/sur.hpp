#pragma once

// Two-equation feasible-GLS (seemingly unrelated regressions) for the
// supply-at-theta block and the equilibrium block. The blocks have different
// sample sizes; residual covariance couples each supply observation i to its
// matched equilibrium cell (i, theta) and nothing else.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "armington/errors.hpp"
#include "armington/linreg.hpp"

namespace armington {

struct SurSystem {
  LinearSystem supply;       // block A
  LinearSystem equilibrium;  // block B
  // linkage[j] = (row in supply block, row in equilibrium block); every supply
  // observation appears exactly once.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> linkage;
};

struct SurOptions {
  bool iterate = true;  // iterate covariance/GLS to a fixed point
  int max_iterations = 50;
  double tol = 1e-8;
  bool zero_cross_covariance = false;  // force sigma_ab = 0 (sensitivity/testing)
};

struct SurResult {
  RegressionResult stacked;  // coefficients [supply..., equilibrium...]
  Eigen::Matrix2d sigma = Eigen::Matrix2d::Zero();  // cross-equation covariance
  bool fell_back_to_ols = false;
  int iterations = 0;
  long k_supply = 0;
  long k_equilibrium = 0;
};

namespace detail {

inline void validate_sur(const SurSystem& sur) {
  const long na = sur.supply.n();
  const long nb = sur.equilibrium.n();
  if (sur.linkage.size() != static_cast<std::size_t>(na))
    throw DimensionError("sur: every supply observation needs exactly one linked equilibrium cell");
  std::vector<bool> seen_a(na, false), seen_b(nb, false);
  for (const auto& [a, b] : sur.linkage) {
    if (a < 0 || a >= na || b < 0 || b >= nb) throw DimensionError("sur: linkage index out of range");
    if (seen_a[a] || seen_b[b]) throw DimensionError("sur: linkage is not one-to-one");
    seen_a[a] = true;
    seen_b[b] = true;
  }
}

struct StackedDesign {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<Eigen::Index> match_of_b;  // row in A matched to B row, -1 if none
};

inline StackedDesign stack(const SurSystem& sur) {
  const long na = sur.supply.n();
  const long nb = sur.equilibrium.n();
  const long ka = sur.supply.k();
  const long kb = sur.equilibrium.k();
  StackedDesign d;
  d.y.resize(na + nb);
  d.y << sur.supply.y, sur.equilibrium.y;
  d.X = Eigen::MatrixXd::Zero(na + nb, ka + kb);
  d.X.topLeftCorner(na, ka) = sur.supply.X;
  d.X.bottomRightCorner(nb, kb) = sur.equilibrium.X;
  d.match_of_b.assign(nb, -1);
  for (const auto& [a, b] : sur.linkage) d.match_of_b[b] = a;
  return d;
}

}  // namespace detail

// Per-equation OLS points with the joint covariance of the stacked
// coefficients, the cross block running through the matched (i, theta)
// residual pairs:
//   cov(b_A, b_B) = sigma_ab (X_A'X_A)^-1 [sum_pairs x_A x_B'] (X_B'X_B)^-1.
//
// This is the estimator behind the reported elasticities: the normalization-
// point regressor shares the matched cell's demand shock with the equilibrium
// error, so GLS-coupled points are inconsistent in this system, while the
// correlation is real and belongs in the joint covariance that the recovery's
// delta-method standard error consumes.
inline SurResult sur_joint_ols(const SurSystem& sur, const SurOptions& options = {}) {
  detail::validate_sur(sur);
  const long na = sur.supply.n();
  const long ka = sur.supply.k();
  const long kb = sur.equilibrium.k();

  const RegressionResult ols_a = ols(sur.supply);
  const RegressionResult ols_b = ols(sur.equilibrium);

  Eigen::Matrix2d sigma = Eigen::Matrix2d::Zero();
  Eigen::MatrixXd cross_moment = Eigen::MatrixXd::Zero(ka, kb);
  for (const auto& [a, b] : sur.linkage) {
    sigma(0, 0) += ols_a.residuals(a) * ols_a.residuals(a);
    sigma(1, 1) += ols_b.residuals(b) * ols_b.residuals(b);
    sigma(0, 1) += ols_a.residuals(a) * ols_b.residuals(b);
    cross_moment.noalias() += sur.supply.X.row(a).transpose() * sur.equilibrium.X.row(b);
  }
  sigma /= static_cast<double>(na);
  if (options.zero_cross_covariance) sigma(0, 1) = 0.0;
  sigma(1, 0) = sigma(0, 1);

  const Eigen::MatrixXd xtx_inv_a = ols_a.cov / ols_a.sigma2;
  const Eigen::MatrixXd xtx_inv_b = ols_b.cov / ols_b.sigma2;
  const Eigen::MatrixXd cov_ab = sigma(0, 1) * xtx_inv_a * cross_moment * xtx_inv_b;

  SurResult res;
  res.k_supply = ka;
  res.k_equilibrium = kb;
  res.sigma = sigma;
  res.iterations = 1;
  res.stacked.beta.resize(ka + kb);
  res.stacked.beta << ols_a.beta, ols_b.beta;
  res.stacked.cov.resize(ka + kb, ka + kb);
  res.stacked.cov.topLeftCorner(ka, ka) = ols_a.cov;
  res.stacked.cov.bottomRightCorner(kb, kb) = ols_b.cov;
  res.stacked.cov.topRightCorner(ka, kb) = cov_ab;
  res.stacked.cov.bottomLeftCorner(kb, ka) = cov_ab.transpose();
  // moment noise can leave the assembled matrix marginally indefinite
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(res.stacked.cov);
    const double min_eig = es.eigenvalues().minCoeff();
    if (min_eig < 0.0) {
      Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0);
      res.stacked.cov =
          es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
    }
  }
  res.stacked.residuals.resize(na + sur.equilibrium.n());
  res.stacked.residuals << ols_a.residuals, ols_b.residuals;
  res.stacked.rss = ols_a.rss + ols_b.rss;
  res.stacked.n = na + sur.equilibrium.n();
  res.stacked.k = ka + kb;
  res.stacked.dof = ols_a.dof + ols_b.dof;
  res.stacked.sigma2 = res.stacked.rss / res.stacked.dof;
  res.stacked.tag = EstimatorTag::sur;
  return res;
}

// Step 1: OLS per block. Step 2: 2x2 residual covariance, the cross term from
// (i, theta)-matched pairs. Step 3: GLS on the stacked system, iterated to a
// fixed point unless options say otherwise. A non-positive-definite covariance
// estimate falls back to per-equation OLS with a flag.
inline SurResult sur_fgls(const SurSystem& sur, const SurOptions& options = {}) {
  detail::validate_sur(sur);
  const long na = sur.supply.n();
  const long nb = sur.equilibrium.n();
  const long ka = sur.supply.k();
  const long kb = sur.equilibrium.k();

  const RegressionResult ols_a = ols(sur.supply);
  const RegressionResult ols_b = ols(sur.equilibrium);

  // The full 2x2 comes from the matched residual pairs; same-sample moments
  // keep the estimate inside the Cauchy-Schwarz bound, so the OLS fallback
  // only fires on genuinely degenerate pairs.
  const auto estimate_sigma = [&](const Eigen::VectorXd& ea,
                                  const Eigen::VectorXd& eb) -> Eigen::Matrix2d {
    Eigen::Matrix2d s = Eigen::Matrix2d::Zero();
    for (const auto& [a, b] : sur.linkage) {
      s(0, 0) += ea(a) * ea(a);
      s(1, 1) += eb(b) * eb(b);
      s(0, 1) += ea(a) * eb(b);
    }
    s /= static_cast<double>(na);
    if (options.zero_cross_covariance) s(0, 1) = 0.0;
    s(1, 0) = s(0, 1);
    return s;
  };

  const auto per_equation_fallback = [&]() {
    SurResult res;
    res.fell_back_to_ols = true;
    res.k_supply = ka;
    res.k_equilibrium = kb;
    res.stacked.beta.resize(ka + kb);
    res.stacked.beta << ols_a.beta, ols_b.beta;
    res.stacked.cov = Eigen::MatrixXd::Zero(ka + kb, ka + kb);
    res.stacked.cov.topLeftCorner(ka, ka) = ols_a.cov;
    res.stacked.cov.bottomRightCorner(kb, kb) = ols_b.cov;
    res.stacked.residuals.resize(na + nb);
    res.stacked.residuals << ols_a.residuals, ols_b.residuals;
    res.stacked.rss = ols_a.rss + ols_b.rss;
    res.stacked.n = na + nb;
    res.stacked.k = ka + kb;
    res.stacked.dof = ols_a.dof + ols_b.dof;
    res.stacked.sigma2 = res.stacked.rss / res.stacked.dof;
    res.stacked.tag = EstimatorTag::sur;
    res.sigma = estimate_sigma(ols_a.residuals, ols_b.residuals);
    return res;
  };

  Eigen::Matrix2d sigma = estimate_sigma(ols_a.residuals, ols_b.residuals);
  const auto is_pd = [](const Eigen::Matrix2d& s) {
    return s(0, 0) > 0.0 && s(1, 1) > 0.0 && s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0) > 0.0;
  };
  if (!is_pd(sigma)) return per_equation_fallback();

  const detail::StackedDesign design = detail::stack(sur);
  Eigen::VectorXd beta(ka + kb);
  beta << ols_a.beta, ols_b.beta;

  Eigen::MatrixXd cov;
  Eigen::VectorXd resid;
  int iterations = 0;
  const int rounds = options.iterate ? options.max_iterations : 1;
  for (int it = 0; it < rounds; ++it) {
    // Whiten with the per-pair Cholesky factor; unmatched equilibrium rows
    // only rescale.
    const double l00 = std::sqrt(sigma(0, 0));
    const double l10 = sigma(0, 1) / l00;
    const double cond_var = sigma(1, 1) - l10 * l10;
    if (!(cond_var > 0.0)) return per_equation_fallback();
    const double l11 = std::sqrt(cond_var);
    const double sb = std::sqrt(sigma(1, 1));

    Eigen::VectorXd yw = design.y;
    Eigen::MatrixXd Xw = design.X;
    for (Eigen::Index b = 0; b < nb; ++b) {
      const Eigen::Index row_b = na + b;
      if (design.match_of_b[b] < 0) {
        yw(row_b) /= sb;
        Xw.row(row_b) /= sb;
      }
    }
    for (const auto& [a, b] : sur.linkage) {
      const Eigen::Index row_b = na + b;
      // forward-substitute L^-1 on the (a, b) pair
      yw(a) = design.y(a) / l00;
      Xw.row(a) = design.X.row(a) / l00;
      yw(row_b) = (design.y(row_b) - l10 * yw(a)) / l11;
      Xw.row(row_b) = (design.X.row(row_b) - l10 * Xw.row(a)) / l11;
    }

    auto [beta_new, xtx_inv] = detail::qr_solve(Xw, yw, "sur gls");
    cov = xtx_inv;  // GLS covariance (X' Omega^-1 X)^-1
    resid = design.y - design.X * beta_new;
    const double change = (beta_new - beta).cwiseAbs().maxCoeff();
    beta = beta_new;
    iterations = it + 1;

    Eigen::Matrix2d sigma_new =
        estimate_sigma(resid.head(na), resid.tail(nb));
    if (!is_pd(sigma_new)) return per_equation_fallback();
    sigma = sigma_new;
    if (change < options.tol) break;
  }

  SurResult res;
  res.k_supply = ka;
  res.k_equilibrium = kb;
  res.iterations = iterations;
  res.sigma = sigma;
  res.stacked.beta = beta;
  res.stacked.cov = cov;
  res.stacked.residuals = resid;
  res.stacked.rss = resid.squaredNorm();
  res.stacked.n = na + nb;
  res.stacked.k = ka + kb;
  res.stacked.dof = (na - ka - sur.supply.absorbed_dof) + (nb - kb - sur.equilibrium.absorbed_dof);
  res.stacked.sigma2 = res.stacked.rss / res.stacked.dof;
  res.stacked.tag = EstimatorTag::sur;
  return res;
}

}  // namespace armington
