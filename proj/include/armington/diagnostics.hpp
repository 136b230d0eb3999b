#pragma once

// The three specification tests reported alongside IV estimates: first-stage
// strength (Cragg-Donald Wald F), overidentification (Sargan), and
// endogeneity (Davidson-MacKinnon augmented-regression F).
//
// Inputs are centered internally, which makes every statistic invariant to
// affine rescaling of the instruments. Double-demeaned inputs are already
// centered, so this is a no-op for the pipelines.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "armington/errors.hpp"
#include "armington/linreg.hpp"
#include "armington/stats.hpp"

namespace armington {

struct TestResult {
  std::string name;
  double statistic = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> p_value;
  std::vector<long> df;
  std::string verdict;  // pass | fail | reject | fail_to_reject | not_applicable
  bool applicable = true;
  std::string note;
};

namespace detail {

inline Eigen::MatrixXd centered(const Eigen::MatrixXd& x) {
  return x.rowwise() - x.colwise().mean();
}

inline Eigen::VectorXd centered(const Eigen::VectorXd& x) {
  return x.array() - x.mean();
}

// Residual sum of squares of x projected on the columns of w.
inline double projection_rss(const Eigen::VectorXd& x, const Eigen::MatrixXd& w) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(w);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(w.rows(), w.cols());
  const Eigen::VectorXd fitted = q * (q.transpose() * x);
  return (x - fitted).squaredNorm();
}

}  // namespace detail

inline constexpr double kCraggDonaldRule = 10.0;  // rule-of-thumb threshold
inline constexpr double kFStatCap = 1e12;         // reported when the first stage fits exactly

// First-stage F statistic of the excluded instruments, after partialling any
// included exogenous regressors out of both sides. Single endogenous
// regressor; verdict follows the F > 10 rule of thumb, no p-value.
inline TestResult cragg_donald_f(const Eigen::VectorXd& endogenous,
                                 const Eigen::MatrixXd& instruments,
                                 const Eigen::MatrixXd* included_exog = nullptr,
                                 long absorbed_dof = 0) {
  const long n = endogenous.size();
  const long m = instruments.cols();
  if (instruments.rows() != n) throw DimensionError("cragg_donald_f: instrument rows mismatch");
  if (m < 1) throw DimensionError("cragg_donald_f: no instruments");

  Eigen::VectorXd x = detail::centered(endogenous);
  Eigen::MatrixXd w = detail::centered(Eigen::MatrixXd(instruments));
  long k_exog = 0;
  if (included_exog && included_exog->cols() > 0) {
    if (included_exog->rows() != n) throw DimensionError("cragg_donald_f: exog rows mismatch");
    const Eigen::MatrixXd e = detail::centered(*included_exog);
    k_exog = e.cols();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(e);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k_exog);
    x -= q * (q.transpose() * x);
    w -= q * (q.transpose() * w);
  }

  const double tss = x.squaredNorm();
  if (!(tss > 0.0))
    throw EstimationError("degenerate_fit", "cragg_donald_f: endogenous regressor has no variation");

  const long dof2 = n - m - k_exog - 1 - absorbed_dof;
  if (dof2 < 1) throw DimensionError("cragg_donald_f: not enough observations");

  const double rss = detail::projection_rss(x, w);
  TestResult res;
  res.name = "cragg_donald_f";
  res.df = {m, dof2};
  if (rss <= 1e-12 * tss) {
    res.statistic = kFStatCap;
    res.verdict = "pass";
    res.note = "first stage fits exactly; statistic capped";
    return res;
  }
  res.statistic = ((tss - rss) / m) / (rss / dof2);
  res.verdict = res.statistic > kCraggDonaldRule ? "pass" : "fail";
  return res;
}

// Sargan overidentification statistic n * R^2 from regressing the 2SLS
// residuals on the full instrument set; chi-square with m - k degrees of
// freedom. Just-identified systems get a not-applicable result, mirroring the
// blank cells in the reporting tables.
inline TestResult sargan_test(const RegressionResult& tsls_result,
                              const Eigen::MatrixXd& instruments) {
  TestResult res;
  res.name = "sargan";
  const long n = tsls_result.n;
  const long m = instruments.cols();
  const long k = tsls_result.k;
  if (instruments.rows() != n) throw DimensionError("sargan_test: instrument rows mismatch");
  if (m <= k) {
    res.applicable = false;
    res.verdict = "not_applicable";
    res.note = "just-identified system";
    return res;
  }

  const Eigen::VectorXd e = detail::centered(tsls_result.residuals);
  const Eigen::MatrixXd w = detail::centered(Eigen::MatrixXd(instruments));
  const double tss = e.squaredNorm();
  if (!(tss > 0.0))
    throw EstimationError("degenerate_fit", "sargan_test: residuals have no variation");
  const double rss = detail::projection_rss(e, w);
  const double r2 = std::max(0.0, 1.0 - rss / tss);
  res.statistic = static_cast<double>(n) * r2;
  res.df = {m - k};
  res.p_value = stats::chi_squared_sf(res.statistic, static_cast<double>(m - k));
  res.verdict = *res.p_value < 0.05 ? "reject" : "pass";
  return res;
}

// Davidson-MacKinnon endogeneity test: add the first-stage residuals of the
// endogenous regressor to the OLS regression and F-test that coefficient.
// Rejection says the IV estimator should be employed.
inline TestResult davidson_mackinnon_test(const LinearSystem& ols_system,
                                          const Eigen::VectorXd& first_stage_residuals,
                                          long absorbed_dof = 0) {
  const long n = ols_system.n();
  const long k = ols_system.k();
  if (first_stage_residuals.size() != n)
    throw DimensionError("davidson_mackinnon_test: residual length mismatch");

  TestResult res;
  res.name = "davidson_mackinnon";
  const long dof2 = n - k - 1 - absorbed_dof;
  if (dof2 < 1) throw DimensionError("davidson_mackinnon_test: not enough observations");
  res.df = {1, dof2};

  // Instruments spanning the regressor leave nothing to test.
  const double v_scale = first_stage_residuals.squaredNorm();
  const double x_scale = std::max(1.0, ols_system.X.squaredNorm());
  if (v_scale <= 1e-20 * x_scale) {
    res.statistic = 0.0;
    res.p_value = 1.0;
    res.verdict = "fail_to_reject";
    res.note = "first-stage residuals are numerically zero";
    return res;
  }

  LinearSystem augmented;
  augmented.y = ols_system.y;
  augmented.X.resize(n, k + 1);
  augmented.X.leftCols(k) = ols_system.X;
  augmented.X.col(k) = first_stage_residuals;
  augmented.absorbed_dof = absorbed_dof;

  RegressionResult fit;
  try {
    fit = ols(augmented);
  } catch (const SingularityError&) {
    throw EstimationError("degenerate_augmentation",
                          "davidson_mackinnon_test: first-stage residuals are collinear with the design");
  }
  const double t = fit.tstat(k);
  res.statistic = t * t;
  res.p_value = stats::f_sf(res.statistic, 1.0, static_cast<double>(fit.dof));
  res.df = {1, fit.dof};
  res.verdict = *res.p_value < 0.05 ? "reject" : "fail_to_reject";
  return res;
}

}  // namespace armington
