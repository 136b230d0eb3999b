#pragma once

// End-to-end estimation strategies: the IVFE benchmark, Feenstra's moment
// method (FM), its implicit-IV extension (IIV), the supply+equilibrium SUR
// (plain and STRI-augmented), the pass-through, and the benchmark correction.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "armington/delta.hpp"
#include "armington/demean.hpp"
#include "armington/diagnostics.hpp"
#include "armington/errors.hpp"
#include "armington/linreg.hpp"
#include "armington/panel.hpp"
#include "armington/recovery.hpp"
#include "armington/report.hpp"
#include "armington/sur.hpp"

namespace armington {

enum class ThetaPolicy { last, min_rss, explicit_value };

enum class IivDerivatives { none, automatic };

struct EstimateOptions {
  // Point estimates per equation, cross-equation correlation in the joint
  // covariance (the consistent choice here; see sur_joint_ols). The coupled
  // FGLS variant is available for sensitivity checks.
  bool sur_gls_points = false;
  bool sur_iterate = true;            // iterate the FGLS variant
  bool fm_differences = false;        // reference-country time differences instead of demeaning
  bool try_level_instrument = true;   // IVFE secondary instrument [Z], Sargan-gated
  IivDerivatives iiv_derivatives = IivDerivatives::automatic;
  CovKind cov = CovKind::classical;
  double sargan_alpha = 0.05;
};

namespace detail {

struct FlattenedPanel {
  std::vector<CellIndex> cells;
  Eigen::MatrixXi cell_row;  // (i, t) -> flattened row, -1 if absent
  long absorbed = 0;         // two-way effects removed by demeaning
};

inline FlattenedPanel index_cells(const Mask& mask) {
  FlattenedPanel f;
  f.cells = present_cells(mask);
  f.cell_row = Eigen::MatrixXi::Constant(mask.rows(), mask.cols(), -1);
  for (std::size_t r = 0; r < f.cells.size(); ++r)
    f.cell_row(f.cells[r].i, f.cells[r].t) = static_cast<int>(r);
  f.absorbed = mask.rows() + mask.cols() - 1;
  return f;
}

// Supply block at theta: -ln Z = tau + omega ln S over countries present in
// `eligible` at theta.
inline LinearSystem supply_block(const MaskedSeries& ln_share, const MaskedSeries& ln_fx,
                                 const Mask& eligible, Eigen::Index th,
                                 std::vector<Eigen::Index>* countries_out = nullptr) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < eligible.rows(); ++i)
    if (eligible(i, th)) rows.push_back(i);
  if (rows.size() < 3)
    throw DimensionError("supply regression needs at least 3 countries at the normalization point, have " +
                         std::to_string(rows.size()));
  LinearSystem sys;
  const long n = static_cast<long>(rows.size());
  sys.y.resize(n);
  sys.X.resize(n, 2);
  for (long r = 0; r < n; ++r) {
    sys.y(r) = -ln_fx.values(rows[r], th);
    sys.X(r, 0) = 1.0;
    sys.X(r, 1) = ln_share.values(rows[r], th);
  }
  if (countries_out) *countries_out = rows;
  return sys;
}

inline void check_residual_mean(const Eigen::VectorXd& resid, double scale, const char* what) {
  // Double-demeaning removes the intercept analytically; a drifting mean means
  // the demeaner did not do its job.
  const double mean = std::fabs(resid.mean());
  if (mean > 1e-10 * std::max(1.0, scale))
    throw NumericalError(std::string(what) + ": residual mean " + std::to_string(mean) +
                         " betrays demeaning drift");
}

}  // namespace detail

// Slope of the double-demeaned share-on-exchange-rate regression: the
// equilibrium coefficient kappa, and the biased "naive" elasticity read
// sigma = 1 - slope.
inline RegressionResult naive_demeaned_slope(const Panel& panel) {
  const ShareSeries shares = compute_value_shares(panel);
  const DemeanedSeries s = double_demean(shares.log());
  const DemeanedSeries z = double_demean(panel.log_fx());
  const auto f = detail::index_cells(panel.mask());
  LinearSystem sys;
  sys.y = flatten(s.values, f.cells);
  sys.X = flatten(z.values, f.cells);
  sys.absorbed_dof = f.absorbed;
  return ols(sys);
}

// Normalization-point selection: the period whose cross-sectional supply
// regression attains the minimum RSS; ties break to the latest period.
inline long select_normalization_point(const Panel& panel) {
  const ShareSeries shares = compute_value_shares(panel);
  const MaskedSeries ln_share = shares.log();
  const MaskedSeries ln_fx = panel.log_fx();
  bool found = false;
  long best_period = 0;
  double best_rss = std::numeric_limits<double>::infinity();
  for (Eigen::Index th = 0; th < panel.n_periods(); ++th) {
    long present = 0;
    for (Eigen::Index i = 0; i < panel.n_countries(); ++i)
      if (panel.mask()(i, th)) ++present;
    if (present < 3) continue;
    const LinearSystem sys = detail::supply_block(ln_share, ln_fx, panel.mask(), th);
    const RegressionResult fit = ols(sys);
    if (fit.rss <= best_rss) {
      best_rss = fit.rss;
      best_period = panel.periods()[th];
      found = true;
    }
  }
  if (!found)
    throw DimensionError("select_normalization_point: no period has 3 or more countries");
  return best_period;
}

struct ThetaChoice {
  ThetaPolicy policy = ThetaPolicy::last;
  long value = 0;  // used when policy == explicit_value
};

inline long resolve_theta(const Panel& panel, const ThetaChoice& choice) {
  switch (choice.policy) {
    case ThetaPolicy::last: return panel.periods().back();
    case ThetaPolicy::min_rss: return select_normalization_point(panel);
    case ThetaPolicy::explicit_value:
      if (!panel.has_period(choice.value))
        throw DimensionError("theta period " + std::to_string(choice.value) + " is not in the panel");
      return choice.value;
  }
  throw DimensionError("theta policy not set");
}

// Exchange-rate pass-through phi = 1 + kappa*omega with its delta-method
// standard error from the joint (kappa, omega) covariance.
inline DeltaResult compute_erpt(double kappa, double omega, const Eigen::Matrix2d& cov_kw) {
  Eigen::VectorXd est(2);
  est << kappa, omega;
  return delta_method_se(
      est, cov_kw, [](const Eigen::VectorXd& b) { return exchange_rate_passthrough(b(0), b(1)); },
      [](const Eigen::VectorXd& b) {
        Eigen::VectorXd g(2);
        g << b(1), b(0);
        return g;
      });
}

// --- SUR ------------------------------------------------------------------

// Joint estimation of the supply equation at theta and the double-demeaned
// equilibrium equation, with the residual covariance linked through the
// (i, theta) cells. sigma = 1 - kappa/(1 + kappa*omega).
inline MethodReport estimate_sur(const Panel& panel, long theta, const EstimateOptions& options = {}) {
  const Eigen::Index th = panel.period_index(theta);
  const ShareSeries shares = compute_value_shares(panel);
  const MaskedSeries ln_share = shares.log();
  const MaskedSeries ln_fx = panel.log_fx();

  std::vector<Eigen::Index> supply_countries;
  SurSystem sur;
  sur.supply = detail::supply_block(ln_share, ln_fx, panel.mask(), th, &supply_countries);

  const DemeanedSeries s = double_demean(ln_share);
  const DemeanedSeries z = double_demean(ln_fx);
  const auto f = detail::index_cells(panel.mask());
  sur.equilibrium.y = flatten(s.values, f.cells);
  sur.equilibrium.X = flatten(z.values, f.cells);
  sur.equilibrium.absorbed_dof = f.absorbed;

  for (std::size_t j = 0; j < supply_countries.size(); ++j) {
    const int row_b = f.cell_row(supply_countries[j], th);
    sur.linkage.emplace_back(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(row_b));
  }

  SurOptions sur_options;
  sur_options.iterate = options.sur_iterate;
  const SurResult joint =
      options.sur_gls_points ? sur_fgls(sur, sur_options) : sur_joint_ols(sur, sur_options);

  const Eigen::VectorXd resid_b = joint.stacked.residuals.tail(sur.equilibrium.n());
  detail::check_residual_mean(resid_b, sur.equilibrium.y.cwiseAbs().maxCoeff(), "sur equilibrium block");

  // stacked coefficients: (tau, omega | kappa)
  const double tau = joint.stacked.beta(0);
  const double omega = joint.stacked.beta(1);
  const double kappa = joint.stacked.beta(2);

  const Eigen::VectorXd est = joint.stacked.beta;
  const DeltaResult sigma = delta_method_se(
      est, joint.stacked.cov,
      [](const Eigen::VectorXd& b) { return recover_sigma(b(2), b(1)); },
      [](const Eigen::VectorXd& b) {
        const Eigen::Vector2d g = recover_sigma_gradient(b(2), b(1));
        Eigen::VectorXd out(3);
        out << 0.0, g(1), g(0);
        return out;
      });

  Eigen::Matrix2d cov_kw;
  cov_kw << joint.stacked.cov(2, 2), joint.stacked.cov(2, 1), joint.stacked.cov(1, 2),
      joint.stacked.cov(1, 1);
  const DeltaResult phi = compute_erpt(kappa, omega, cov_kw);

  MethodReport report;
  report.method = Method::sur;
  report.sigma = sigma.value;
  report.sigma_se = sigma.se;
  report.gamma = 1.0 - sigma.value;
  report.kappa = kappa;
  report.kappa_se = joint.stacked.se(2);
  report.omega = omega;
  report.omega_se = joint.stacked.se(1);
  report.tau = tau;
  report.tau_se = joint.stacked.se(0);
  report.phi = phi.value;
  report.phi_se = phi.se;
  report.theta = theta;
  report.n_obs = sur.equilibrium.n();
  if (joint.fell_back_to_ols)
    report.warnings.push_back("sur covariance not positive definite; fell back to per-equation OLS");
  check_report_identities(report);
  return report;
}

// STRI-augmented SUR: the equilibrium block gains the demeaned log
// restrictiveness index; recovers the STRI elasticity eta = mu/(1 + kappa*omega)
// jointly with sigma. All equilibrium variables are demeaned over the cells
// where the index is available.
inline MethodReport estimate_sur_stri(const Panel& panel, long theta,
                                      const EstimateOptions& options = {}) {
  if (!panel.has_stri()) throw NotApplicableError("sur_stri requires an stri column with values in (0, 1]");

  // Restrict to the observations the index covers; countries and periods
  // outside the index drop out and shares are recomputed over that basket.
  std::vector<PanelObservation> covered;
  for (Eigen::Index i = 0; i < panel.n_countries(); ++i) {
    for (Eigen::Index t = 0; t < panel.n_periods(); ++t) {
      if (!panel.mask()(i, t) || std::isnan(panel.stri()(i, t))) continue;
      PanelObservation obs;
      obs.country = panel.countries()[i];
      obs.period = panel.periods()[t];
      obs.value = panel.values()(i, t);
      obs.fx_rate = panel.fx_rates()(i, t);
      if (!std::isnan(panel.quantities()(i, t))) obs.quantity = panel.quantities()(i, t);
      obs.stri = panel.stri()(i, t);
      covered.push_back(std::move(obs));
    }
  }
  if (covered.size() < 6) throw DimensionError("sur_stri: too few observations carry the index");
  const Panel sub = Panel::from_observations(covered);
  const Eigen::Index th = sub.period_index(theta);

  const ShareSeries shares = compute_value_shares(sub);
  const MaskedSeries ln_share = shares.log();
  const MaskedSeries ln_fx = sub.log_fx();
  const MaskedSeries ln_stri = sub.log_stri();

  std::vector<Eigen::Index> supply_countries;
  SurSystem sur;
  sur.supply = detail::supply_block(ln_share, ln_fx, sub.mask(), th, &supply_countries);

  const DemeanedSeries s = double_demean(ln_share);
  const DemeanedSeries z = double_demean(ln_fx);
  const DemeanedSeries r = double_demean(ln_stri);
  const auto f = detail::index_cells(sub.mask());
  sur.equilibrium.y = flatten(s.values, f.cells);
  sur.equilibrium.X.resize(static_cast<long>(f.cells.size()), 2);
  sur.equilibrium.X.col(0) = flatten(z.values, f.cells);
  sur.equilibrium.X.col(1) = flatten(r.values, f.cells);
  sur.equilibrium.absorbed_dof = f.absorbed;

  for (std::size_t j = 0; j < supply_countries.size(); ++j) {
    const int row_b = f.cell_row(supply_countries[j], th);
    sur.linkage.emplace_back(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(row_b));
  }

  SurOptions sur_options;
  sur_options.iterate = options.sur_iterate;
  SurResult joint;
  try {
    joint = options.sur_gls_points ? sur_fgls(sur, sur_options) : sur_joint_ols(sur, sur_options);
  } catch (const SingularityError&) {
    throw SingularityError("sur_stri: [ln Z] and [ln R] are collinear beyond the rank tolerance");
  }

  const Eigen::VectorXd resid_b = joint.stacked.residuals.tail(sur.equilibrium.n());
  detail::check_residual_mean(resid_b, sur.equilibrium.y.cwiseAbs().maxCoeff(), "sur_stri equilibrium block");

  // stacked coefficients: (tau, omega | kappa, mu)
  const double tau = joint.stacked.beta(0);
  const double omega = joint.stacked.beta(1);
  const double kappa = joint.stacked.beta(2);
  const double mu = joint.stacked.beta(3);

  const DeltaResult sigma = delta_method_se(
      joint.stacked.beta, joint.stacked.cov,
      [](const Eigen::VectorXd& b) { return recover_sigma(b(2), b(1)); },
      [](const Eigen::VectorXd& b) {
        const Eigen::Vector2d g = recover_sigma_gradient(b(2), b(1));
        Eigen::VectorXd out(4);
        out << 0.0, g(1), g(0), 0.0;
        return out;
      });
  const DeltaResult eta = delta_method_se(
      joint.stacked.beta, joint.stacked.cov,
      [](const Eigen::VectorXd& b) { return recover_eta(b(3), b(2), b(1)); },
      [](const Eigen::VectorXd& b) {
        const Eigen::Vector3d g = recover_eta_gradient(b(3), b(2), b(1));
        Eigen::VectorXd out(4);
        out << 0.0, g(2), g(1), g(0);
        return out;
      });

  Eigen::Matrix2d cov_kw;
  cov_kw << joint.stacked.cov(2, 2), joint.stacked.cov(2, 1), joint.stacked.cov(1, 2),
      joint.stacked.cov(1, 1);
  const DeltaResult phi = compute_erpt(kappa, omega, cov_kw);

  MethodReport report;
  report.method = Method::sur_stri;
  report.sigma = sigma.value;
  report.sigma_se = sigma.se;
  report.gamma = 1.0 - sigma.value;
  report.kappa = kappa;
  report.kappa_se = joint.stacked.se(2);
  report.omega = omega;
  report.omega_se = joint.stacked.se(1);
  report.tau = tau;
  report.tau_se = joint.stacked.se(0);
  report.mu = mu;
  report.mu_se = joint.stacked.se(3);
  report.eta = eta.value;
  report.eta_se = eta.se;
  report.phi = phi.value;
  report.phi_se = phi.se;
  report.theta = theta;
  report.n_obs = sur.equilibrium.n();
  if (panel.dropped_stri() > 0)
    report.warnings.push_back("masked " + std::to_string(panel.dropped_stri()) +
                              " stri cells outside (0, 1]");
  if (joint.fell_back_to_ols)
    report.warnings.push_back("sur covariance not positive definite; fell back to per-equation OLS");
  check_report_identities(report);
  return report;
}

// --- IVFE benchmark ---------------------------------------------------------

// Two-way FE regression of [ln S] on [ln P], P = Z V / X, with the exchange
// rate as instrument; the level Z joins as a secondary instrument while the
// Sargan test passes. Needs quantities, which is exactly what services lack.
inline MethodReport estimate_ivfe(const Panel& panel, const EstimateOptions& options = {}) {
  if (!panel.has_full_quantity())
    throw NotApplicableError("ivfe requires a quantity for every observation (prices are Z*V/X)");

  const ShareSeries shares = compute_value_shares(panel);
  const MaskedSeries ln_share = shares.log();
  const MaskedSeries ln_fx = panel.log_fx();

  MaskedSeries ln_price{Eigen::ArrayXXd::Constant(panel.n_countries(), panel.n_periods(), kAbsent),
                        panel.mask(), "ln_price"};
  for (Eigen::Index i = 0; i < panel.n_countries(); ++i)
    for (Eigen::Index t = 0; t < panel.n_periods(); ++t)
      if (panel.mask()(i, t))
        ln_price.values(i, t) = std::log(panel.fx_rates()(i, t)) +
                                std::log(panel.values()(i, t)) -
                                std::log(panel.quantities()(i, t));

  const DemeanedSeries s = double_demean(ln_share);
  const DemeanedSeries p = double_demean(ln_price);
  const DemeanedSeries z_log = double_demean(ln_fx);
  const DemeanedSeries z_level = double_demean(panel.fx_levels());

  const auto f = detail::index_cells(panel.mask());
  const Eigen::VectorXd s_vec = flatten(s.values, f.cells);
  const Eigen::VectorXd p_vec = flatten(p.values, f.cells);
  const Eigen::VectorXd z1 = flatten(z_log.values, f.cells);
  const Eigen::VectorXd z2 = flatten(z_level.values, f.cells);

  LinearSystem sys;
  sys.y = s_vec;
  sys.X = p_vec;
  sys.absorbed_dof = f.absorbed;

  MethodReport report;
  report.method = Method::ivfe;

  Eigen::MatrixXd instruments;
  if (options.try_level_instrument) {
    instruments.resize(s_vec.size(), 2);
    instruments.col(0) = z1;
    instruments.col(1) = z2;
    sys.instruments = instruments;
    try {
      const RegressionResult trial = tsls(sys, options.cov);
      const TestResult overid = sargan_test(trial, instruments);
      if (overid.applicable && overid.p_value && *overid.p_value < options.sargan_alpha) {
        report.warnings.push_back("secondary instrument fx level dropped by the Sargan gate");
        instruments = z1;
      } else {
        report.instruments = {"ln_fx", "fx"};
      }
    } catch (const SingularityError&) {
      report.warnings.push_back("secondary instrument fx level dropped: collinear with ln fx");
      instruments = z1;
    }
  } else {
    instruments = z1;
  }
  if (report.instruments.empty()) report.instruments = {"ln_fx"};
  sys.instruments = instruments;

  const RegressionResult fit = tsls(sys, options.cov);
  const RegressionResult first_stage = [&] {
    LinearSystem fs;
    fs.y = p_vec;
    fs.X = instruments;
    fs.absorbed_dof = f.absorbed;
    return ols(fs);
  }();

  report.diagnostics.push_back(cragg_donald_f(p_vec, instruments, nullptr, f.absorbed));
  report.diagnostics.push_back(sargan_test(fit, instruments));
  LinearSystem ols_sys;
  ols_sys.y = s_vec;
  ols_sys.X = p_vec;
  ols_sys.absorbed_dof = f.absorbed;
  report.diagnostics.push_back(
      davidson_mackinnon_test(ols_sys, first_stage.residuals, f.absorbed));

  report.sigma = 1.0 - fit.beta(0);
  report.sigma_se = fit.se(0);
  report.gamma = fit.beta(0);
  report.n_obs = fit.n;

  if (report.diagnostics[0].verdict == "fail")
    report.warnings.push_back("weak first stage: Cragg-Donald F below 10");
  if (report.diagnostics[2].verdict == "fail_to_reject") {
    const RegressionResult fe = ols(ols_sys, options.cov);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g (se %.3g)", 1.0 - fe.beta(0), fe.se(0));
    report.warnings.push_back(std::string("endogeneity not rejected: plain FE preferred, FE sigma = ") + buf);
  }
  check_report_identities(report);
  return report;
}

// --- Feenstra's method ------------------------------------------------------

namespace detail {

struct FmVariables {
  DemeanedSeries s;
  DemeanedSeries z;
  Mask mask;
};

// Default: double-demeaned variables. The differences variant removes time-
// and item-specific effects the way Feenstra's original does: first
// differences over time, then subtracting a reference country's differences;
// the reference country drops out of the sample.
inline FmVariables fm_variables(const Panel& panel, bool use_differences) {
  const ShareSeries shares = compute_value_shares(panel);
  if (!use_differences) {
    DemeanedSeries s = double_demean(shares.log());
    DemeanedSeries z = double_demean(panel.log_fx());
    return {std::move(s), std::move(z), panel.mask()};
  }

  const MaskedSeries ds = first_difference(shares.log(), "d_ln_share");
  const MaskedSeries dz = first_difference(panel.log_fx(), "d_ln_fx");
  Eigen::Index ref = 0;
  long best = -1;
  for (Eigen::Index i = 0; i < panel.n_countries(); ++i) {
    const long count = ds.mask.row(i).count();
    if (count > best) {
      best = count;
      ref = i;
    }
  }
  const Eigen::Index n = panel.n_countries();
  const Eigen::Index t_len = panel.n_periods();
  Eigen::ArrayXXd sv = Eigen::ArrayXXd::Constant(n, t_len, kAbsent);
  Eigen::ArrayXXd zv = Eigen::ArrayXXd::Constant(n, t_len, kAbsent);
  Mask mask = Mask::Constant(n, t_len, false);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == ref) continue;
    for (Eigen::Index t = 0; t < t_len; ++t) {
      if (ds.mask(i, t) && ds.mask(ref, t)) {
        sv(i, t) = ds.values(i, t) - ds.values(ref, t);
        zv(i, t) = dz.values(i, t) - dz.values(ref, t);
        mask(i, t) = true;
      }
    }
  }
  return {DemeanedSeries{std::move(sv), mask, "dd_ln_share"},
          DemeanedSeries{std::move(zv), mask, "dd_ln_fx"}, mask};
}

}  // namespace detail

// Feenstra's moment regression: per-country temporal averages of z^2 on s^2
// and s*z, first pass OLS for per-country residual variances, second pass WLS
// with T_i/v_i weights, then the quadratic-root recovery of (gamma, rho).
inline MethodReport estimate_fm(const Panel& panel, const EstimateOptions& options = {}) {
  const detail::FmVariables vars = detail::fm_variables(panel, options.fm_differences);

  struct CountryCells {
    Eigen::Index country;
    std::vector<Eigen::Index> periods;
  };
  std::vector<CountryCells> eligible;
  long total_cells = 0;
  long skipped = 0;
  for (Eigen::Index i = 0; i < vars.mask.rows(); ++i) {
    CountryCells cc;
    cc.country = i;
    for (Eigen::Index t = 0; t < vars.mask.cols(); ++t)
      if (vars.mask(i, t)) cc.periods.push_back(t);
    if (options.fm_differences && cc.periods.empty()) continue;  // reference country
    if (cc.periods.size() < 3) {
      if (!cc.periods.empty()) ++skipped;
      continue;
    }
    total_cells += static_cast<long>(cc.periods.size());
    eligible.push_back(std::move(cc));
  }
  if (eligible.size() < 3)
    throw DimensionError("fm: needs at least 3 countries with 3 or more observations, have " +
                         std::to_string(eligible.size()));

  const long nc = static_cast<long>(eligible.size());
  Eigen::VectorXd u_avg(nc), w1_avg(nc), w2_avg(nc), t_size(nc);
  for (long c = 0; c < nc; ++c) {
    double su = 0.0, sw1 = 0.0, sw2 = 0.0;
    for (const Eigen::Index t : eligible[c].periods) {
      const double s = vars.s.values(eligible[c].country, t);
      const double z = vars.z.values(eligible[c].country, t);
      su += z * z;
      sw1 += s * s;
      sw2 += s * z;
    }
    const double ti = static_cast<double>(eligible[c].periods.size());
    u_avg(c) = su / ti;
    w1_avg(c) = sw1 / ti;
    w2_avg(c) = sw2 / ti;
    t_size(c) = ti;
  }

  LinearSystem moment_sys;
  moment_sys.y = u_avg;
  moment_sys.X.resize(nc, 2);
  moment_sys.X.col(0) = w1_avg;
  moment_sys.X.col(1) = w2_avg;
  const RegressionResult first_pass = ols(moment_sys, options.cov);

  // cell-level residual variance of the moment identity, per country
  Eigen::VectorXd v(nc);
  double v_max = 0.0;
  for (long c = 0; c < nc; ++c) {
    double mean = 0.0;
    std::vector<double> xi;
    xi.reserve(eligible[c].periods.size());
    for (const Eigen::Index t : eligible[c].periods) {
      const double s = vars.s.values(eligible[c].country, t);
      const double z = vars.z.values(eligible[c].country, t);
      const double r = z * z - first_pass.beta(0) * s * s - first_pass.beta(1) * s * z;
      xi.push_back(r);
      mean += r;
    }
    mean /= static_cast<double>(xi.size());
    double var = 0.0;
    for (const double r : xi) var += (r - mean) * (r - mean);
    v(c) = var / static_cast<double>(xi.size() - 1);
    v_max = std::max(v_max, v(c));
  }

  MethodReport report;
  report.method = Method::fm;

  RegressionResult moments = first_pass;
  if (v_max > 0.0) {
    // exact per-country fits would send T_i/v_i to infinity; floor them
    const double v_floor = 1e-12 * v_max;
    moment_sys.weights.resize(nc);
    for (long c = 0; c < nc; ++c) moment_sys.weights(c) = t_size(c) / std::max(v(c), v_floor);
    moments = ols(moment_sys, options.cov);
  } else {
    report.warnings.push_back("moment regression fits exactly; WLS pass skipped");
  }

  const double alpha1 = moments.beta(0);
  const double alpha2 = moments.beta(1);
  const FmRoots roots = fm_invert_moments(alpha1, alpha2);
  const FmSelection sel = fm_select_root(roots);
  if (roots.degenerate)
    report.warnings.push_back("alpha1 is within tolerance of zero; single-root limit gamma = 1/alpha2");

  const double gamma_hat = sel.chosen.gamma;
  const DeltaResult sigma = delta_method_se(
      moments.beta, moments.cov,
      [gamma_hat](const Eigen::VectorXd& a) {
        const FmRoots r = fm_invert_moments(a(0), a(1));
        // track the root continuously: nearest to the chosen one
        const double g = std::fabs(r.first.gamma - gamma_hat) <= std::fabs(r.second.gamma - gamma_hat)
                             ? r.first.gamma
                             : r.second.gamma;
        return 1.0 - g;
      },
      [gamma_hat](const Eigen::VectorXd& a) {
        return Eigen::VectorXd(-fm_gamma_gradient(a(0), a(1), gamma_hat));
      });

  report.sigma = sigma.value;
  report.sigma_se = sigma.se;
  report.gamma = gamma_hat;
  report.rho = sel.chosen.rho;
  report.alpha1 = alpha1;
  report.alpha2 = alpha2;
  report.fm_root_alt = sel.other;
  report.fm_root_rule = sel.rule;
  report.n_obs = total_cells;
  if (skipped > 0)
    report.warnings.push_back("skipped " + std::to_string(skipped) +
                              " countries with fewer than 3 observations");
  check_report_identities(report);
  return report;
}

// The implicit instrumental variable nu = [ln Z] - rho [ln S] on the panel
// mask, from Feenstra's reverse-equation residual.
inline MaskedSeries construct_iiv(const Panel& panel, double rho) {
  if (!std::isfinite(rho)) throw NumericalError("construct_iiv: rho must be finite");
  const ShareSeries shares = compute_value_shares(panel);
  const DemeanedSeries s = double_demean(shares.log());
  const DemeanedSeries z = double_demean(panel.log_fx());
  Eigen::ArrayXXd values = Eigen::ArrayXXd::Constant(s.values.rows(), s.values.cols(), kAbsent);
  for (Eigen::Index i = 0; i < s.values.rows(); ++i)
    for (Eigen::Index t = 0; t < s.values.cols(); ++t)
      if (s.mask(i, t)) values(i, t) = z.values(i, t) - rho * s.values(i, t);
  return MaskedSeries{std::move(values), s.mask, "iiv"};
}

// 2SLS of [ln S] on [ln Z] instrumented by nu and, under the automatic
// policy, its lags and first difference while the Sargan test keeps passing.
inline MethodReport estimate_iiv(const Panel& panel, const EstimateOptions& options = {}) {
  const MethodReport fm = estimate_fm(panel, options);
  const double rho = *fm.rho;

  const ShareSeries shares = compute_value_shares(panel);
  const DemeanedSeries s = double_demean(shares.log());
  const DemeanedSeries z = double_demean(panel.log_fx());
  const MaskedSeries nu = construct_iiv(panel, rho);

  std::vector<MaskedSeries> chosen{nu};
  std::vector<std::string> names{"iiv"};

  const auto fit_with = [&](const std::vector<MaskedSeries>& instruments)
      -> std::tuple<RegressionResult, Eigen::MatrixXd, detail::FlattenedPanel, Eigen::VectorXd,
                    Eigen::VectorXd> {
    Mask common = panel.mask();
    for (const auto& inst : instruments) common = intersect(common, inst.mask);
    const auto f = detail::index_cells(common);
    const long n = static_cast<long>(f.cells.size());
    if (n < 10) throw DimensionError("iiv: too few overlapping cells for the instrument set");
    Eigen::VectorXd s_vec = flatten(s.values, f.cells);
    Eigen::VectorXd z_vec = flatten(z.values, f.cells);
    Eigen::MatrixXd w(n, static_cast<long>(instruments.size()));
    for (std::size_t j = 0; j < instruments.size(); ++j)
      w.col(static_cast<long>(j)) = flatten(instruments[j].values, f.cells);
    LinearSystem sys;
    sys.y = s_vec;
    sys.X = z_vec;
    sys.instruments = w;
    sys.absorbed_dof = f.absorbed;
    return {tsls(sys, options.cov), w, f, s_vec, z_vec};
  };

  if (options.iiv_derivatives == IivDerivatives::automatic) {
    const std::vector<std::pair<MaskedSeries, std::string>> candidates{
        {shift_periods(nu, +1, "iiv_lead"), "iiv_lead"},
        {shift_periods(nu, -1, "iiv_lag"), "iiv_lag"},
        {first_difference(nu, "iiv_diff"), "iiv_diff"}};
    for (const auto& [series, name] : candidates) {
      std::vector<MaskedSeries> trial = chosen;
      trial.push_back(series);
      try {
        const auto [fit, w, f, sv, zv] = fit_with(trial);
        const TestResult overid = sargan_test(fit, w);
        if (overid.applicable && overid.p_value && *overid.p_value >= options.sargan_alpha) {
          chosen = std::move(trial);
          names.push_back(name);
        }
      } catch (const Error&) {
        // candidate made the system unusable; leave it out
      }
    }
  }

  const auto [fit, w, f, s_vec, z_vec] = fit_with(chosen);

  MethodReport report;
  report.method = Method::iiv;
  report.instruments = names;

  const RegressionResult first_stage = [&] {
    LinearSystem fs;
    fs.y = z_vec;
    fs.X = w;
    fs.absorbed_dof = f.absorbed;
    return ols(fs);
  }();
  report.diagnostics.push_back(cragg_donald_f(z_vec, w, nullptr, f.absorbed));
  report.diagnostics.push_back(sargan_test(fit, w));
  LinearSystem ols_sys;
  ols_sys.y = s_vec;
  ols_sys.X = z_vec;
  ols_sys.absorbed_dof = f.absorbed;
  report.diagnostics.push_back(davidson_mackinnon_test(ols_sys, first_stage.residuals, f.absorbed));

  report.sigma = 1.0 - fit.beta(0);
  report.sigma_se = fit.se(0);
  report.gamma = fit.beta(0);
  report.rho = rho;
  report.alpha1 = fm.alpha1;
  report.alpha2 = fm.alpha2;
  report.n_obs = fit.n;
  for (const auto& warning : fm.warnings) report.warnings.push_back("fm: " + warning);
  if (report.diagnostics[0].verdict == "fail")
    report.warnings.push_back("weak first stage: Cragg-Donald F below 10");
  check_report_identities(report);
  return report;
}

}  // namespace armington
