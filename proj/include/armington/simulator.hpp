#pragma once

// Structural data-generating process for the demand/supply system under the
// mutual-independence assumption on shocks. Serves as the oracle for every
// estimator-consistency and bias test.
//
// Construction, per replication:
//   (a) draw demand shocks, supply shocks and log-FX innovations independently;
//   (b) at t = theta impose ln P = 0: shares come from the normalized demand
//       equation and the exchange rate from the supply equation at theta;
//   (c) away from theta the log exchange rate is a random walk anchored at
//       theta and shares follow the reduced form;
//   (d) latent log values are renormalized within period to proper shares
//       (a pure time effect, absorbed by demeaning), values scale a unit
//       basket, and quantities are backed out so prices stay consistent.

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "armington/errors.hpp"
#include "armington/panel.hpp"
#include "armington/recovery.hpp"
#include "armington/rng.hpp"

namespace armington {

struct QProcess {
  double amplitude = 0.1;   // sinusoid amplitude of ln Q_t
  double drift = 0.005;     // linear drift per period
  double cycle = 12.0;      // periods per cycle
};

struct StriDgp {
  bool enabled = false;
  double eta = 0.0;         // STRI elasticity of import values
  double ar = 0.8;          // AR(1) coefficient of the latent index
  double level = -1.0;      // latent mean; R = logistic(latent) stays in (0,1)
  double scale = 0.6;       // innovation sd of the latent index
};

struct DgpConfig {
  int n_countries = 20;
  int t_periods = 60;
  long theta = -1;  // normalization period; -1 means the last period
  double sigma_true = 3.0;
  double omega_true = 0.5;
  double tau_true = 0.0;
  std::vector<double> lambda;      // preference weights; empty => log-spread default
  double lambda_spread = 2.0;      // width of the default log-spread
  QProcess q;
  std::vector<double> z_scales;    // per-country random-walk innovation sd
  double z_scale_min = 0.03;       // defaults when z_scales is empty
  double z_scale_max = 0.09;
  double sd_eps = 0.05;            // demand shock scale
  double sd_delta = 0.05;          // supply shock scale
  ShockDist shock_dist = ShockDist::gaussian;
  int student_t_df = 5;
  StriDgp stri;
  std::uint64_t seed = 12345;

  double gamma_true() const { return 1.0 - sigma_true; }

  long resolved_theta() const { return theta < 0 ? t_periods - 1 : theta; }

  void validate() const {
    if (n_countries < 2) throw DimensionError("dgp: need at least 2 countries");
    if (t_periods < 2) throw DimensionError("dgp: need at least 2 periods");
    const long th = resolved_theta();
    if (th < 0 || th >= t_periods) throw DimensionError("dgp: theta outside the panel");
    const double denom = 1.0 - gamma_true() * omega_true;
    if (std::fabs(denom) < 1e-10)
      throw SingularityError("dgp: 1 - gamma*omega = " + std::to_string(denom) +
                             " makes the reduced form singular");
    if (!(sd_eps >= 0.0) || !(sd_delta >= 0.0)) throw DimensionError("dgp: shock scales must be >= 0");
    if (!lambda.empty()) {
      if (static_cast<int>(lambda.size()) != n_countries)
        throw DimensionError("dgp: lambda length must equal the country count");
      double sum = 0.0;
      for (double l : lambda) {
        if (!(l >= 0.0)) throw DimensionError("dgp: lambda weights must be nonnegative");
        sum += l;
      }
      if (std::fabs(sum - 1.0) > 1e-8) throw DimensionError("dgp: lambda must sum to 1");
    }
    if (!z_scales.empty() && static_cast<int>(z_scales.size()) != n_countries)
      throw DimensionError("dgp: z_scales length must equal the country count");
    for (double s : z_scales)
      if (!(s >= 0.0)) throw DimensionError("dgp: z scales must be >= 0");
    if (stri.enabled && !(stri.scale >= 0.0)) throw DimensionError("dgp: stri scale must be >= 0");
  }

  std::vector<double> resolved_lambda() const {
    if (!lambda.empty()) return lambda;
    // log-weights spread evenly over [-spread/2, spread/2], then normalized
    std::vector<double> out(n_countries);
    double sum = 0.0;
    for (int i = 0; i < n_countries; ++i) {
      const double g = n_countries == 1 ? 0.0
                                        : lambda_spread * (static_cast<double>(i) / (n_countries - 1) - 0.5);
      out[i] = std::exp(g);
      sum += out[i];
    }
    for (double& l : out) l /= sum;
    return out;
  }

  std::vector<double> resolved_z_scales() const {
    if (!z_scales.empty()) return z_scales;
    std::vector<double> out(n_countries);
    for (int i = 0; i < n_countries; ++i) {
      const double f = n_countries == 1 ? 0.0 : static_cast<double>(i) / (n_countries - 1);
      out[i] = z_scale_min + f * (z_scale_max - z_scale_min);
    }
    return out;
  }
};

// Implied equilibrium-equation coefficients (kappa, phi).
inline std::pair<double, double> reduced_form_oracle(const DgpConfig& config) {
  config.validate();
  const double gamma = config.gamma_true();
  const double denom = 1.0 - gamma * config.omega_true;
  return {gamma / denom, 1.0 / denom};
}

struct TruthRecord {
  double sigma = 0.0, gamma = 0.0, omega = 0.0, tau = 0.0;
  double kappa = 0.0, phi = 0.0;  // implied reduced-form coefficients
  std::optional<double> eta, mu;  // STRI channel when enabled
  long theta = 0;
  std::vector<double> lambda;
  Eigen::ArrayXd ln_q;              // T
  Eigen::ArrayXXd ln_z;             // N x T
  Eigen::ArrayXXd ln_pi;            // N x T export prices
  Eigen::ArrayXXd eps;              // demand shocks
  Eigen::ArrayXXd delta;            // supply shocks
  Eigen::ArrayXXd z_innovations;    // N x T, NaN at theta (anchor)
  Eigen::ArrayXXd ln_latent_share;  // pre-normalization log values
  Eigen::ArrayXXd ln_r;             // N x T log STRI (NaN when disabled)
  std::uint64_t seed = 0;
};

inline std::pair<Panel, TruthRecord> generate_panel(const DgpConfig& config) {
  config.validate();
  const int n = config.n_countries;
  const int t_len = config.t_periods;
  const long theta = config.resolved_theta();
  const double gamma = config.gamma_true();
  const double omega = config.omega_true;
  const double tau = config.tau_true;
  const auto [kappa, phi] = reduced_form_oracle(config);
  const std::vector<double> lambda = config.resolved_lambda();
  const std::vector<double> z_scales = config.resolved_z_scales();

  NormalSampler eps_rng(derive_seed(config.seed, 1));
  NormalSampler delta_rng(derive_seed(config.seed, 2));
  NormalSampler z_rng(derive_seed(config.seed, 3));
  NormalSampler stri_rng(derive_seed(config.seed, 4));

  TruthRecord truth;
  truth.sigma = config.sigma_true;
  truth.gamma = gamma;
  truth.omega = omega;
  truth.tau = tau;
  truth.kappa = kappa;
  truth.phi = phi;
  truth.theta = theta;
  truth.lambda = lambda;
  truth.seed = config.seed;

  constexpr double two_pi = 6.283185307179586476925286766559;
  truth.ln_q.resize(t_len);
  for (int t = 0; t < t_len; ++t)
    truth.ln_q(t) = config.q.amplitude * std::sin(two_pi * t / config.q.cycle) +
                    config.q.drift * t;

  truth.eps.resize(n, t_len);
  truth.delta.resize(n, t_len);
  Eigen::ArrayXXd walk(n, t_len);
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < t_len; ++t) {
      truth.eps(i, t) = config.sd_eps * eps_rng.draw(config.shock_dist, config.student_t_df);
      truth.delta(i, t) = config.sd_delta * delta_rng.draw(config.shock_dist, config.student_t_df);
      walk(i, t) = z_rng.draw(config.shock_dist, config.student_t_df);
    }

  truth.ln_r = Eigen::ArrayXXd::Constant(n, t_len, kAbsent);
  if (config.stri.enabled) {
    truth.eta = config.stri.eta;
    truth.mu = config.stri.eta * phi;
    for (int i = 0; i < n; ++i) {
      double latent = config.stri.level;
      for (int t = 0; t < t_len; ++t) {
        const double innov = config.stri.scale * stri_rng.normal();
        latent = t == 0 ? config.stri.level + innov
                        : config.stri.level + config.stri.ar * (latent - config.stri.level) + innov;
        // logistic keeps R strictly inside (0, 1)
        truth.ln_r(i, t) = -std::log1p(std::exp(-latent));
      }
    }
  }

  truth.ln_z.resize(n, t_len);
  truth.ln_latent_share.resize(n, t_len);
  truth.ln_pi.resize(n, t_len);
  truth.z_innovations = Eigen::ArrayXXd::Constant(n, t_len, kAbsent);

  const auto stri_term = [&](int i, int t) {
    return config.stri.enabled ? config.stri.eta * truth.ln_r(i, t) : 0.0;
  };

  for (int i = 0; i < n; ++i) {
    // normalized demand equation at theta, then the supply equation pins Z
    const double s_theta = std::log(lambda[i]) - gamma * truth.ln_q(theta) +
                           truth.eps(i, theta) + stri_term(i, theta);
    truth.ln_latent_share(i, theta) = s_theta;
    truth.ln_z(i, theta) = -(tau + omega * s_theta + truth.delta(i, theta));
    truth.ln_pi(i, theta) = -truth.ln_z(i, theta);

    for (int t = static_cast<int>(theta) + 1; t < t_len; ++t) {
      truth.z_innovations(i, t) = z_scales[i] * walk(i, t);
      truth.ln_z(i, t) = truth.ln_z(i, t - 1) + truth.z_innovations(i, t);
    }
    for (int t = static_cast<int>(theta) - 1; t >= 0; --t) {
      truth.z_innovations(i, t) = z_scales[i] * walk(i, t);
      truth.ln_z(i, t) = truth.ln_z(i, t + 1) + truth.z_innovations(i, t);
    }

    for (int t = 0; t < t_len; ++t) {
      if (t == theta) continue;
      const double s = phi * std::log(lambda[i]) + kappa * (tau - truth.ln_q(t)) +
                       kappa * truth.ln_z(i, t) + phi * stri_term(i, t) +
                       phi * (truth.eps(i, t) + gamma * truth.delta(i, t));
      truth.ln_latent_share(i, t) = s;
      truth.ln_pi(i, t) = tau + omega * s + truth.delta(i, t);
    }
  }

  // Within-period renormalization to proper shares; the subtracted log-sum is
  // a pure time effect.
  std::vector<PanelObservation> observations;
  observations.reserve(static_cast<std::size_t>(n) * t_len);
  const int width = n >= 100 ? 3 : 2;
  for (int t = 0; t < t_len; ++t) {
    double max_s = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) max_s = std::max(max_s, truth.ln_latent_share(i, t));
    double lse = 0.0;
    for (int i = 0; i < n; ++i) lse += std::exp(truth.ln_latent_share(i, t) - max_s);
    lse = max_s + std::log(lse);
    for (int i = 0; i < n; ++i) {
      PanelObservation obs;
      char name[16];
      std::snprintf(name, sizeof name, "C%0*d", width, i + 1);
      obs.country = name;
      obs.period = t;
      const double share = std::exp(truth.ln_latent_share(i, t) - lse);
      obs.value = share;  // unit basket
      obs.fx_rate = std::exp(truth.ln_z(i, t));
      // quantities are defined so that the price read off the panel,
      // Z V / X, equals the structural import price Z pi
      obs.quantity = obs.value / std::exp(truth.ln_pi(i, t));
      if (config.stri.enabled) obs.stri = std::exp(truth.ln_r(i, t));
      observations.push_back(std::move(obs));
    }
  }

  return {Panel::from_observations(observations), std::move(truth)};
}

}  // namespace armington
