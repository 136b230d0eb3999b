#pragma once

// Per-method output: the elasticity estimate, its standard error, the
// intermediate parameters the method went through, and diagnostics.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "armington/diagnostics.hpp"
#include "armington/errors.hpp"
#include "armington/recovery.hpp"

namespace armington {

enum class Method { ivfe, fm, iiv, sur, sur_stri };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::ivfe: return "ivfe";
    case Method::fm: return "fm";
    case Method::iiv: return "iiv";
    case Method::sur: return "sur";
    case Method::sur_stri: return "sur_stri";
  }
  return "?";
}

struct MethodReport {
  Method method = Method::sur;
  double sigma = std::numeric_limits<double>::quiet_NaN();
  double sigma_se = std::numeric_limits<double>::quiet_NaN();
  double gamma = std::numeric_limits<double>::quiet_NaN();  // 1 - sigma

  std::optional<double> kappa, kappa_se;
  std::optional<double> omega, omega_se;
  std::optional<double> tau, tau_se;
  std::optional<double> rho;
  std::optional<double> alpha1, alpha2;
  std::optional<double> mu, mu_se;
  std::optional<double> eta, eta_se;
  std::optional<double> phi, phi_se;

  std::optional<long> theta;
  long n_obs = 0;
  std::vector<TestResult> diagnostics;
  std::vector<std::string> instruments;
  std::vector<std::string> warnings;

  // Feenstra root transparency: the pair not chosen and the rule applied.
  std::optional<FmRootPair> fm_root_alt;
  std::string fm_root_rule;
};

// Guards the stored-report identities: sigma must equal the recovery map of
// (kappa, omega) and phi must equal 1 + kappa*omega whenever those are present.
inline void check_report_identities(const MethodReport& report) {
  if (report.kappa && report.omega) {
    const double sigma = recover_sigma(*report.kappa, *report.omega);
    if (std::fabs(sigma - report.sigma) > 1e-10)
      throw NumericalError("method report: sigma does not match the recovery of (kappa, omega)");
    if (report.phi) {
      const double phi = exchange_rate_passthrough(*report.kappa, *report.omega);
      if (std::fabs(phi - *report.phi) > 1e-12)
        throw NumericalError("method report: phi does not match 1 + kappa*omega");
    }
  }
  if (std::fabs((1.0 - report.sigma) - report.gamma) > 1e-12)
    throw NumericalError("method report: gamma does not match 1 - sigma");
}

// The benchmark correction line mapping SUR elasticities onto the IVFE
// benchmark scale. Applied only on explicit request, never silently.
struct CorrectionLine {
  double intercept = -0.879;
  double intercept_se = 0.176;
  double slope = 2.000;
  double slope_se = 0.093;
  double adjusted_r2 = 0.987;
};

struct CorrectedSigma {
  double value = 0.0;
  // From the line-coefficient standard errors alone (their covariance is not
  // published): sqrt(se_a^2 + sigma^2 se_b^2).
  double se = 0.0;
};

inline CorrectedSigma apply_benchmark_correction(double sigma_sur,
                                                 const CorrectionLine& line = {}) {
  CorrectedSigma out;
  out.value = line.intercept + line.slope * sigma_sur;
  out.se = std::sqrt(line.intercept_se * line.intercept_se +
                     sigma_sur * sigma_sur * line.slope_se * line.slope_se);
  return out;
}

}  // namespace armington
