#pragma once

// Identification maps: the trade elasticity recovered from the equilibrium
// slope kappa and the supply slope omega, the STRI elasticity, the exchange
// rate pass-through, and the Feenstra moment algebra with its quadratic root
// inversion.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>

#include "armington/errors.hpp"

namespace armington {

inline constexpr double kRecoverySingularTol = 1e-10;

inline double recovery_denominator(double kappa, double omega) {
  const double denom = 1.0 + kappa * omega;
  if (std::fabs(denom) < kRecoverySingularTol)
    throw SingularityError("recovery: 1 + kappa*omega is within " +
                           std::to_string(kRecoverySingularTol) + " of zero");
  return denom;
}

// sigma = 1 - kappa / (1 + kappa*omega)
inline double recover_sigma(double kappa, double omega) {
  return 1.0 - kappa / recovery_denominator(kappa, omega);
}

// d sigma / d (kappa, omega)
inline Eigen::Vector2d recover_sigma_gradient(double kappa, double omega) {
  const double denom = recovery_denominator(kappa, omega);
  return {-1.0 / (denom * denom), kappa * kappa / (denom * denom)};
}

// eta = mu / (1 + kappa*omega)
inline double recover_eta(double mu, double kappa, double omega) {
  return mu / recovery_denominator(kappa, omega);
}

// d eta / d (mu, kappa, omega)
inline Eigen::Vector3d recover_eta_gradient(double mu, double kappa, double omega) {
  const double denom = recovery_denominator(kappa, omega);
  return {1.0 / denom, -mu * omega / (denom * denom), -mu * kappa / (denom * denom)};
}

// Exchange rate pass-through phi = 1 + kappa*omega (= 1/(1 - gamma*omega)).
inline double exchange_rate_passthrough(double kappa, double omega) {
  return 1.0 + kappa * omega;
}

// --- Feenstra moment algebra ---------------------------------------------
//
// Demand s = gamma z + mu and reverse equation z = rho s + nu with orthogonal
// errors give the exact moment identity
//   z^2 = alpha1 s^2 + alpha2 s z - mu nu / gamma,
// alpha1 = -rho/gamma, alpha2 = (1 + gamma rho)/gamma. Inverting solves
// alpha1 x^2 + alpha2 x - 1 = 0, whose roots are gamma and 1/rho; the rho
// paired with each root is -alpha1 * root.

struct FmRootPair {
  double gamma = 0.0;
  double rho = 0.0;
};

struct FmRoots {
  FmRootPair first;   // + branch of the quadratic formula
  FmRootPair second;  // - branch
  double discriminant = 0.0;
  bool degenerate = false;  // alpha1 ~ 0: single root gamma = 1/alpha2
};

inline std::pair<double, double> fm_forward_moments(double gamma, double rho) {
  if (gamma == 0.0) throw SingularityError("fm moments: gamma must be nonzero");
  return {-rho / gamma, (1.0 + gamma * rho) / gamma};
}

inline FmRoots fm_invert_moments(double alpha1, double alpha2) {
  FmRoots roots;
  const double scale = std::max({1.0, alpha2 * alpha2, std::fabs(4.0 * alpha1)});
  // alpha1 ~ 0 collapses the quadratic to a single root: the continuous limit.
  if (std::fabs(alpha1) < 1e-12 * std::max(1.0, alpha2 * alpha2)) {
    if (std::fabs(alpha2) < 1e-300)
      throw SingularityError("fm roots: both moment coefficients vanish");
    roots.degenerate = true;
    roots.discriminant = alpha2 * alpha2;
    roots.first = roots.second = FmRootPair{1.0 / alpha2, -alpha1 / alpha2};
    return roots;
  }

  double disc = alpha2 * alpha2 + 4.0 * alpha1;
  if (disc < -1e-12 * scale)
    throw ComplexRootsError(alpha1, alpha2,
                            "fm roots: negative discriminant " + std::to_string(disc) +
                                " (moments are inconsistent with real elasticities)");
  if (disc < 0.0) disc = 0.0;
  roots.discriminant = disc;
  const double sq = std::sqrt(disc);
  // Stable quadratic: compute the large-magnitude root first, then the other
  // from the product of roots (-1/alpha1).
  if (alpha2 >= 0.0) {
    const double q = -0.5 * (alpha2 + sq);
    roots.second.gamma = q / alpha1;                         // - branch
    roots.first.gamma = sq > 0.0 ? -1.0 / q : roots.second.gamma;  // + branch
  } else {
    const double q = -0.5 * (alpha2 - sq);
    roots.first.gamma = q / alpha1;                          // + branch
    roots.second.gamma = sq > 0.0 ? -1.0 / q : roots.first.gamma;  // - branch
  }
  roots.first.rho = -alpha1 * roots.first.gamma;
  roots.second.rho = -alpha1 * roots.second.gamma;
  return roots;
}

struct FmSelection {
  FmRootPair chosen;
  FmRootPair other;
  std::string rule;  // "degenerate_limit" | "gamma_negative" | "min_abs_rho"
};

// Prefer the economically signed root (gamma < 0, i.e. sigma > 1) when the
// pair admits exactly one; otherwise take the pair with the smaller |rho|.
inline FmSelection fm_select_root(const FmRoots& roots) {
  FmSelection sel;
  if (roots.degenerate) {
    sel.chosen = roots.first;
    sel.other = roots.second;
    sel.rule = "degenerate_limit";
    return sel;
  }
  const bool neg1 = roots.first.gamma < 0.0;
  const bool neg2 = roots.second.gamma < 0.0;
  if (neg1 != neg2) {
    sel.chosen = neg1 ? roots.first : roots.second;
    sel.other = neg1 ? roots.second : roots.first;
    sel.rule = "gamma_negative";
    return sel;
  }
  const bool first_smaller = std::fabs(roots.first.rho) <= std::fabs(roots.second.rho);
  sel.chosen = first_smaller ? roots.first : roots.second;
  sel.other = first_smaller ? roots.second : roots.first;
  sel.rule = "min_abs_rho";
  return sel;
}

// d gamma / d (alpha1, alpha2) by implicit differentiation of
// alpha1 g^2 + alpha2 g - 1 = 0; also valid in the alpha1 -> 0 limit.
inline Eigen::Vector2d fm_gamma_gradient(double alpha1, double alpha2, double gamma) {
  const double denom = 2.0 * alpha1 * gamma + alpha2;
  if (std::fabs(denom) < 1e-300)
    throw SingularityError("fm roots: repeated root, gamma gradient undefined");
  return {-gamma * gamma / denom, -gamma / denom};
}

}  // namespace armington
