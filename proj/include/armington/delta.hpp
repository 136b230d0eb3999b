#pragma once

// Delta-method standard errors for differentiable transforms of estimated
// parameters. Analytic gradients are cross-checked against central finite
// differences; purely numeric gradients are used when no analytic one is given.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>

#include "armington/errors.hpp"

namespace armington {

using TransformFn = std::function<double(const Eigen::VectorXd&)>;
using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct DeltaResult {
  double value = 0.0;
  double se = 0.0;
  Eigen::VectorXd gradient;
};

namespace detail {

inline Eigen::VectorXd fd_gradient(const TransformFn& f, const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x, xm = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    xp(j) = x(j) + step;
    xm(j) = x(j) - step;
    g(j) = (f(xp) - f(xm)) / (2.0 * step);
    xp(j) = x(j);
    xm(j) = x(j);
  }
  return g;
}

inline void check_psd(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols()) throw DimensionError("delta method: covariance is not square");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw NumericalError("delta method: covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.eigenvalues().minCoeff() < -1e-10 * scale)
    throw NumericalError("delta method: covariance is not positive semidefinite");
}

}  // namespace detail

// value = f(estimates); var = g' cov g with g the gradient at the estimates.
inline DeltaResult delta_method_se(const Eigen::VectorXd& estimates, const Eigen::MatrixXd& cov,
                                   const TransformFn& transform,
                                   const GradientFn& gradient = nullptr, double fd_step = 1e-6) {
  if (cov.rows() != estimates.size())
    throw DimensionError("delta method: covariance does not match estimate length");
  detail::check_psd(cov);

  DeltaResult res;
  res.value = transform(estimates);
  if (!std::isfinite(res.value))
    throw SingularityError("delta method: transform is not finite at the estimates");

  const Eigen::VectorXd fd = detail::fd_gradient(transform, estimates, fd_step);
  if (gradient) {
    res.gradient = gradient(estimates);
    if (!res.gradient.allFinite())
      throw SingularityError("delta method: gradient is not finite at the estimates");
    for (Eigen::Index j = 0; j < res.gradient.size(); ++j) {
      const double denom = std::max(1.0, std::fabs(res.gradient(j)));
      if (std::fabs(res.gradient(j) - fd(j)) > 1e-6 * denom)
        throw NumericalError("delta method: analytic gradient disagrees with finite differences at component " +
                             std::to_string(j));
    }
  } else {
    res.gradient = fd;
    if (!res.gradient.allFinite())
      throw SingularityError("delta method: numeric gradient is not finite");
  }

  const double var = res.gradient.dot(cov * res.gradient);
  res.se = std::sqrt(std::max(0.0, var));
  return res;
}

}  // namespace armington
