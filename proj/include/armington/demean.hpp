#pragma once

// Masked country-by-period matrices and the double-demeaning transform used
// by every estimator. A cell (i, t) is present when mask(i, t); values at
// absent cells are NaN and ignored by every operation.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "armington/errors.hpp"

namespace armington {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr double kAbsent = std::numeric_limits<double>::quiet_NaN();

struct MaskedSeries {
  Eigen::ArrayXXd values;  // N x T, NaN where absent
  Mask mask;               // N x T
  std::string label;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  Eigen::Index count() const { return mask.count(); }
};

// Demeaned output; constructed only by double_demean, which has verified the
// vanishing-means invariant.
struct DemeanedSeries {
  Eigen::ArrayXXd values;
  Mask mask;
  std::string label;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

struct CellIndex {
  Eigen::Index i;
  Eigen::Index t;
};

// Present cells in country-major order; the fixed flattening order shared by
// all regression builders.
inline std::vector<CellIndex> present_cells(const Mask& mask) {
  std::vector<CellIndex> cells;
  cells.reserve(static_cast<std::size_t>(mask.count()));
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    for (Eigen::Index t = 0; t < mask.cols(); ++t)
      if (mask(i, t)) cells.push_back({i, t});
  return cells;
}

inline Eigen::VectorXd flatten(const Eigen::ArrayXXd& values, const std::vector<CellIndex>& cells) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(cells.size()));
  for (std::size_t r = 0; r < cells.size(); ++r) out(static_cast<Eigen::Index>(r)) = values(cells[r].i, cells[r].t);
  return out;
}

inline Mask intersect(const Mask& a, const Mask& b) { return a && b; }

namespace detail {

inline void check_coverage(const Mask& mask) {
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    if (!mask.row(i).any())
      throw DimensionError("double_demean: country row " + std::to_string(i) + " has no present cell");
  for (Eigen::Index t = 0; t < mask.cols(); ++t)
    if (!mask.col(t).any())
      throw DimensionError("double_demean: period column " + std::to_string(t) + " has no present cell");
}

inline double max_abs_line_mean(const Eigen::ArrayXXd& x, const Mask& mask) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    long n = 0;
    for (Eigen::Index t = 0; t < x.cols(); ++t)
      if (mask(i, t)) { s += x(i, t); ++n; }
    if (n > 0) worst = std::max(worst, std::fabs(s / n));
  }
  for (Eigen::Index t = 0; t < x.cols(); ++t) {
    double s = 0.0;
    long n = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (mask(i, t)) { s += x(i, t); ++n; }
    if (n > 0) worst = std::max(worst, std::fabs(s / n));
  }
  return worst;
}

}  // namespace detail

struct DemeanOptions {
  double tol = 1e-12;     // on row/column means, scaled by max|x|
  int max_sweeps = 10000;
};

// Removes country- and period-specific means over present cells.
//
// Balanced mask: the closed four-term form
//   [x]_it = x_it - mean_t x_i. - mean_i x_.t + grand mean.
// Unbalanced mask: alternating within-row/within-column mean removal until
// every row and column mean over present cells is below tolerance.
inline DemeanedSeries double_demean(const MaskedSeries& series, const DemeanOptions& opts = {}) {
  const Eigen::Index n = series.rows();
  const Eigen::Index t_len = series.cols();
  if (n < 1 || t_len < 1) throw DimensionError("double_demean: empty series");
  detail::check_coverage(series.mask);

  Eigen::ArrayXXd x = series.values;
  const bool balanced = series.mask.all();

  if (balanced) {
    const Eigen::ArrayXd row_means = x.rowwise().mean();
    const Eigen::ArrayXd col_means = x.colwise().mean();
    const double grand = x.mean();
    x = x - row_means.replicate(1, t_len) - col_means.transpose().replicate(n, 1) + grand;
  } else {
    double scale = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index t = 0; t < t_len; ++t)
        if (series.mask(i, t)) scale = std::max(scale, std::fabs(x(i, t)));
    const double tol = opts.tol * std::max(1.0, scale);

    int sweep = 0;
    for (; sweep < opts.max_sweeps; ++sweep) {
      for (Eigen::Index i = 0; i < n; ++i) {
        double s = 0.0;
        long cnt = 0;
        for (Eigen::Index t = 0; t < t_len; ++t)
          if (series.mask(i, t)) { s += x(i, t); ++cnt; }
        const double m = s / cnt;
        for (Eigen::Index t = 0; t < t_len; ++t)
          if (series.mask(i, t)) x(i, t) -= m;
      }
      for (Eigen::Index t = 0; t < t_len; ++t) {
        double s = 0.0;
        long cnt = 0;
        for (Eigen::Index i = 0; i < n; ++i)
          if (series.mask(i, t)) { s += x(i, t); ++cnt; }
        const double m = s / cnt;
        for (Eigen::Index i = 0; i < n; ++i)
          if (series.mask(i, t)) x(i, t) -= m;
      }
      if (detail::max_abs_line_mean(x, series.mask) < tol) break;
    }
    if (sweep == opts.max_sweeps) {
      throw NumericalError("double_demean failed to converge; residual line mean " +
                           std::to_string(detail::max_abs_line_mean(x, series.mask)));
    }
  }

  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index t = 0; t < t_len; ++t)
      if (!series.mask(i, t)) x(i, t) = kAbsent;

  return DemeanedSeries{std::move(x), series.mask, series.label};
}

inline DemeanedSeries double_demean(const DemeanedSeries& series, const DemeanOptions& opts = {}) {
  return double_demean(MaskedSeries{series.values, series.mask, series.label}, opts);
}

// Masked temporal shifts for derivative instruments. The output cell (i, t)
// holds x_{i, t+offset} and is present only where both the base cell and the
// shifted cell are present; panel edges become absent, never zero-filled.
inline MaskedSeries shift_periods(const MaskedSeries& series, int offset, const std::string& label) {
  const Eigen::Index n = series.rows();
  const Eigen::Index t_len = series.cols();
  Eigen::ArrayXXd values = Eigen::ArrayXXd::Constant(n, t_len, kAbsent);
  Mask mask = Mask::Constant(n, t_len, false);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index t = 0; t < t_len; ++t) {
      const Eigen::Index s = t + offset;
      if (s < 0 || s >= t_len) continue;
      if (series.mask(i, t) && series.mask(i, s)) {
        values(i, t) = series.values(i, s);
        mask(i, t) = true;
      }
    }
  }
  return MaskedSeries{std::move(values), std::move(mask), label};
}

// First difference x_{i,t} - x_{i,t-1}, masked at edges and gaps.
inline MaskedSeries first_difference(const MaskedSeries& series, const std::string& label) {
  const Eigen::Index n = series.rows();
  const Eigen::Index t_len = series.cols();
  Eigen::ArrayXXd values = Eigen::ArrayXXd::Constant(n, t_len, kAbsent);
  Mask mask = Mask::Constant(n, t_len, false);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index t = 1; t < t_len; ++t) {
      if (series.mask(i, t) && series.mask(i, t - 1)) {
        values(i, t) = series.values(i, t) - series.values(i, t - 1);
        mask(i, t) = true;
      }
    }
  }
  return MaskedSeries{std::move(values), std::move(mask), label};
}

}  // namespace armington
