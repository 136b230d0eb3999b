#pragma once

// Data model for unbalanced trade panels: import values, optional physical
// quantities, exchange rates and optional restrictiveness indices over a
// country-by-period grid.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "armington/demean.hpp"
#include "armington/errors.hpp"

namespace armington {

struct PanelObservation {
  std::string country;
  long period = 0;                  // ordinal time index
  double value = 0.0;               // import value, importer currency, > 0
  std::optional<double> quantity;   // physical quantity, > 0 where present
  double fx_rate = 0.0;             // importer-currency price of exporter currency, > 0
  std::optional<double> stri;       // restrictiveness index in (0, 1]
};

class Panel {
 public:
  // Builds the grid from observations. Keys must be unique; values and fx
  // rates strictly positive; at least 2 countries and 2 periods.
  static Panel from_observations(const std::vector<PanelObservation>& observations) {
    if (observations.empty()) throw DimensionError("panel: no observations");

    std::vector<std::string> countries;
    std::vector<long> periods;
    for (const auto& obs : observations) {
      countries.push_back(obs.country);
      periods.push_back(obs.period);
    }
    std::sort(countries.begin(), countries.end());
    countries.erase(std::unique(countries.begin(), countries.end()), countries.end());
    std::sort(periods.begin(), periods.end());
    periods.erase(std::unique(periods.begin(), periods.end()), periods.end());

    Panel panel;
    panel.countries_ = std::move(countries);
    panel.periods_ = std::move(periods);
    const Eigen::Index n = static_cast<Eigen::Index>(panel.countries_.size());
    const Eigen::Index t_len = static_cast<Eigen::Index>(panel.periods_.size());
    panel.mask_ = Mask::Constant(n, t_len, false);
    panel.value_ = Eigen::ArrayXXd::Constant(n, t_len, kAbsent);
    panel.fx_ = Eigen::ArrayXXd::Constant(n, t_len, kAbsent);
    panel.quantity_ = Eigen::ArrayXXd::Constant(n, t_len, kAbsent);
    panel.stri_ = Eigen::ArrayXXd::Constant(n, t_len, kAbsent);

    for (const auto& obs : observations) {
      if (!(obs.value > 0.0))
        throw DimensionError("panel: non-positive value for " + obs.country + " at period " +
                             std::to_string(obs.period));
      if (!(obs.fx_rate > 0.0))
        throw DimensionError("panel: non-positive fx_rate for " + obs.country + " at period " +
                             std::to_string(obs.period));
      const Eigen::Index i = panel.country_index(obs.country);
      const Eigen::Index t = panel.period_index(obs.period);
      if (panel.mask_(i, t))
        throw ConflictError("duplicate observation for (" + obs.country + ", " +
                            std::to_string(obs.period) + ")");
      panel.mask_(i, t) = true;
      panel.value_(i, t) = obs.value;
      panel.fx_(i, t) = obs.fx_rate;
      if (obs.quantity) {
        if (!(*obs.quantity > 0.0))
          throw DimensionError("panel: non-positive quantity for " + obs.country + " at period " +
                               std::to_string(obs.period));
        panel.quantity_(i, t) = *obs.quantity;
      }
      if (obs.stri) {
        // zero means an open market; the log transform needs R > 0, so zeros
        // and negatives are kept absent and counted.
        if (*obs.stri > 0.0 && *obs.stri <= 1.0) {
          panel.stri_(i, t) = *obs.stri;
        } else {
          ++panel.dropped_stri_;
        }
      }
    }

    if (n < 2) throw DimensionError("panel: need at least 2 countries, have " + std::to_string(n));
    if (t_len < 2)
      throw DimensionError("panel: need at least 2 periods, have " + std::to_string(t_len));
    return panel;
  }

  Eigen::Index n_countries() const { return static_cast<Eigen::Index>(countries_.size()); }
  Eigen::Index n_periods() const { return static_cast<Eigen::Index>(periods_.size()); }
  const std::vector<std::string>& countries() const { return countries_; }
  const std::vector<long>& periods() const { return periods_; }
  const Mask& mask() const { return mask_; }
  const Eigen::ArrayXXd& values() const { return value_; }
  const Eigen::ArrayXXd& fx_rates() const { return fx_; }
  const Eigen::ArrayXXd& quantities() const { return quantity_; }
  const Eigen::ArrayXXd& stri() const { return stri_; }
  long dropped_stri() const { return dropped_stri_; }

  Eigen::Index country_index(const std::string& c) const {
    const auto it = std::lower_bound(countries_.begin(), countries_.end(), c);
    if (it == countries_.end() || *it != c) throw DimensionError("panel: unknown country " + c);
    return static_cast<Eigen::Index>(it - countries_.begin());
  }

  Eigen::Index period_index(long p) const {
    const auto it = std::lower_bound(periods_.begin(), periods_.end(), p);
    if (it == periods_.end() || *it != p)
      throw DimensionError("panel: unknown period " + std::to_string(p));
    return static_cast<Eigen::Index>(it - periods_.begin());
  }

  bool has_period(long p) const {
    return std::binary_search(periods_.begin(), periods_.end(), p);
  }

  // True when every present cell carries a quantity.
  bool has_full_quantity() const {
    for (Eigen::Index i = 0; i < mask_.rows(); ++i)
      for (Eigen::Index t = 0; t < mask_.cols(); ++t)
        if (mask_(i, t) && std::isnan(quantity_(i, t))) return false;
    return true;
  }

  bool has_stri() const {
    for (Eigen::Index i = 0; i < mask_.rows(); ++i)
      for (Eigen::Index t = 0; t < mask_.cols(); ++t)
        if (mask_(i, t) && !std::isnan(stri_(i, t))) return true;
    return false;
  }

  Mask stri_mask() const {
    Mask m = Mask::Constant(mask_.rows(), mask_.cols(), false);
    for (Eigen::Index i = 0; i < mask_.rows(); ++i)
      for (Eigen::Index t = 0; t < mask_.cols(); ++t)
        m(i, t) = mask_(i, t) && !std::isnan(stri_(i, t));
    return m;
  }

  MaskedSeries log_fx() const { return log_series(fx_, mask_, "ln_fx"); }
  MaskedSeries fx_levels() const { return MaskedSeries{fx_, mask_, "fx"}; }
  MaskedSeries log_stri() const { return log_series(stri_, stri_mask(), "ln_stri"); }

  MaskedSeries log_quantity() const {
    if (!has_full_quantity()) throw NotApplicableError("panel has no full quantity coverage");
    return log_series(quantity_, mask_, "ln_quantity");
  }

 private:
  static MaskedSeries log_series(const Eigen::ArrayXXd& src, const Mask& mask,
                                 const std::string& label) {
    Eigen::ArrayXXd out = Eigen::ArrayXXd::Constant(src.rows(), src.cols(), kAbsent);
    for (Eigen::Index i = 0; i < src.rows(); ++i)
      for (Eigen::Index t = 0; t < src.cols(); ++t)
        if (mask(i, t)) out(i, t) = std::log(src(i, t));
    return MaskedSeries{std::move(out), mask, label};
  }

  std::vector<std::string> countries_;
  std::vector<long> periods_;
  Mask mask_;
  Eigen::ArrayXXd value_, fx_, quantity_, stri_;
  long dropped_stri_ = 0;
};

struct ShareSeries {
  Eigen::ArrayXXd values;  // S_it in (0, 1], NaN where absent
  Mask mask;

  MaskedSeries log() const {
    Eigen::ArrayXXd out = Eigen::ArrayXXd::Constant(values.rows(), values.cols(), kAbsent);
    for (Eigen::Index i = 0; i < values.rows(); ++i)
      for (Eigen::Index t = 0; t < values.cols(); ++t)
        if (mask(i, t)) out(i, t) = std::log(values(i, t));
    return MaskedSeries{std::move(out), mask, "ln_share"};
  }
};

// S_it = V_it / sum_j V_jt over countries present at t.
inline ShareSeries compute_value_shares(const Panel& panel) {
  const Eigen::Index n = panel.n_countries();
  const Eigen::Index t_len = panel.n_periods();
  Eigen::ArrayXXd shares = Eigen::ArrayXXd::Constant(n, t_len, kAbsent);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    double total = 0.0;
    bool any = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (panel.mask()(i, t)) {
        total += panel.values()(i, t);
        any = true;
      }
    }
    if (!any || !(total > 0.0))
      throw EstimationError("degenerate_period", "period " + std::to_string(panel.periods()[t]) +
                                                     " has zero total import value");
    for (Eigen::Index i = 0; i < n; ++i)
      if (panel.mask()(i, t)) shares(i, t) = panel.values()(i, t) / total;
  }
  return ShareSeries{std::move(shares), panel.mask()};
}

// Drops countries with fewer than min_obs present cells, then drops periods
// left without any observation. Shares are always recomputed downstream from
// the filtered panel.
inline Panel filter_coverage(const Panel& panel, long min_obs) {
  if (min_obs > panel.n_periods())
    throw DimensionError("filter_coverage: min_obs " + std::to_string(min_obs) +
                         " exceeds panel length " + std::to_string(panel.n_periods()));
  if (min_obs <= 0) return panel;

  std::vector<PanelObservation> kept;
  for (Eigen::Index i = 0; i < panel.n_countries(); ++i) {
    const long count = panel.mask().row(i).count();
    if (count < min_obs) continue;
    for (Eigen::Index t = 0; t < panel.n_periods(); ++t) {
      if (!panel.mask()(i, t)) continue;
      PanelObservation obs;
      obs.country = panel.countries()[i];
      obs.period = panel.periods()[t];
      obs.value = panel.values()(i, t);
      obs.fx_rate = panel.fx_rates()(i, t);
      if (!std::isnan(panel.quantities()(i, t))) obs.quantity = panel.quantities()(i, t);
      if (!std::isnan(panel.stri()(i, t))) obs.stri = panel.stri()(i, t);
      kept.push_back(std::move(obs));
    }
  }
  if (kept.empty()) throw DimensionError("filter_coverage: no country meets the threshold");

  long n_left = 0;
  {
    std::vector<std::string> cs;
    for (const auto& o : kept) cs.push_back(o.country);
    std::sort(cs.begin(), cs.end());
    cs.erase(std::unique(cs.begin(), cs.end()), cs.end());
    n_left = static_cast<long>(cs.size());
  }
  if (n_left < 2)
    throw DimensionError("filter_coverage: only " + std::to_string(n_left) +
                         " country passes the coverage threshold");
  return Panel::from_observations(kept);
}

}  // namespace armington
