#pragma once

// Monte Carlo validation driver: replicated generation + estimation with
// deterministic per-replication seeds, bias/RMSE/coverage aggregation for the
// elasticity, and the naive demeaned slope tracked against the implied
// equilibrium coefficient.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "armington/pipelines.hpp"
#include "armington/simulator.hpp"

namespace armington {

struct MethodSummary {
  std::string method;
  long succeeded = 0;
  long failed = 0;
  double mean = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  double mc_se = 0.0;          // standard error of the mean across replications
  double coverage = 0.0;       // fraction of |sigma_hat - truth| <= 1.96 se_hat
  std::vector<double> draws;   // sigma_hat per successful replication
};

struct MonteCarloSummary {
  DgpConfig config;
  long replications = 0;
  std::vector<MethodSummary> methods;      // requested pipeline methods
  MethodSummary naive;                     // demeaned slope vs implied kappa
  double implied_kappa = 0.0;
  double implied_phi = 0.0;
  std::vector<std::uint64_t> replication_seeds;
};

namespace detail {

inline void summarize(MethodSummary& s, double truth) {
  const long n = static_cast<long>(s.draws.size());
  s.succeeded = n;
  if (n == 0) return;
  double sum = 0.0;
  for (const double d : s.draws) sum += d;
  s.mean = sum / n;
  s.bias = s.mean - truth;
  double sq = 0.0, var = 0.0;
  for (const double d : s.draws) {
    sq += (d - truth) * (d - truth);
    var += (d - s.mean) * (d - s.mean);
  }
  s.rmse = std::sqrt(sq / n);
  s.mc_se = n > 1 ? std::sqrt(var / (n - 1) / n) : 0.0;
}

}  // namespace detail

inline MonteCarloSummary run_monte_carlo(const DgpConfig& config,
                                         const std::vector<Method>& methods, long reps,
                                         const EstimateOptions& options = {}) {
  if (reps < 1) throw DimensionError("monte carlo: reps must be >= 1");
  config.validate();

  MonteCarloSummary summary;
  summary.config = config;
  summary.replications = reps;
  const auto [kappa, phi] = reduced_form_oracle(config);
  summary.implied_kappa = kappa;
  summary.implied_phi = phi;
  summary.naive.method = "naive";

  std::vector<MethodSummary> per_method(methods.size());
  std::vector<long> covered(methods.size(), 0);
  for (std::size_t j = 0; j < methods.size(); ++j) per_method[j].method = method_name(methods[j]);

  long naive_covered = 0;
  for (long r = 0; r < reps; ++r) {
    DgpConfig rep_config = config;
    rep_config.seed = derive_seed(config.seed, 1000 + static_cast<std::uint64_t>(r));
    summary.replication_seeds.push_back(rep_config.seed);
    const auto [panel, truth] = generate_panel(rep_config);

    {
      const RegressionResult slope = naive_demeaned_slope(panel);
      summary.naive.draws.push_back(slope.beta(0));
      if (std::fabs(slope.beta(0) - kappa) <= 1.96 * slope.se(0)) ++naive_covered;
    }

    for (std::size_t j = 0; j < methods.size(); ++j) {
      try {
        MethodReport report;
        switch (methods[j]) {
          case Method::ivfe: report = estimate_ivfe(panel, options); break;
          case Method::fm: report = estimate_fm(panel, options); break;
          case Method::iiv: report = estimate_iiv(panel, options); break;
          case Method::sur:
            report = estimate_sur(panel, panel.periods()[truth.theta], options);
            break;
          case Method::sur_stri:
            report = estimate_sur_stri(panel, panel.periods()[truth.theta], options);
            break;
        }
        per_method[j].draws.push_back(report.sigma);
        if (std::fabs(report.sigma - config.sigma_true) <= 1.96 * report.sigma_se)
          ++covered[j];
      } catch (const Error&) {
        ++per_method[j].failed;
      }
    }
  }

  detail::summarize(summary.naive, kappa);
  summary.naive.coverage =
      summary.naive.draws.empty() ? 0.0 : static_cast<double>(naive_covered) / summary.naive.draws.size();
  for (std::size_t j = 0; j < methods.size(); ++j) {
    detail::summarize(per_method[j], config.sigma_true);
    per_method[j].coverage = per_method[j].draws.empty()
                                 ? 0.0
                                 : static_cast<double>(covered[j]) / per_method[j].draws.size();
  }
  summary.methods = std::move(per_method);
  return summary;
}

}  // namespace armington
