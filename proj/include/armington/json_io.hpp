#pragma once

// JSON serialization of reports, diagnostics, truth records, and Monte Carlo
// summaries. The report schema:
//   {method, sigma, sigma_se, gamma, intermediates:{kappa,omega,tau,rho,
//    alpha1,alpha2,mu,eta,phi}, theta, diagnostics:[{name,stat,p,df,verdict}],
//    instruments:[...], warnings:[...]}

#include <json.hpp>

#include "armington/errors.hpp"
#include "armington/montecarlo.hpp"
#include "armington/report.hpp"
#include "armington/simulator.hpp"

namespace armington {

using json = nlohmann::json;

inline json to_json(const TestResult& test) {
  json j;
  j["name"] = test.name;
  j["stat"] = test.applicable ? json(test.statistic) : json(nullptr);
  j["p"] = test.p_value ? json(*test.p_value) : json(nullptr);
  j["df"] = test.df;
  j["verdict"] = test.verdict;
  if (!test.note.empty()) j["note"] = test.note;
  return j;
}

inline json to_json(const MethodReport& report) {
  json j;
  j["method"] = method_name(report.method);
  j["sigma"] = report.sigma;
  j["sigma_se"] = report.sigma_se;
  j["gamma"] = report.gamma;

  json inter = json::object();
  const auto put = [&inter](const char* key, const std::optional<double>& v) {
    if (v) inter[key] = *v;
  };
  put("kappa", report.kappa);
  put("omega", report.omega);
  put("tau", report.tau);
  put("rho", report.rho);
  put("alpha1", report.alpha1);
  put("alpha2", report.alpha2);
  put("mu", report.mu);
  put("eta", report.eta);
  put("phi", report.phi);
  j["intermediates"] = inter;

  json ses = json::object();
  const auto put_se = [&ses](const char* key, const std::optional<double>& v) {
    if (v) ses[key] = *v;
  };
  put_se("kappa", report.kappa_se);
  put_se("omega", report.omega_se);
  put_se("tau", report.tau_se);
  put_se("mu", report.mu_se);
  put_se("eta", report.eta_se);
  put_se("phi", report.phi_se);
  j["intermediate_se"] = ses;

  j["theta"] = report.theta ? json(*report.theta) : json(nullptr);
  j["n_obs"] = report.n_obs;
  j["diagnostics"] = json::array();
  for (const auto& d : report.diagnostics) j["diagnostics"].push_back(to_json(d));
  j["instruments"] = report.instruments;
  j["warnings"] = report.warnings;
  if (report.fm_root_alt) {
    j["fm"] = {{"rule", report.fm_root_rule},
               {"roots",
                json::array({{{"gamma", report.gamma}, {"rho", report.rho ? *report.rho : 0.0}},
                             {{"gamma", report.fm_root_alt->gamma},
                              {"rho", report.fm_root_alt->rho}}})}};
  }
  return j;
}

inline json to_json(const TruthRecord& truth) {
  json j;
  j["sigma"] = truth.sigma;
  j["gamma"] = truth.gamma;
  j["omega"] = truth.omega;
  j["tau"] = truth.tau;
  j["kappa"] = truth.kappa;
  j["phi"] = truth.phi;
  if (truth.eta) j["eta"] = *truth.eta;
  if (truth.mu) j["mu"] = *truth.mu;
  j["theta"] = truth.theta;
  j["lambda"] = truth.lambda;
  j["seed"] = truth.seed;
  std::vector<double> lnq(truth.ln_q.data(), truth.ln_q.data() + truth.ln_q.size());
  j["ln_q"] = lnq;
  return j;
}

inline json to_json(const MethodSummary& s) {
  json j;
  j["method"] = s.method;
  j["succeeded"] = s.succeeded;
  j["failed"] = s.failed;
  j["mean"] = s.mean;
  j["bias"] = s.bias;
  j["rmse"] = s.rmse;
  j["mc_se"] = s.mc_se;
  j["coverage"] = s.coverage;
  return j;
}

inline json to_json(const MonteCarloSummary& summary) {
  json j;
  j["replications"] = summary.replications;
  j["sigma_true"] = summary.config.sigma_true;
  j["omega_true"] = summary.config.omega_true;
  j["implied_kappa"] = summary.implied_kappa;
  j["implied_phi"] = summary.implied_phi;
  j["seed"] = summary.config.seed;
  j["methods"] = json::array();
  for (const auto& m : summary.methods) j["methods"].push_back(to_json(m));
  j["naive"] = to_json(summary.naive);
  return j;
}

inline json error_json(const Error& error) {
  return json{{"error",
               {{"code", error.exit_code()}, {"kind", error.kind()}, {"message", error.what()}}}};
}

}  // namespace armington
