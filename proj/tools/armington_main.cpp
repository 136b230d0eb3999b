// Command-line front end: estimate, simulate, diagnose.
//
// Exit codes: 0 ok, 2 parse, 3 dimension/compatibility, 4 numerical
// singularity, 5 estimation failure. Reports go to stdout (or --out),
// warnings and logs to stderr.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "armington/armington.hpp"

namespace {

using namespace armington;

struct RunConfig {
  std::string input;
  std::string out;
  std::string truth_out;
  std::string method = "all";
  std::string theta = "min-rss";
  long min_obs = 0;
  std::string format = "json";
  bool drop_invalid = false;
  bool sur_gls_points = false;
  bool sur_iterate = true;
  bool fm_differences = false;
  bool no_level_instrument = false;
  std::string iiv_derivatives = "auto";
  bool robust_cov = false;
  bool apply_correction = false;
  std::uint64_t seed = 12345;  // fixed documented default, never wall-clock

  // simulate
  int n = 20;
  int t = 60;
  double sigma = 3.0;
  double omega = 0.5;
  double tau = 0.0;
  long sim_theta = -1;
  double sd_eps = 0.05;
  double sd_delta = 0.05;
  double z_scale_min = 0.03;
  double z_scale_max = 0.09;
  double lambda_spread = 2.0;
  double q_amplitude = 0.1;
  double q_drift = 0.005;
  int heavy_tails = 0;  // 0 => gaussian, else Student-t df
  double stri_eta = 0.0;
  bool with_stri = false;
  long reps = 0;
  std::string mc_methods = "sur";

  // diagnose
  std::string context = "auto";
};

std::string fmt(double x, int digits = 6) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

std::string est_se(double est, double se) { return fmt(est, 4) + " (" + fmt(se, 3) + ")"; }

std::string est_se(const std::optional<double>& est, const std::optional<double>& se) {
  if (!est) return "";
  if (!se) return fmt(*est, 4);
  return est_se(*est, *se);
}

std::ostream& open_output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw ParseError("cannot open output file " + path);
  return file;
}

EstimateOptions make_options(const RunConfig& cfg) {
  EstimateOptions options;
  options.sur_gls_points = cfg.sur_gls_points;
  options.sur_iterate = cfg.sur_iterate;
  options.fm_differences = cfg.fm_differences;
  options.try_level_instrument = !cfg.no_level_instrument;
  options.iiv_derivatives =
      cfg.iiv_derivatives == "none" ? IivDerivatives::none : IivDerivatives::automatic;
  options.cov = cfg.robust_cov ? CovKind::robust : CovKind::classical;
  return options;
}

ThetaChoice parse_theta(const std::string& text) {
  ThetaChoice choice;
  if (text == "last") {
    choice.policy = ThetaPolicy::last;
  } else if (text == "min-rss") {
    choice.policy = ThetaPolicy::min_rss;
  } else {
    choice.policy = ThetaPolicy::explicit_value;
    try {
      choice.value = std::stol(text);
    } catch (const std::exception&) {
      throw ParseError("--theta must be 'last', 'min-rss', or an integer period, got '" + text + "'");
    }
  }
  return choice;
}

Panel load_input(const RunConfig& cfg, std::vector<std::string>* warnings) {
  if (cfg.input.empty()) throw ParseError("--input is required");
  std::ifstream file;
  std::istream* in = &std::cin;
  if (cfg.input != "-") {
    file.open(cfg.input);
    if (!file) throw ParseError("cannot open input file " + cfg.input);
    in = &file;
  }
  LoadOptions load_options;
  load_options.strict = !cfg.drop_invalid;
  LoadResult loaded = load_panel(*in, load_options);
  if (warnings) *warnings = loaded.warnings;
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
  Panel panel = std::move(loaded.panel);
  if (cfg.min_obs > 0) panel = filter_coverage(panel, cfg.min_obs);
  return panel;
}

void print_reports_tsv(std::ostream& out, const std::vector<MethodReport>& reports) {
  out << "method\tsigma\tkappa\tomega\tconst\trho\tmu\teta\tphi\ttheta\tn\t1F\toverid.\tendog.\tinstruments\n";
  for (const auto& r : reports) {
    const auto diag = [&](const std::string& name) -> std::string {
      for (const auto& d : r.diagnostics) {
        if (d.name != name) continue;
        if (!d.applicable) return "";
        if (d.p_value) return fmt(d.statistic, 4) + " (" + fmt(*d.p_value, 3) + ")";
        return fmt(d.statistic, 4);
      }
      return "";
    };
    std::string instruments;
    for (std::size_t i = 0; i < r.instruments.size(); ++i)
      instruments += (i ? "," : "") + r.instruments[i];
    out << method_name(r.method) << '\t' << est_se(r.sigma, r.sigma_se) << '\t'
        << est_se(r.kappa, r.kappa_se) << '\t' << est_se(r.omega, r.omega_se) << '\t'
        << est_se(r.tau, r.tau_se) << '\t' << (r.rho ? fmt(*r.rho, 4) : "") << '\t'
        << est_se(r.mu, r.mu_se) << '\t' << est_se(r.eta, r.eta_se) << '\t'
        << est_se(r.phi, r.phi_se) << '\t' << (r.theta ? std::to_string(*r.theta) : "") << '\t'
        << r.n_obs << '\t' << diag("cragg_donald_f") << '\t' << diag("sargan") << '\t'
        << diag("davidson_mackinnon") << '\t' << instruments << '\n';
  }
}

int cmd_estimate(const RunConfig& cfg) {
  const Panel panel = load_input(cfg, nullptr);
  const EstimateOptions options = make_options(cfg);

  std::vector<Method> methods;
  const bool all = cfg.method == "all";
  const auto want = [&](const std::string& name) {
    return all || cfg.method == name;
  };
  if (want("ivfe") && (!all || panel.has_full_quantity())) methods.push_back(Method::ivfe);
  if (want("fm")) methods.push_back(Method::fm);
  if (want("iiv")) methods.push_back(Method::iiv);
  if (want("sur")) methods.push_back(Method::sur);
  if ((cfg.method == "sur-stri" || cfg.method == "sur_stri") || (all && panel.has_stri()))
    methods.push_back(Method::sur_stri);
  if (methods.empty())
    throw ParseError("unknown method '" + cfg.method +
                     "' (expected ivfe, fm, iiv, sur, sur-stri, or all)");
  if (all && !panel.has_full_quantity())
    std::cerr << "warning: skipping ivfe, panel has no full quantity coverage\n";

  std::optional<long> theta;
  const auto theta_for = [&](const Panel& p) {
    if (!theta) theta = resolve_theta(p, parse_theta(cfg.theta));
    return *theta;
  };

  std::vector<MethodReport> reports;
  for (const Method m : methods) {
    MethodReport report;
    switch (m) {
      case Method::ivfe: report = estimate_ivfe(panel, options); break;
      case Method::fm: report = estimate_fm(panel, options); break;
      case Method::iiv: report = estimate_iiv(panel, options); break;
      case Method::sur: report = estimate_sur(panel, theta_for(panel), options); break;
      case Method::sur_stri: report = estimate_sur_stri(panel, theta_for(panel), options); break;
    }
    for (const auto& w : report.warnings) std::cerr << "warning: " << method_name(m) << ": " << w << "\n";
    reports.push_back(std::move(report));
  }

  std::ofstream file;
  std::ostream& out = open_output(cfg.out, file);
  if (cfg.format == "tsv") {
    print_reports_tsv(out, reports);
    if (cfg.apply_correction) {
      for (const auto& r : reports) {
        if (r.method != Method::sur && r.method != Method::sur_stri) continue;
        const CorrectedSigma corrected = apply_benchmark_correction(r.sigma);
        out << "# corrected sigma (" << method_name(r.method) << "): "
            << est_se(corrected.value, corrected.se) << "\n";
      }
    }
  } else {
    json arr = json::array();
    for (const auto& r : reports) {
      json j = to_json(r);
      if (cfg.apply_correction && (r.method == Method::sur || r.method == Method::sur_stri)) {
        const CorrectedSigma corrected = apply_benchmark_correction(r.sigma);
        j["correction"] = {{"sigma", corrected.value}, {"se", corrected.se}};
      }
      arr.push_back(std::move(j));
    }
    out << arr.dump(2) << "\n";
  }
  return 0;
}

DgpConfig make_dgp(const RunConfig& cfg) {
  DgpConfig dgp;
  dgp.n_countries = cfg.n;
  dgp.t_periods = cfg.t;
  dgp.theta = cfg.sim_theta;
  dgp.sigma_true = cfg.sigma;
  dgp.omega_true = cfg.omega;
  dgp.tau_true = cfg.tau;
  dgp.lambda_spread = cfg.lambda_spread;
  dgp.q.amplitude = cfg.q_amplitude;
  dgp.q.drift = cfg.q_drift;
  dgp.z_scale_min = cfg.z_scale_min;
  dgp.z_scale_max = cfg.z_scale_max;
  dgp.sd_eps = cfg.sd_eps;
  dgp.sd_delta = cfg.sd_delta;
  if (cfg.heavy_tails > 0) {
    dgp.shock_dist = ShockDist::student_t;
    dgp.student_t_df = cfg.heavy_tails;
  }
  if (cfg.with_stri) {
    dgp.stri.enabled = true;
    dgp.stri.eta = cfg.stri_eta;
  }
  dgp.seed = cfg.seed;
  return dgp;
}

int cmd_simulate(const RunConfig& cfg) {
  const DgpConfig dgp = make_dgp(cfg);

  if (cfg.reps > 0) {
    std::vector<Method> methods;
    std::stringstream ss(cfg.mc_methods);
    std::string token;
    while (std::getline(ss, token, ',')) {
      if (token == "ivfe") methods.push_back(Method::ivfe);
      else if (token == "fm") methods.push_back(Method::fm);
      else if (token == "iiv") methods.push_back(Method::iiv);
      else if (token == "sur") methods.push_back(Method::sur);
      else if (token == "sur-stri" || token == "sur_stri") methods.push_back(Method::sur_stri);
      else throw ParseError("unknown method in --methods: '" + token + "'");
    }
    const MonteCarloSummary summary = run_monte_carlo(dgp, methods, cfg.reps, make_options(cfg));
    std::ofstream file;
    std::ostream& out = open_output(cfg.out, file);
    if (cfg.format == "tsv") {
      out << "method\tsucceeded\tfailed\tmean\tbias\trmse\tmc_se\tcoverage\n";
      const auto row = [&](const MethodSummary& m) {
        out << m.method << '\t' << m.succeeded << '\t' << m.failed << '\t' << fmt(m.mean) << '\t'
            << fmt(m.bias) << '\t' << fmt(m.rmse) << '\t' << fmt(m.mc_se) << '\t'
            << fmt(m.coverage) << '\n';
      };
      for (const auto& m : summary.methods) row(m);
      row(summary.naive);
    } else {
      out << to_json(summary).dump(2) << "\n";
    }
    return 0;
  }

  const auto [panel, truth] = generate_panel(dgp);
  std::ofstream file;
  std::ostream& out = open_output(cfg.out, file);
  write_panel_csv(out, panel);
  out.flush();

  std::string truth_path = cfg.truth_out;
  if (truth_path.empty() && !cfg.out.empty() && cfg.out != "-") truth_path = cfg.out + ".truth.json";
  if (!truth_path.empty()) {
    std::ofstream truth_file(truth_path);
    if (!truth_file) throw ParseError("cannot open truth file " + truth_path);
    truth_file << to_json(truth).dump(2) << "\n";
  }
  return 0;
}

int cmd_diagnose(const RunConfig& cfg) {
  const Panel panel = load_input(cfg, nullptr);
  const EstimateOptions options = make_options(cfg);

  std::string context = cfg.context;
  if (context == "auto") context = panel.has_full_quantity() ? "ivfe" : "iiv";
  MethodReport report;
  if (context == "ivfe") {
    report = estimate_ivfe(panel, options);
  } else if (context == "iiv") {
    report = estimate_iiv(panel, options);
  } else {
    throw ParseError("--context must be auto, ivfe, or iiv");
  }
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";

  std::ofstream file;
  std::ostream& out = open_output(cfg.out, file);
  if (cfg.format == "tsv") {
    out << "test\tstatistic\tp\tdf\tverdict\n";
    for (const auto& d : report.diagnostics) {
      out << d.name << '\t' << (d.applicable ? fmt(d.statistic, 4) : "") << '\t'
          << (d.p_value ? fmt(*d.p_value, 3) : "") << '\t';
      for (std::size_t i = 0; i < d.df.size(); ++i) out << (i ? "," : "") << d.df[i];
      out << '\t' << d.verdict << '\n';
    }
  } else {
    json arr = json::array();
    for (const auto& d : report.diagnostics) arr.push_back(to_json(d));
    out << arr.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Armington trade-elasticity estimation from import shares and exchange rates"};
  app.require_subcommand(1);
  app.set_config("--config", "", "config file with key=value lines; explicit flags win");

  RunConfig cfg;

  CLI::App* estimate = app.add_subcommand("estimate", "estimate trade elasticities from a panel CSV");
  estimate->add_option("--input,-i", cfg.input, "panel CSV (country,period,value[,quantity],fx_rate[,stri]); '-' for stdin");
  estimate->add_option("--method,-m", cfg.method, "ivfe | fm | iiv | sur | sur-stri | all")
      ->default_str("all");
  estimate->add_option("--theta", cfg.theta, "normalization period: last | min-rss | <integer>")
      ->default_str("min-rss");
  estimate->add_option("--min-obs", cfg.min_obs, "drop countries with fewer present periods");
  estimate->add_option("--format,-f", cfg.format, "json | tsv")->default_str("json");
  estimate->add_flag("--drop-invalid", cfg.drop_invalid, "drop malformed rows instead of rejecting the file");
  estimate->add_flag("--sur-gls-points", cfg.sur_gls_points,
                     "take SUR point estimates from the coupled FGLS instead of per-equation OLS "
                     "(sensitivity check; the coupling leaks the matched demand shock into the points)");
  estimate->add_option("--sur-iterate", cfg.sur_iterate,
                       "iterate the coupled FGLS to a fixed point (default on; used with --sur-gls-points)");
  estimate->add_flag("--fm-differences", cfg.fm_differences,
                     "Feenstra variables by reference-country time differences instead of demeaning");
  estimate->add_flag("--no-level-instrument", cfg.no_level_instrument,
                     "never try the fx level as a secondary IVFE instrument");
  estimate->add_option("--iiv-derivatives", cfg.iiv_derivatives, "auto | none")->default_str("auto");
  estimate->add_flag("--robust-cov", cfg.robust_cov, "HC0 covariance instead of classical");
  estimate->add_flag("--apply-correction", cfg.apply_correction,
                     "also report the benchmark-corrected SUR elasticity");
  estimate->add_option("--out,-o", cfg.out, "output path (default stdout)");

  CLI::App* simulate = app.add_subcommand("simulate", "generate a synthetic panel (or Monte Carlo summary)");
  simulate->add_option("--n", cfg.n, "countries")->default_str("20");
  simulate->add_option("--t", cfg.t, "periods")->default_str("60");
  simulate->add_option("--sigma", cfg.sigma, "true elasticity")->default_str("3");
  simulate->add_option("--omega", cfg.omega, "true supply slope")->default_str("0.5");
  simulate->add_option("--tau", cfg.tau, "supply intercept")->default_str("0");
  simulate->add_option("--theta", cfg.sim_theta, "normalization period (default: last)");
  simulate->add_option("--sd-eps", cfg.sd_eps, "demand shock sd")->default_str("0.05");
  simulate->add_option("--sd-delta", cfg.sd_delta, "supply shock sd")->default_str("0.05");
  simulate->add_option("--z-scale-min", cfg.z_scale_min, "smallest per-country fx innovation sd");
  simulate->add_option("--z-scale-max", cfg.z_scale_max, "largest per-country fx innovation sd");
  simulate->add_option("--lambda-spread", cfg.lambda_spread, "width of the preference log-spread");
  simulate->add_option("--q-amplitude", cfg.q_amplitude, "ln Q sinusoid amplitude");
  simulate->add_option("--q-drift", cfg.q_drift, "ln Q drift per period");
  simulate->add_option("--heavy-tails", cfg.heavy_tails, "Student-t df for shocks (0 = gaussian)");
  simulate->add_option("--stri-eta", cfg.stri_eta, "STRI elasticity; implies an stri column")
      ->each([&cfg](const std::string&) { cfg.with_stri = true; });
  simulate->add_option("--seed", cfg.seed, "rng seed (fixed default 12345)");
  simulate->add_option("--reps", cfg.reps, "Monte Carlo replications (0 = emit one panel)");
  simulate->add_option("--methods", cfg.mc_methods, "comma list for --reps runs")->default_str("sur");
  simulate->add_option("--format,-f", cfg.format, "json | tsv (Monte Carlo summary)")->default_str("json");
  simulate->add_option("--out,-o", cfg.out, "panel CSV path (default stdout)");
  simulate->add_option("--truth", cfg.truth_out, "TruthRecord JSON path (default <out>.truth.json)");

  CLI::App* diagnose = app.add_subcommand("diagnose", "run the IV specification tests");
  diagnose->add_option("--input,-i", cfg.input, "panel CSV; '-' for stdin");
  diagnose->add_option("--context", cfg.context, "auto | ivfe | iiv")->default_str("auto");
  diagnose->add_option("--iiv-derivatives", cfg.iiv_derivatives, "auto | none")->default_str("auto");
  diagnose->add_option("--format,-f", cfg.format, "tsv | json")->default_str("tsv");
  diagnose->add_option("--min-obs", cfg.min_obs, "drop countries with fewer present periods");
  diagnose->add_flag("--drop-invalid", cfg.drop_invalid, "drop malformed rows instead of rejecting the file");
  diagnose->add_option("--out,-o", cfg.out, "output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const bool json_mode = cfg.format != "tsv";
  try {
    if (estimate->parsed()) return cmd_estimate(cfg);
    if (simulate->parsed()) return cmd_simulate(cfg);
    if (diagnose->parsed()) return cmd_diagnose(cfg);
  } catch (const armington::Error& e) {
    std::cerr << "error (" << e.kind() << "): " << e.what() << "\n";
    if (json_mode) std::cout << armington::error_json(e).dump(2) << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (json_mode) {
      armington::EstimationError wrapped("internal", e.what());
      std::cout << armington::error_json(wrapped).dump(2) << "\n";
    }
    return 5;
  }
  return 0;
}
