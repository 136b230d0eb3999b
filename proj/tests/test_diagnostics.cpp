#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "armington/diagnostics.hpp"
#include "armington/linreg.hpp"

using namespace armington;

namespace {

Eigen::VectorXd normals(std::mt19937_64& rng, long n, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  Eigen::VectorXd v(n);
  for (long i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

}  // namespace

TEST_CASE("cragg-donald first-stage F") {
  SECTION("irrelevant instrument sits near the null expectation and fails") {
    std::mt19937_64 rng(11);
    const long n = 5000;
    const Eigen::VectorXd x = normals(rng, n);
    const Eigen::MatrixXd w = normals(rng, n);  // independent of x
    const TestResult r = cragg_donald_f(x, w);
    CHECK(r.verdict == "fail");
    CHECK(r.statistic < 6.0);  // E[F] ~ 1 under the null
  }

  SECTION("instrument equal to the regressor diverges and is capped") {
    std::mt19937_64 rng(12);
    const Eigen::VectorXd x = normals(rng, 200);
    const TestResult r = cragg_donald_f(x, x);
    CHECK(r.verdict == "pass");
    CHECK(r.statistic == kFStatCap);
  }

  SECTION("one instrument: F equals the squared first-stage t") {
    std::mt19937_64 rng(13);
    const long n = 400;
    const Eigen::VectorXd w = normals(rng, n);
    const Eigen::VectorXd x = 0.3 * w + normals(rng, n);
    const TestResult r = cragg_donald_f(x, w);

    // first stage with an intercept, matching the centered statistic
    LinearSystem fs;
    fs.y = x;
    fs.X.resize(n, 2);
    fs.X.col(0) = Eigen::VectorXd::Ones(n);
    fs.X.col(1) = w;
    const RegressionResult fit = ols(fs);
    const double t = fit.tstat(1);
    CHECK(r.statistic == Catch::Approx(t * t).epsilon(1e-8));
  }

  SECTION("constant endogenous regressor is a degenerate fit") {
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(50, 2.0);
    std::mt19937_64 rng(14);
    const Eigen::MatrixXd w = normals(rng, 50);
    CHECK_THROWS_AS(cragg_donald_f(x, w), EstimationError);
  }
}

TEST_CASE("sargan overidentification") {
  SECTION("just-identified is not applicable") {
    std::mt19937_64 rng(21);
    const long n = 300;
    const Eigen::VectorXd w = normals(rng, n);
    const Eigen::VectorXd x = w + normals(rng, n);
    LinearSystem sys;
    sys.y = 0.5 * x + normals(rng, n);
    sys.X = x;
    sys.instruments = w;
    const RegressionResult fit = tsls(sys);
    const TestResult r = sargan_test(fit, sys.instruments);
    CHECK_FALSE(r.applicable);
    CHECK(r.verdict == "not_applicable");
  }

  SECTION("size: valid instruments reject about 5% of the time") {
    std::mt19937_64 rng(22);
    const long n = 10000;
    int rejections = 0;
    const int reps = 400;
    for (int rep = 0; rep < reps; ++rep) {
      const Eigen::VectorXd w1 = normals(rng, n);
      const Eigen::VectorXd w2 = normals(rng, n);
      const Eigen::VectorXd u = normals(rng, n);
      const Eigen::VectorXd v = 0.5 * u + normals(rng, n, 0.8);
      const Eigen::VectorXd x = 0.7 * w1 + 0.7 * w2 + v;
      LinearSystem sys;
      sys.y = x + u;
      sys.X = x;
      sys.instruments.resize(n, 2);
      sys.instruments.col(0) = w1;
      sys.instruments.col(1) = w2;
      const RegressionResult fit = tsls(sys);
      const TestResult r = sargan_test(fit, sys.instruments);
      REQUIRE(r.df == std::vector<long>{1});
      CHECK(r.statistic >= 0.0);
      if (*r.p_value < 0.05) ++rejections;
    }
    const double rate = static_cast<double>(rejections) / reps;
    CHECK(rate >= 0.03);
    CHECK(rate <= 0.07);
  }

  SECTION("power: an instrument leaking into the error is caught") {
    std::mt19937_64 rng(23);
    const long n = 10000;
    int rejections = 0;
    const int reps = 400;
    for (int rep = 0; rep < reps; ++rep) {
      const Eigen::VectorXd w1 = normals(rng, n);
      const Eigen::VectorXd u = normals(rng, n);
      const Eigen::VectorXd w2 = normals(rng, n) + 0.1 * u;  // contaminated
      const Eigen::VectorXd x = 0.7 * w1 + 0.7 * w2 + normals(rng, n);
      LinearSystem sys;
      sys.y = x + u;
      sys.X = x;
      sys.instruments.resize(n, 2);
      sys.instruments.col(0) = w1;
      sys.instruments.col(1) = w2;
      const RegressionResult fit = tsls(sys);
      const TestResult r = sargan_test(fit, sys.instruments);
      if (*r.p_value < 0.05) ++rejections;
    }
    CHECK(static_cast<double>(rejections) / reps > 0.9);
  }
}

TEST_CASE("davidson-mackinnon endogeneity test") {
  SECTION("instruments equal to regressors give statistic zero") {
    std::mt19937_64 rng(31);
    const long n = 200;
    const Eigen::VectorXd x = normals(rng, n);
    LinearSystem sys;
    sys.y = x + normals(rng, n);
    sys.X = x;
    // first stage of x on itself leaves zero residuals
    LinearSystem fs;
    fs.y = x;
    fs.X = x;
    const RegressionResult fit = ols(fs);
    const TestResult r = davidson_mackinnon_test(sys, fit.residuals);
    CHECK(r.statistic == 0.0);
    CHECK(r.verdict == "fail_to_reject");
  }

  SECTION("one endogenous regressor: F equals the squared control-function t") {
    std::mt19937_64 rng(32);
    const long n = 500;
    const Eigen::VectorXd w = normals(rng, n);
    const Eigen::VectorXd u = normals(rng, n);
    const Eigen::VectorXd x = w + 0.5 * u + normals(rng, n, 0.5);
    LinearSystem sys;
    sys.y = x + u;
    sys.X = x;
    LinearSystem fs;
    fs.y = x;
    fs.X = w;
    const RegressionResult first = ols(fs);
    const TestResult r = davidson_mackinnon_test(sys, first.residuals);

    LinearSystem augmented;
    augmented.y = sys.y;
    augmented.X.resize(n, 2);
    augmented.X.col(0) = x;
    augmented.X.col(1) = first.residuals;
    const RegressionResult fit = ols(augmented);
    CHECK(r.statistic == Catch::Approx(fit.tstat(1) * fit.tstat(1)).epsilon(1e-8));
  }

  SECTION("size under an exogenous regressor") {
    std::mt19937_64 rng(33);
    const long n = 2000;
    int rejections = 0;
    const int reps = 400;
    for (int rep = 0; rep < reps; ++rep) {
      const Eigen::VectorXd w = normals(rng, n);
      const Eigen::VectorXd x = w + normals(rng, n);  // exogenous by construction
      LinearSystem sys;
      sys.y = 0.8 * x + normals(rng, n);
      sys.X = x;
      LinearSystem fs;
      fs.y = x;
      fs.X = w;
      const TestResult r = davidson_mackinnon_test(sys, ols(fs).residuals);
      if (*r.p_value < 0.05) ++rejections;
    }
    const double rate = static_cast<double>(rejections) / reps;
    CHECK(rate >= 0.03);
    CHECK(rate <= 0.07);
  }
}

TEST_CASE("statistics are invariant to affine instrument rescaling") {
  std::mt19937_64 rng(41);
  const long n = 600;
  const Eigen::VectorXd w1 = normals(rng, n);
  const Eigen::VectorXd w2 = normals(rng, n);
  const Eigen::VectorXd u = normals(rng, n);
  const Eigen::VectorXd x = 0.6 * w1 + 0.4 * w2 + 0.5 * u + normals(rng, n, 0.5);
  const Eigen::VectorXd y = x + u;

  Eigen::MatrixXd w(n, 2);
  w.col(0) = w1;
  w.col(1) = w2;
  Eigen::MatrixXd w_scaled(n, 2);
  w_scaled.col(0) = 3.5 * w1.array() - 2.0;  // affine per column
  w_scaled.col(1) = -0.25 * w2.array() + 7.0;

  LinearSystem sys;
  sys.y = y;
  sys.X = x;
  sys.instruments = w;
  const RegressionResult fit = tsls(sys);

  const TestResult cd_a = cragg_donald_f(x, w);
  const TestResult cd_b = cragg_donald_f(x, w_scaled);
  CHECK(cd_a.statistic == Catch::Approx(cd_b.statistic).epsilon(1e-8));

  // same residual vector, rescaled instrument set
  const TestResult sg_a = sargan_test(fit, w);
  const TestResult sg_b = sargan_test(fit, w_scaled);
  CHECK(sg_a.statistic == Catch::Approx(sg_b.statistic).epsilon(1e-8));

  // first stages with an intercept span the same space either way
  LinearSystem fs;
  fs.y = x;
  fs.X.resize(n, 3);
  fs.X.col(0) = Eigen::VectorXd::Ones(n);
  fs.X.rightCols(2) = w;
  const Eigen::VectorXd v_a = ols(fs).residuals;
  fs.X.rightCols(2) = w_scaled;
  const Eigen::VectorXd v_b = ols(fs).residuals;
  LinearSystem ols_sys;
  ols_sys.y = y;
  ols_sys.X = x;
  const TestResult dm_a = davidson_mackinnon_test(ols_sys, v_a);
  const TestResult dm_b = davidson_mackinnon_test(ols_sys, v_b);
  CHECK(dm_a.statistic == Catch::Approx(dm_b.statistic).epsilon(1e-8));
}
