#include <catch2/catch_amalgamated.hpp>

#include "armington/stats.hpp"

using namespace armington;

// Reference values computed with scipy.stats (chi2.sf / f.sf), 15 digits.
TEST_CASE("chi-square survival function matches reference values") {
  const struct {
    double x, df, expected;
  } cases[] = {
      {0.52, 1, 4.708416819906315e-01},  {3.841458820694124, 1, 4.999999999999989e-02},
      {5.0, 3, 1.717971442967335e-01},   {10.0, 4, 4.042768199451279e-02},
      {0.02, 1, 8.875370839817150e-01},  {25.0, 7, 7.588002556582502e-04},
      {0.001, 2, 9.995001249791693e-01}, {300.0, 5, 1.001530230595782e-62},
  };
  for (const auto& c : cases) {
    CAPTURE(c.x, c.df);
    CHECK(stats::chi_squared_sf(c.x, c.df) ==
          Catch::Approx(c.expected).epsilon(1e-11).margin(1e-290));
  }
  CHECK(stats::chi_squared_sf(0.0, 3) == 1.0);
  CHECK(stats::chi_squared_sf(-1.0, 3) == 1.0);
}

TEST_CASE("F survival function matches reference values") {
  const struct {
    double f, d1, d2, expected;
  } cases[] = {
      {16.69, 1, 3000, 4.516473758837180e-05}, {1.0, 1, 10, 3.408931323020598e-01},
      {2.5, 3, 40, 7.325435201794978e-02},     {10.0, 2, 100, 1.098848191171725e-04},
      {4.06, 1, 2136, 4.403557666682247e-02},  {0.5, 5, 5, 7.674886808696213e-01},
      {1e8, 1, 50, 3.346019870566250e-159},
  };
  for (const auto& c : cases) {
    CAPTURE(c.f, c.d1, c.d2);
    CHECK(stats::f_sf(c.f, c.d1, c.d2) == Catch::Approx(c.expected).epsilon(1e-11).margin(1e-290));
  }
  CHECK(stats::f_sf(0.0, 2, 10) == 1.0);
}

TEST_CASE("incomplete gamma and beta are complementary") {
  for (const double a : {0.5, 1.0, 3.5, 10.0}) {
    for (const double x : {0.1, 1.0, 5.0, 20.0}) {
      CHECK(stats::gamma_p(a, x) + stats::gamma_q(a, x) == Catch::Approx(1.0).epsilon(1e-12));
    }
  }
  for (const double a : {0.5, 2.0, 7.0}) {
    for (const double b : {0.5, 3.0}) {
      for (const double x : {0.05, 0.4, 0.9}) {
        CHECK(stats::beta_i(a, b, x) + stats::beta_i(b, a, 1.0 - x) ==
              Catch::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}
