#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "armington/csv.hpp"
#include "armington/demean.hpp"
#include "armington/panel.hpp"

using namespace armington;

namespace {

PanelObservation obs(const std::string& c, long p, double v, double fx) {
  PanelObservation o;
  o.country = c;
  o.period = p;
  o.value = v;
  o.fx_rate = fx;
  return o;
}

MaskedSeries random_masked(std::mt19937_64& rng, int n, int t) {
  std::uniform_real_distribution<double> unif(-5.0, 5.0);
  std::bernoulli_distribution present(0.85);
  Eigen::ArrayXXd values(n, t);
  Mask mask(n, t);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < t; ++j) {
      mask(i, j) = present(rng);
      values(i, j) = mask(i, j) ? unif(rng) : kAbsent;
    }
  // guarantee coverage of every row and column
  for (int i = 0; i < n; ++i)
    if (!mask.row(i).any()) {
      mask(i, 0) = true;
      values(i, 0) = unif(rng);
    }
  for (int j = 0; j < t; ++j)
    if (!mask.col(j).any()) {
      mask(0, j) = true;
      values(0, j) = unif(rng);
    }
  return MaskedSeries{values, mask, "x"};
}

double max_line_mean(const DemeanedSeries& d) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    double s = 0.0;
    long n = 0;
    for (Eigen::Index t = 0; t < d.cols(); ++t)
      if (d.mask(i, t)) { s += d.values(i, t); ++n; }
    if (n) worst = std::max(worst, std::fabs(s / n));
  }
  for (Eigen::Index t = 0; t < d.cols(); ++t) {
    double s = 0.0;
    long n = 0;
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      if (d.mask(i, t)) { s += d.values(i, t); ++n; }
    if (n) worst = std::max(worst, std::fabs(s / n));
  }
  return worst;
}

}  // namespace

TEST_CASE("panel construction and masks") {
  SECTION("minimal well-formed input") {
    const Panel p = Panel::from_observations({
        obs("JP", 0, 1.0, 1.0), obs("JP", 1, 2.0, 1.1),
        obs("US", 0, 3.0, 0.9), obs("US", 1, 4.0, 0.8),
        obs("DE", 0, 5.0, 1.2), obs("DE", 1, 6.0, 1.3),
    });
    CHECK(p.n_countries() == 3);
    CHECK(p.n_periods() == 2);
    CHECK(p.mask().all());
  }

  SECTION("one missing cell leaves exactly one absent entry") {
    const Panel p = Panel::from_observations({
        obs("A", 0, 1.0, 1.0), obs("A", 1, 2.0, 1.0),
        obs("B", 0, 3.0, 1.0),
    });
    CHECK(p.mask().count() == 3);
    CHECK_FALSE(p.mask()(p.country_index("B"), p.period_index(1)));
  }

  SECTION("duplicate keys are a conflict") {
    CHECK_THROWS_AS(Panel::from_observations({
                        obs("A", 0, 1.0, 1.0), obs("A", 0, 2.0, 1.0),
                        obs("B", 0, 1.0, 1.0), obs("B", 1, 1.0, 1.0),
                    }),
                    ConflictError);
  }

  SECTION("dimension floor") {
    CHECK_THROWS_AS(Panel::from_observations({obs("A", 0, 1.0, 1.0), obs("A", 1, 1.0, 1.0)}),
                    DimensionError);
  }
}

TEST_CASE("value shares") {
  SECTION("direct ratios") {
    const Panel p = Panel::from_observations({
        obs("A", 0, 10.0, 1.0), obs("B", 0, 30.0, 1.0),
        obs("A", 1, 1.0, 1.0), obs("B", 1, 1.0, 1.0),
    });
    const ShareSeries s = compute_value_shares(p);
    CHECK(s.values(p.country_index("A"), 0) == Catch::Approx(0.25));
    CHECK(s.values(p.country_index("B"), 0) == Catch::Approx(0.75));
  }

  SECTION("three-way split") {
    const Panel p = Panel::from_observations({
        obs("A", 0, 1.0, 1.0), obs("B", 0, 1.0, 1.0), obs("C", 0, 2.0, 1.0),
        obs("A", 1, 1.0, 1.0), obs("B", 1, 1.0, 1.0), obs("C", 1, 2.0, 1.0),
    });
    const ShareSeries s = compute_value_shares(p);
    CHECK(s.values(0, 0) == Catch::Approx(0.25));
    CHECK(s.values(2, 0) == Catch::Approx(0.5));
  }

  SECTION("single country present at a period gets share 1") {
    const Panel p = Panel::from_observations({
        obs("A", 0, 7.0, 1.0), obs("A", 1, 2.0, 1.0), obs("B", 1, 2.0, 1.0),
    });
    const ShareSeries s = compute_value_shares(p);
    CHECK(s.values(p.country_index("A"), p.period_index(0)) == 1.0);
  }

  SECTION("per-period sums are 1 on random panels") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.1, 9.0);
    std::vector<PanelObservation> rows;
    for (int i = 0; i < 8; ++i)
      for (int t = 0; t < 12; ++t)
        if ((i + t) % 7 != 0) rows.push_back(obs("C" + std::to_string(i), t, unif(rng), unif(rng)));
    const Panel p = Panel::from_observations(rows);
    const ShareSeries s = compute_value_shares(p);
    for (Eigen::Index t = 0; t < p.n_periods(); ++t) {
      double total = 0.0;
      for (Eigen::Index i = 0; i < p.n_countries(); ++i)
        if (p.mask()(i, t)) total += s.values(i, t);
      CHECK(std::fabs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("double demeaning") {
  SECTION("constants vanish") {
    MaskedSeries x{Eigen::ArrayXXd::Constant(4, 5, 3.7), Mask::Constant(4, 5, true), "c"};
    const DemeanedSeries d = double_demean(x);
    CHECK(d.values.abs().maxCoeff() < 1e-12);
  }

  SECTION("additively separable effects vanish on balanced panels") {
    Eigen::ArrayXXd x(3, 4);
    const double a[3] = {1.0, -2.0, 0.5};
    const double b[4] = {0.3, 4.0, -1.0, 2.2};
    for (int i = 0; i < 3; ++i)
      for (int t = 0; t < 4; ++t) x(i, t) = a[i] + b[t];
    const DemeanedSeries d = double_demean(MaskedSeries{x, Mask::Constant(3, 4, true), "ab"});
    CHECK(d.values.abs().maxCoeff() < 1e-12);
  }

  SECTION("hand-applied four-term formula on a 2x2") {
    Eigen::ArrayXXd x(2, 2);
    x << 1, 2, 4, 3;
    const DemeanedSeries d = double_demean(MaskedSeries{x, Mask::Constant(2, 2, true), "x"});
    CHECK(d.values(0, 0) == Catch::Approx(-0.5));
    CHECK(d.values(0, 1) == Catch::Approx(0.5));
    CHECK(d.values(1, 0) == Catch::Approx(0.5));
    CHECK(d.values(1, 1) == Catch::Approx(-0.5));
  }

  SECTION("mask preservation, idempotence, linearity, vanishing means") {
    std::mt19937_64 rng(42);
    for (int rep = 0; rep < 25; ++rep) {
      const int n = 2 + static_cast<int>(rng() % 8);
      const int t = 2 + static_cast<int>(rng() % 9);
      const MaskedSeries x = random_masked(rng, n, t);
      const MaskedSeries y = random_masked(rng, n, t);

      const DemeanedSeries dx = double_demean(x);
      CHECK((dx.mask == x.mask).all());
      CHECK(max_line_mean(dx) < 1e-10);

      const DemeanedSeries ddx = double_demean(dx);
      for (Eigen::Index i = 0; i < dx.rows(); ++i)
        for (Eigen::Index j = 0; j < dx.cols(); ++j)
          if (dx.mask(i, j)) CHECK(std::fabs(ddx.values(i, j) - dx.values(i, j)) < 1e-10);

      // linearity on the common mask
      MaskedSeries combo = x;
      combo.mask = intersect(x.mask, y.mask);
      bool rows_ok = true;
      for (Eigen::Index i = 0; i < combo.mask.rows(); ++i) rows_ok &= combo.mask.row(i).any();
      for (Eigen::Index j = 0; j < combo.mask.cols(); ++j) rows_ok &= combo.mask.col(j).any();
      if (!rows_ok) continue;
      const double alpha = 2.5, beta = -1.25;
      for (Eigen::Index i = 0; i < combo.mask.rows(); ++i)
        for (Eigen::Index j = 0; j < combo.mask.cols(); ++j)
          combo.values(i, j) = combo.mask(i, j) ? alpha * x.values(i, j) + beta * y.values(i, j)
                                                : kAbsent;
      MaskedSeries xm = x, ym = y;
      xm.mask = combo.mask;
      ym.mask = combo.mask;
      const DemeanedSeries dc = double_demean(combo);
      const DemeanedSeries dxm = double_demean(xm);
      const DemeanedSeries dym = double_demean(ym);
      for (Eigen::Index i = 0; i < combo.mask.rows(); ++i)
        for (Eigen::Index j = 0; j < combo.mask.cols(); ++j)
          if (combo.mask(i, j))
            CHECK(std::fabs(dc.values(i, j) - alpha * dxm.values(i, j) - beta * dym.values(i, j)) <
                  1e-10);
    }
  }

  SECTION("balanced closed form agrees with the iterative path") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(-4.0, 4.0);
    Eigen::ArrayXXd x(6, 9);
    for (Eigen::Index i = 0; i < 6; ++i)
      for (Eigen::Index t = 0; t < 9; ++t) x(i, t) = unif(rng);
    const Mask full = Mask::Constant(6, 9, true);
    const DemeanedSeries closed = double_demean(MaskedSeries{x, full, "x"});
    // force the iterative path with an all-true mask minus nothing: emulate by
    // toggling one cell off and back is not balanced; instead run sweeps manually
    Eigen::ArrayXXd it = x;
    for (int sweep = 0; sweep < 60; ++sweep) {
      for (Eigen::Index i = 0; i < it.rows(); ++i) it.row(i) -= it.row(i).mean();
      for (Eigen::Index t = 0; t < it.cols(); ++t) it.col(t) -= it.col(t).mean();
    }
    CHECK((closed.values - it).abs().maxCoeff() < 1e-10);
  }

  SECTION("empty row rejected") {
    Eigen::ArrayXXd x = Eigen::ArrayXXd::Zero(2, 2);
    Mask m(2, 2);
    m << true, true, false, false;
    CHECK_THROWS_AS(double_demean(MaskedSeries{x, m, "x"}), DimensionError);
  }
}

TEST_CASE("coverage filter") {
  std::vector<PanelObservation> rows;
  for (int t = 0; t < 180; ++t) {
    rows.push_back(obs("full", t, 1.0, 1.0));
    rows.push_back(obs("rich", t, 1.0, 1.0));
    if (t < 150) rows.push_back(obs("thin", t, 1.0, 1.0));
  }
  const Panel p = Panel::from_observations(rows);

  SECTION("a 150-of-180 country falls to the 160 threshold") {
    const Panel filtered = filter_coverage(p, 160);
    CHECK(filtered.n_countries() == 2);
    CHECK_THROWS_AS(filtered.country_index("thin"), DimensionError);
  }

  SECTION("min_obs = 0 is a no-op") {
    const Panel filtered = filter_coverage(p, 0);
    CHECK(filtered.n_countries() == 3);
    CHECK(filtered.mask().count() == p.mask().count());
  }

  SECTION("all countries below threshold is a dimension error") {
    const Panel two = Panel::from_observations({
        obs("A", 0, 1.0, 1.0), obs("A", 1, 1.0, 1.0),
        obs("B", 0, 1.0, 1.0), obs("B", 2, 1.0, 1.0),
    });
    CHECK_THROWS_AS(filter_coverage(two, 3), DimensionError);
  }
}

TEST_CASE("csv ingestion") {
  SECTION("happy path with optional columns") {
    std::istringstream in(
        "country,period,value,quantity,fx_rate,stri\n"
        "JP,2008-01,100.0,5.0,110.2,0.2\n"
        "JP,2008-02,90.0,4.0,108.9,0.2\n"
        "US,2008-01,50.0,2.0,1.0,\n"
        "US,2008-02,55.0,2.1,1.0,0.3\n");
    const LoadResult r = load_panel(in);
    CHECK(r.panel.n_countries() == 2);
    CHECK(r.panel.n_periods() == 2);
    CHECK(r.panel.has_full_quantity());
    CHECK(r.panel.has_stri());
    CHECK(r.panel.periods()[0] == 2008 * 12 + 0);
  }

  SECTION("strict mode rejects a zero value naming the line") {
    std::istringstream in(
        "country,period,value,fx_rate\n"
        "A,1,1.0,1.0\n"
        "A,2,0.0,1.0\n"
        "B,1,1.0,1.0\n"
        "B,2,1.0,1.0\n");
    try {
      load_panel(in);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }

  SECTION("drop mode masks the offending cell") {
    std::istringstream in(
        "country,period,value,fx_rate\n"
        "A,1,1.0,1.0\n"
        "A,2,-3.0,1.0\n"
        "B,1,1.0,1.0\n"
        "B,2,1.0,1.0\n");
    LoadOptions options;
    options.strict = false;
    const LoadResult r = load_panel(in, options);
    CHECK(r.dropped_rows == 1);
    CHECK(r.panel.mask().count() == 3);
  }

  SECTION("missing required column") {
    std::istringstream in("country,period,value\nA,1,1\n");
    CHECK_THROWS_AS(load_panel(in), ParseError);
  }

  SECTION("schema mapping renames columns") {
    std::istringstream in(
        "iso,month,imports,exrate\n"
        "JP,1,10,1.5\nJP,2,11,1.4\nUS,1,5,1.0\nUS,2,6,1.0\n");
    LoadOptions options;
    options.schema.country = "iso";
    options.schema.period = "month";
    options.schema.value = "imports";
    options.schema.fx_rate = "exrate";
    const LoadResult r = load_panel(in, options);
    CHECK(r.panel.n_countries() == 2);
    CHECK(r.panel.values()(r.panel.country_index("JP"), r.panel.period_index(2)) == 11.0);
  }

  SECTION("write/read round trip preserves every cell") {
    std::vector<PanelObservation> rows;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(0.01, 7.0);
    for (int i = 0; i < 4; ++i)
      for (int t = 0; t < 5; ++t) {
        if ((i * 5 + t) % 9 == 0) continue;
        PanelObservation o = obs("C" + std::to_string(i), t, unif(rng), unif(rng));
        o.quantity = unif(rng);
        rows.push_back(o);
      }
    const Panel p = Panel::from_observations(rows);
    std::ostringstream out;
    write_panel_csv(out, p);
    std::istringstream in(out.str());
    const LoadResult r = load_panel(in);
    REQUIRE(r.panel.mask().count() == p.mask().count());
    CHECK(((r.panel.values() == p.values()) || (p.values() != p.values())).all());
    CHECK(((r.panel.fx_rates() == p.fx_rates()) || (p.fx_rates() != p.fx_rates())).all());
  }
}
