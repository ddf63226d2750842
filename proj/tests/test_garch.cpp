#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <boost/math/distributions/students_t.hpp>

#include "oracles.hpp"
#include "tpot/tpot.hpp"

using namespace tpot;

namespace {

GarchParams sp_gjr_t() {
  GarchParams g;
  g.mu = 3.7e-4;
  g.omega = 5.5e-5;
  g.alpha1 = 0.027;
  g.gamma1 = 0.082;
  g.beta1 = 0.93;
  g.o = 1;
  g.dist = ErrorDist::student_t;
  g.nu = 8.0;
  return g;
}

// Plain loop over the variance recursion and the error density.
double loglik_oracle(const GarchParams& g, const std::vector<double>& x, double var0) {
  boost::math::students_t_distribution<double> T(g.nu);
  const double c = std::sqrt((g.nu - 2.0) / g.nu);
  double var = var0, ll = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (t > 0) {
      const double e = x[t - 1] - g.mu;
      var = g.omega + g.alpha1 * e * e + (e < 0.0 ? g.gamma1 * e * e : 0.0) + g.beta1 * var;
    }
    const double s = std::sqrt(var), z = (x[t] - g.mu) / s;
    if (g.dist == ErrorDist::normal) ll += -0.5 * std::log(2.0 * M_PI) - 0.5 * z * z - std::log(s);
    else ll += std::log(boost::math::pdf(T, z / c) / c) - std::log(s);
  }
  return ll;
}

}  // namespace

TEST(GarchFilter, ReproducesSimulatedVolatility) {
  for (const GarchParams& g : {sp_gjr_t(), GarchParams{}}) {
    const auto path = simulate_garch_path(g, 5000, 12);
    const auto f = garch_filter(g, path.series.x, VarianceInit::unconditional);
    ASSERT_EQ(f.sigma.size(), path.sigma.size());
    for (std::size_t t = 0; t < f.sigma.size(); ++t) EXPECT_EQ(f.sigma[t], path.sigma[t]);
  }
}

TEST(GarchFilter, NormalResidualsAreStandardized) {
  GarchParams g = sp_gjr_t();
  g.dist = ErrorDist::normal;
  const auto x = simulate_garch(g, 2000, 3).x;
  const auto f = garch_filter(g, x);
  for (std::size_t t = 0; t < x.size(); ++t) EXPECT_EQ(f.z[t], (x[t] - g.mu) / f.sigma[t]);
}

TEST(GarchFilter, ConstantVolatilityFixedPoint) {
  GarchParams g;
  g.omega = 0.25;
  const std::vector<double> x{1.0, -3.0, 0.2, 5.0};
  const auto f = garch_filter(g, x, VarianceInit::unconditional);
  for (double s : f.sigma) EXPECT_EQ(s, 0.5);
}

TEST(GarchFilter, SampleVarianceInitialization) {
  const GarchParams g = sp_gjr_t();
  const auto x = simulate_garch(g, 1000, 5).x;
  const auto f = garch_filter(g, x, VarianceInit::sample, 400);
  const std::vector<double> train(x.begin(), x.begin() + 400);
  EXPECT_DOUBLE_EQ(f.sigma[0] * f.sigma[0], detail::sample_variance(train));
}

TEST(GarchFilter, StudentPitIsUniformAndNormal) {
  const GarchParams g = sp_gjr_t();
  int pass_u = 0, pass_z = 0;
  for (int r = 0; r < 100; ++r) {
    const auto x = simulate_garch(g, 2000, replication_seed(9, r)).x;
    const auto f = garch_filter(g, x, VarianceInit::unconditional);
    pass_u += ks_test(f.u, Reference::uniform).p_value > 0.05;
    pass_z += ks_test(f.z, Reference::normal).p_value > 0.05;
  }
  EXPECT_GE(pass_u, 90);
  EXPECT_GE(pass_z, 90);
}

TEST(GarchFilter, PitTailsStayFinite) {
  GarchParams g;
  g.dist = ErrorDist::student_t;
  g.nu = 3.0;
  const auto f = garch_filter(g, std::vector<double>{-200.0, 200.0, 0.0}, VarianceInit::unconditional);
  boost::math::students_t_distribution<double> T(3.0);
  const double u = boost::math::cdf(T, -200.0 / std::sqrt(1.0 / 3.0));
  EXPECT_NEAR(f.z[0], stats::normal_quantile(u), 1e-9);
  EXPECT_LT(f.z[0], -5.0);
  EXPECT_NEAR(f.z[1], -f.z[0], 1e-9);
  EXPECT_NEAR(f.z[2], 0.0, 1e-12);
}

TEST(GarchLikelihood, MatchesPlainLoop) {
  for (const ErrorDist d : {ErrorDist::normal, ErrorDist::student_t}) {
    GarchParams g = sp_gjr_t();
    g.dist = d;
    const auto x = simulate_garch(g, 3000, 2).x;
    const double v0 = g.unconditional_variance();
    EXPECT_NEAR(detail::garch_loglik(g, x, v0), loglik_oracle(g, x, v0), 1e-8 * std::abs(loglik_oracle(g, x, v0)));
  }
}

TEST(GarchFit, RecoversStudentLeverageModel) {
  const GarchParams g = sp_gjr_t();
  const auto truth = detail::GarchLayout::values(g);
  std::vector<int> ok(truth.size(), 0);
  const int reps = 50;
  for (int r = 0; r < reps; ++r) {
    const auto x = simulate_garch(g, 12311, replication_seed(5, r)).x;
    GarchFitOptions o;
    o.init = VarianceInit::unconditional;
    const auto f = garch_fit(x, 1, ErrorDist::student_t, o);
    EXPECT_TRUE(f.converged);
    for (std::size_t i = 0; i < truth.size(); ++i)
      ok[i] += f.se[i] && std::abs(f.estimates[i] - truth[i]) <= 3.0 * *f.se[i];
  }
  const auto names = detail::GarchLayout(1, ErrorDist::student_t, 1.0).names;
  for (std::size_t i = 0; i < truth.size(); ++i) EXPECT_GE(ok[i], 45) << names[i];
}

TEST(GarchFit, NestedFitsOrderedAndAicArithmetic) {
  const auto x = simulate_garch(sp_gjr_t(), 4000, 6).x;
  const auto g0n = garch_fit(x, 0, ErrorDist::normal);
  const auto g1n = garch_fit(x, 1, ErrorDist::normal);
  const auto g1t = garch_fit(x, 1, ErrorDist::student_t);
  EXPECT_GE(g1n.loglik, g0n.loglik - 1e-6);
  EXPECT_GE(g1t.loglik, g1n.loglik - 1e-6);
  EXPECT_LT(g1t.aic, g0n.aic);
  EXPECT_DOUBLE_EQ(g1t.aic, 2.0 * 6 - 2.0 * g1t.loglik);
  EXPECT_EQ(g0n.names.size(), 4u);
  EXPECT_TRUE(g1t.se_of("nu").has_value());
}

TEST(GarchFit, ScaleOnlyChangesUnits) {
  const auto x = simulate_garch(sp_gjr_t(), 3000, 7).x;
  const auto raw = garch_fit(x, 0, ErrorDist::normal);
  GarchFitOptions o;
  o.scale = 100.0;
  const auto pct = garch_fit(x, 0, ErrorDist::normal, o);
  EXPECT_NEAR(pct.unscaled().alpha1, raw.params.alpha1, 1e-3);
  EXPECT_NEAR(pct.unscaled().omega / raw.params.omega, 1.0, 0.02);
  EXPECT_NEAR(pct.loglik, raw.loglik - 3000 * std::log(100.0), 1e-2);
}

TEST(GarchFit, Errors) {
  EXPECT_THROW(garch_fit(std::vector<double>(500, 0.01), 0, ErrorDist::normal), std::domain_error);
  EXPECT_THROW(garch_fit(std::vector<double>(199, 0.01), 0, ErrorDist::normal), std::invalid_argument);
  EXPECT_THROW(garch_fit(std::vector<double>(300, 0.01), 2, ErrorDist::normal), std::invalid_argument);
  EXPECT_THROW(parse_error_dist("cauchy"), std::invalid_argument);
  GarchParams g;
  g.gamma1 = 0.1;
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(GarchParams, JsonRoundTrip) {
  const GarchParams g = sp_gjr_t();
  const auto back = garch_params_from_json(nlohmann::json::parse(to_json(g).dump()));
  EXPECT_EQ(back.mu, g.mu);
  EXPECT_EQ(back.gamma1, g.gamma1);
  EXPECT_EQ(back.o, 1);
  EXPECT_EQ(back.dist, ErrorDist::student_t);
  EXPECT_EQ(back.nu, 8.0);
}

TEST(HawkesOnResiduals, WhiteNoiseHasNoExcitation) {
  GarchParams unit;
  const auto x = simulate_garch(unit, 12311, 2024).x;
  FitOptions o;
  o.restarts = 4;
  const auto res = hawkes_on_residuals(x, unit, o);
  EXPECT_NEAR(res.exceedances.u_left, -1.959964, 0.072);
  EXPECT_NEAR(res.exceedances.u_right, 1.959964, 0.072);
  for (const char* name : {"gamma_left_left", "gamma_left_right", "gamma_right_left", "gamma_right_right"}) {
    const auto se = res.fit.se_of(name);
    ASSERT_TRUE(se.has_value()) << name;
    EXPECT_LE(res.fit.estimate_of(name), 3.0 * *se) << name;
  }
  EXPECT_EQ(res.fit.params.eta.left, 0.0);
  EXPECT_EQ(res.fit.params.alpha.right, 0.0);
  for (std::size_t t = 1; t < x.size(); ++t) ASSERT_EQ(res.z[t], x[t]);
}

TEST(HawkesOnResiduals, SimulatedGarchResidualsAreUnexcited) {
  const GarchParams g = sp_gjr_t();
  int ok = 0;
  for (int r = 0; r < 5; ++r) {
    const auto x = simulate_garch(g, 12311, replication_seed(40, r)).x;
    FitOptions o;
    o.restarts = 4;
    const auto res = hawkes_on_residuals(x, g, o, 0.025, 0, VarianceInit::unconditional);
    bool all = true;
    for (const char* name : {"gamma_left_left", "gamma_left_right", "gamma_right_left", "gamma_right_right"}) {
      const auto se = res.fit.se_of(name);
      all = all && se && res.fit.estimate_of(name) <= 3.0 * *se;
    }
    ok += all;
  }
  EXPECT_GE(ok, 4);
}
