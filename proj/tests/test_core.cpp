#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>

#include "oracles.hpp"
#include "tpot/tpot.hpp"

using namespace tpot;

TEST(ImpactKappa, UnmarkedIsOne) { EXPECT_DOUBLE_EQ(impact_kappa(0.9, 0.0), 1.0); }

TEST(ImpactKappa, LowQuantileLimit) { EXPECT_NEAR(impact_kappa(1e-15, 1.0), 0.5, 1e-12); }

TEST(ImpactKappa, UnitHazard) { EXPECT_NEAR(impact_kappa(1.0 - std::exp(-1.0), 1.0), 1.0, 1e-12); }

TEST(ImpactKappa, RejectsCertainQuantile) {
  EXPECT_THROW(impact_kappa(1.0, 0.5), std::domain_error);
  EXPECT_THROW(impact_kappa(-0.1, 0.5), std::domain_error);
  EXPECT_THROW(impact_kappa(0.5, -1.0), std::domain_error);
}

TEST(ImpactKappa, MeanIsOneUnderOwnMarks) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (double a : {0.0, 0.5, 2.0}) {
    const int n = 100000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double y = gpd_quantile(U(rng), 0.22, 3.7e-3);
      const double k = impact_kappa(gpd_cdf(-y, Tail::left, 0.22, 3.7e-3), a);
      s += k;
      s2 += k * k;
    }
    const double mean = s / n;
    const double se = std::sqrt(std::max(s2 / n - mean * mean, 0.0) / n);
    EXPECT_LE(std::abs(mean - 1.0), std::max(3.0 * se, 1e-12)) << "alpha " << a;
  }
}

TEST(Gpd, ExponentialCase) { EXPECT_NEAR(gpd_cdf(1.0, Tail::right, 0.0, 1.0), 0.632120558828558, 1e-12); }

TEST(Gpd, UnitShape) { EXPECT_NEAR(gpd_cdf(1.0, Tail::right, 1.0, 1.0), 0.5, 1e-15); }

TEST(Gpd, LeftTailUsesMagnitude) {
  EXPECT_DOUBLE_EQ(gpd_cdf(-0.3, Tail::left, 0.2, 0.5), gpd_cdf(0.3, Tail::right, 0.2, 0.5));
}

TEST(Gpd, ContinuityInShape) {
  for (int i = 0; i <= 200; ++i) {
    const double m = 10.0 * i / 200.0 + 1e-9;
    EXPECT_LT(std::abs(gpd_cdf(m, Tail::right, 1e-8, 1.0) - gpd_cdf(m, Tail::right, 0.0, 1.0)), 1e-6);
  }
}

TEST(Gpd, SignMismatchAndSupport) {
  EXPECT_THROW(gpd_cdf(0.5, Tail::left, 0.1, 1.0), std::domain_error);
  EXPECT_THROW(gpd_cdf(-0.5, Tail::right, 0.1, 1.0), std::domain_error);
  EXPECT_THROW(gpd_cdf(3.0, Tail::right, -0.5, 1.0), std::domain_error);
  EXPECT_THROW(gpd_cdf(1.0, Tail::right, 0.1, 0.0), std::domain_error);
}

TEST(Gpd, QuantileInvertsCdf) {
  for (double xi : {-0.4, 0.0, 0.3}) {
    for (double p : {0.01, 0.5, 0.99}) {
      const double y = gpd_quantile(p, xi, 2.0);
      EXPECT_NEAR(gpd_cdf(y, Tail::right, xi, 2.0), p, 1e-12);
    }
  }
}

TEST(Gpd, PdfIntegratesToCdf) {
  const double xi = 0.22, s = 3.7e-3, y = 0.01;
  auto f = [&](double m) { return gpd_pdf(m, Tail::right, xi, s); };
  const double I = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, y, 15, 1e-13);
  EXPECT_NEAR(I, gpd_cdf(y, Tail::right, xi, s), 1e-10);
}

TEST(ConditionalScale, Examples) {
  EXPECT_DOUBLE_EQ(conditional_scale(0.3, 0.3, 2.0, 5.0), 2.0);
  EXPECT_DOUBLE_EQ(conditional_scale(0.9, 0.3, 2.0, 0.0), 2.0);
  EXPECT_NEAR(conditional_scale(0.1 + 7.7e-3, 7.7e-3, 3.7e-3, 3.2e-2), 6.9e-3, 1e-12);
  EXPECT_THROW(conditional_scale(0.1, 0.2, 1.0, 1.0), std::domain_error);
}

TEST(TailWeight, Logistic) {
  EXPECT_DOUBLE_EQ(tail_weight(0.0), 0.5);
  for (double w : {0.1, 1.0, 10.0}) {
    EXPECT_NEAR(tail_weight(w) + tail_weight(-w), 1.0, 1e-15);
    EXPECT_NEAR(tail_share(Tail::left, w) / tail_share(Tail::right, w), std::exp(-w), 1e-12);
  }
  EXPECT_GT(tail_weight(800.0), 0.0);
  EXPECT_LT(tail_weight(-800.0), 1e-300);
}

TEST(TailWeight, SimulatedSplitMatchesOdds) {
  HawkesParams p = oracle::sp_common();
  p.w = 0.3;
  SimConfig cfg;
  cfg.T = 100000;
  cfg.seed = 5;
  const auto ex = simulate_hawkes(p, cfg);
  const TailPair n = ex.count(0, ex.T);
  const double N = n.left + n.right;
  const double phat = n.left / N, p0 = tail_share(Tail::left, 0.3);
  const double se = std::sqrt(p0 * (1.0 - p0) / N);
  EXPECT_LE(std::abs(phat - p0), 3.0 * se);
  EXPECT_NEAR(n.left / n.right, std::exp(-0.3), 6.0 * se / (1 - p0) / (1 - p0));
}

TEST(MixtureDensity, SymmetricAndNormalized) {
  const TailPair xi{0.22, -0.032}, sg{3.7e-3, 3.4e-3};
  EXPECT_DOUBLE_EQ(mixture_density(-0.01, 0.0, {0.1, 0.1}, {1.0, 1.0}),
                   mixture_density(0.01, 0.0, {0.1, 0.1}, {1.0, 1.0}));
  using boost::math::quadrature::exp_sinh;
  exp_sinh<double> integ;
  const double left = integ.integrate([&](double y) { return mixture_density(-y, 0.0, xi, sg); });
  const double support = sg.right / 0.032;
  const double right = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      [&](double y) { return y <= 0.0 ? 0.0 : mixture_density(y, 0.0, xi, sg); }, 0.0, support, 25, 1e-14);
  EXPECT_NEAR(left + right, 1.0, 1e-8);
  EXPECT_THROW(mixture_density(0.0, 0.0, xi, sg), std::domain_error);
  EXPECT_LT(mixture_density(-0.001, 40.0, xi, sg), 1e-10);
}

TEST(SpectralRadius, Cases) {
  EXPECT_DOUBLE_EQ(spectral_radius({{{0.3, 0.0}, {0.0, 0.7}}}), 0.7);
  EXPECT_DOUBLE_EQ(spectral_radius({{{0.0, 0.0}, {0.0, 0.0}}}), 0.0);
  // brute force: power iteration on the nonnegative matrix
  const Branching g{{{0.58, 0.22}, {0.60, 0.28}}};
  double v0 = 1.0, v1 = 1.0, r = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double a = g[0][0] * v0 + g[0][1] * v1, b = g[1][0] * v0 + g[1][1] * v1;
    r = std::hypot(a, b) / std::hypot(v0, v1);
    v0 = a;
    v1 = b;
  }
  EXPECT_NEAR(spectral_radius(g), r, 1e-12);
  EXPECT_NEAR(spectral_radius(g), 0.823, 5e-4);
}

TEST(HawkesParams, DimensionsAndLayout) {
  EXPECT_EQ(param_specs(ModelKind::bivariate).size(), 16u);
  EXPECT_EQ(param_specs(ModelKind::bivariate_decoupled).size(), 14u);
  EXPECT_EQ(param_specs(ModelKind::common).size(), 13u);
  EXPECT_EQ(param_specs(ModelKind::common, true).size(), 14u);
  EXPECT_EQ(param_specs(ModelKind::common_symmetric).size(), 7u);
  for (ModelKind k : kAllKinds) EXPECT_EQ(static_cast<int>(param_specs(k).size()), HawkesParams::dimension(k));
}

TEST(HawkesParams, ValidationErrors) {
  HawkesParams p = oracle::sp_common();
  EXPECT_NO_THROW(p.validate());
  p.gamma_common = {1.5, 0.6};
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = oracle::sp_bivariate();
  p.kind = ModelKind::bivariate_decoupled;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = oracle::sp_symmetric();
  p.beta.right *= 2.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = oracle::sp_common();
  p.eta.left = -1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(HawkesParams, JsonRoundTrip) {
  for (const HawkesParams& p : {oracle::sp_common(), oracle::sp_bivariate(), oracle::sp_symmetric()}) {
    const auto j = nlohmann::json::parse(to_json(p).dump());
    const HawkesParams q = params_from_json(j);
    EXPECT_EQ(to_json(p).dump(), to_json(q).dump());
  }
  EXPECT_THROW(parse_kind("trivariate"), std::invalid_argument);
  EXPECT_EQ(parse_kind("ci-s"), ModelKind::common_symmetric);
}

TEST(EvolveIntensity, BackgroundOnly) {
  const HawkesParams p = oracle::sp_bivariate();
  ExceedanceSeries ex{-1, 1, {}, 100, 100};
  const auto path = evolve_intensity(p, ex);
  ASSERT_EQ(path.size(), 101u);
  for (std::size_t t = 0; t < path.size(); ++t) {
    EXPECT_DOUBLE_EQ(path.lambda_left[t], p.mu.left);
    EXPECT_DOUBLE_EQ(path.lambda_right[t], p.mu.right);
  }
}

TEST(EvolveIntensity, UnmarkedJump) {
  HawkesParams p = oracle::sp_bivariate();
  p.alpha = {0.0, 0.0};
  HawkesRecursion rec(p);
  rec.advance(7.0);
  const TailPair before = rec.lambda();
  rec.absorb(Tail::left, 0.004);
  const TailPair after = rec.lambda();
  EXPECT_NEAR(after.left - before.left, p.gamma[0][0] * p.beta.left, 1e-15);
  EXPECT_NEAR(after.right - before.right, p.gamma[1][0] * p.beta.left, 1e-15);
}

TEST(EvolveIntensity, DecayIsExact) {
  const HawkesParams p = oracle::sp_common();
  for (double d : {0.5, 5.0, 50.0}) {
    HawkesRecursion rec(p);
    rec.advance(3.0);
    rec.absorb(Tail::left, 0.01);
    const double c0 = rec.chi().left;
    rec.advance(3.0 + d);
    EXPECT_DOUBLE_EQ(rec.chi().left, c0 * std::exp(-p.beta.left * d));
  }
}

TEST(EvolveIntensity, MatchesKernelSum) {
  std::mt19937_64 rng(2024);
  for (ModelKind kind : kAllKinds) {
    const HawkesParams p = oracle::random_params(kind, rng);
    const auto ev = oracle::random_events(20, 300, rng);
    const oracle::KernelSum ks(p, ev);
    std::vector<double> probes;
    std::uniform_real_distribution<double> U(0.0, 320.0);
    for (int i = 0; i < 1000; ++i) probes.push_back(U(rng));
    std::sort(probes.begin(), probes.end());
    const auto got = intensity_at(p, ev, probes);
    for (std::size_t i = 0; i < probes.size(); ++i) {
      const TailPair want = ks.lambda(probes[i]);
      for (Tail t : kTails) EXPECT_LE(std::abs(got[i][t] - want[t]) / want[t], 1e-10);
    }
  }
}

TEST(EvolveIntensity, TailAdditivity) {
  std::mt19937_64 rng(3);
  const HawkesParams p = oracle::random_params(ModelKind::bivariate, rng);
  ExceedanceSeries ex{-1, 1, oracle::random_events(40, 500, rng), 500, 500};
  const auto path = evolve_intensity(p, ex);
  for (std::size_t t = 0; t < path.size(); ++t) {
    EXPECT_NEAR(path.lambda_left[t] + path.lambda_right[t], path.lambda_total[t], 1e-14 * path.lambda_total[t]);
    EXPECT_GE(path.lambda_left[t], p.mu.left);
    EXPECT_GE(path.lambda_right[t], p.mu.right);
  }
}

TEST(EvolveIntensity, RejectsUnsortedAndSupercritical) {
  HawkesParams p = oracle::sp_common();
  ExceedanceSeries ex{-1, 1, {{5, Tail::left, -0.01}, {3, Tail::right, 0.01}}, 10, 10};
  EXPECT_THROW(evolve_intensity(p, ex), std::invalid_argument);
  ex.events = {};
  p.gamma_common = {2.0, 2.0};
  EXPECT_THROW(evolve_intensity(p, ex), std::invalid_argument);
}

TEST(SymmetricKind, EqualsFoldedSingleTail) {
  // folded series |x - c| with threshold (u_right - u_left) / 2, all events right-tail
  const double ul = -0.01840, ur = 0.01872;
  EXPECT_NEAR((ur - ul) / 2.0, 0.01856, 1e-12);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> N(0.0, 0.01);
  ReturnSeries r;
  for (int i = 0; i < 3000; ++i) r.x.push_back(N(rng));
  r.train_end = r.x.size();
  const auto ex = extract_exceedances(r, ul, ur);
  const HawkesParams p = oracle::sp_symmetric();

  const double c = 0.5 * (ul + ur), u = 0.5 * (ur - ul);
  ReturnSeries folded;
  for (double v : r.x) folded.x.push_back(std::abs(v - c));
  folded.train_end = folded.x.size();
  const auto fx = extract_exceedances(folded, -1e9, u);
  ASSERT_EQ(fx.events.size(), ex.events.size());
  for (std::size_t k = 0; k < ex.events.size(); ++k) {
    EXPECT_EQ(fx.events[k].t, ex.events[k].t);
    EXPECT_NEAR(std::abs(fx.events[k].m), std::abs(ex.events[k].m), 1e-15);
  }
  const double l2 = log_likelihood(p, ex).total;
  const double l1 = log_likelihood(p, fx).total;
  EXPECT_NEAR(l2, l1, 1e-9 * std::abs(l1));
}
