#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tpot/fit.hpp"
#include "tpot/ingest.hpp"
#include "tpot/optimize.hpp"
#include "tpot/stats.hpp"

namespace tpot {

enum class ErrorDist { normal, student_t };

inline std::string_view to_string(ErrorDist d) { return d == ErrorDist::normal ? "normal" : "student-t"; }

inline ErrorDist parse_error_dist(std::string_view s) {
  if (s == "normal" || s == "N" || s == "n") return ErrorDist::normal;
  if (s == "student-t" || s == "t" || s == "student_t") return ErrorDist::student_t;
  throw std::invalid_argument("unknown error distribution '" + std::string(s) + "'");
}

/// GJR-GARCH(1,o,1): x_t = mu + sigma_t eps_t,
/// sigma_t^2 = omega + (alpha1 + gamma1 I_{t-1}) (x_{t-1} - mu)^2 + beta1 sigma_{t-1}^2,
/// I = 1 iff x - mu < 0.
struct GarchParams {
  double mu = 0.0;
  double omega = 1.0;
  double alpha1 = 0.0;
  double beta1 = 0.0;
  double gamma1 = 0.0;  // 0 when o = 0
  int o = 0;
  ErrorDist dist = ErrorDist::normal;
  double nu = 8.0;      // Student-t only

  double persistence() const { return alpha1 + beta1 + 0.5 * gamma1; }
  double unconditional_variance() const { return omega / (1.0 - persistence()); }

  int dimension() const { return 4 + (o ? 1 : 0) + (dist == ErrorDist::student_t ? 1 : 0); }

  void validate() const {
    auto fail = [](const std::string& w) { throw std::invalid_argument("GarchParams: " + w); };
    if (!std::isfinite(mu)) fail("mu must be finite");
    if (!(omega > 0.0) || !std::isfinite(omega)) fail("omega must be > 0");
    if (!(alpha1 >= 0.0) || !(beta1 >= 0.0) || !(gamma1 >= 0.0)) fail("coefficients must be >= 0");
    if (o != 0 && o != 1) fail("o must be 0 or 1");
    if (o == 0 && gamma1 != 0.0) fail("gamma1 must be 0 when o = 0");
    if (!(persistence() < 1.0)) fail("non-stationary: alpha1 + beta1 + gamma1/2 >= 1");
    if (dist == ErrorDist::student_t && !(nu > 2.0)) fail("Student-t needs nu > 2");
  }
};

/// sigma_0^2 rule: sample variance of the training window, or the model's
/// unconditional variance.
enum class VarianceInit { sample, unconditional };

struct GarchFilter {
  std::vector<double> sigma;
  std::vector<double> z;    // unit-normal PIT residuals
  std::vector<double> u;    // F_eps of the standardized residual
};

namespace detail {

inline double sample_variance(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / n;
}

inline double initial_variance(const GarchParams& g, std::span<const double> train, VarianceInit init) {
  return init == VarianceInit::sample ? sample_variance(train) : g.unconditional_variance();
}

template <class Visit>
bool garch_recursion(const GarchParams& g, std::span<const double> x, double var0, Visit&& visit) {
  double var = var0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (t > 0) {
      const double e = x[t - 1] - g.mu;
      const double lev = e < 0.0 ? g.gamma1 : 0.0;
      var = g.omega + (g.alpha1 + lev) * e * e + g.beta1 * var;
    }
    if (!(var > 0.0) || !std::isfinite(var)) return false;
    visit(t, std::sqrt(var));
  }
  return true;
}

inline double garch_loglik(const GarchParams& g, std::span<const double> x, double var0) {
  double ll = 0.0;
  const double c = -0.5 * std::log(2.0 * M_PI);
  const bool ok = garch_recursion(g, x, var0, [&](std::size_t t, double s) {
    const double z = (x[t] - g.mu) / s;
    ll += (g.dist == ErrorDist::normal ? c - 0.5 * z * z : stats::std_t_log_pdf(z, g.nu)) - std::log(s);
  });
  return ok && std::isfinite(ll) ? ll : -std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Conditional volatility over the full series and the probability-integral
/// residuals z = Phi^-1(F_eps((x - mu) / sigma)).
inline GarchFilter garch_filter(const GarchParams& g, std::span<const double> x,
                                VarianceInit init = VarianceInit::sample, std::size_t train_end = 0) {
  g.validate();
  if (x.empty()) throw std::invalid_argument("empty return series");
  const std::size_t te = train_end == 0 ? x.size() : std::min(train_end, x.size());
  GarchFilter f;
  f.sigma.reserve(x.size());
  const bool ok = detail::garch_recursion(g, x, detail::initial_variance(g, x.first(te), init),
                                          [&](std::size_t t, double s) {
    const double e = (x[t] - g.mu) / s;
    f.sigma.push_back(s);
    if (g.dist == ErrorDist::normal) {
      f.z.push_back(e);
      f.u.push_back(stats::normal_cdf(e));
    } else {
      const double u = stats::std_t_cdf(e, g.nu);
      f.u.push_back(u);
      // extreme tails: fall back on the symmetric complement for accuracy
      const double z = u < 0.5 ? stats::normal_quantile(std::max(u, 1e-300))
                               : -stats::normal_quantile(std::max(stats::std_t_cdf(-e, g.nu), 1e-300));
      f.z.push_back(z);
    }
  });
  if (!ok) throw std::domain_error("non-finite GARCH variance recursion");
  return f;
}

struct GarchFitOptions {
  std::size_t train_end = 0;  // 0: whole series
  double scale = 1.0;         // returns are multiplied by this before fitting
  VarianceInit init = VarianceInit::sample;
  int restarts = 4;
  std::uint64_t seed = 1;
  bool compute_se = true;
  opt::Options optimizer{};
};

struct GarchFitResult {
  GarchParams params;               // in units of the scaled series
  std::vector<std::string> names;
  std::vector<double> estimates;
  std::vector<std::optional<double>> se;
  double loglik = -std::numeric_limits<double>::infinity();
  double aic = std::numeric_limits<double>::infinity();
  double scale = 1.0;
  std::size_t n = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  std::string message;
  bool se_singular = false;

  std::optional<double> se_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return se[i];
    return std::nullopt;
  }

  /// Parameters for the unscaled series.
  GarchParams unscaled() const {
    GarchParams g = params;
    g.mu /= scale;
    g.omega /= scale * scale;
    return g;
  }
};

namespace detail {

struct GarchLayout {
  int o;
  ErrorDist dist;
  double sd;
  std::vector<std::string> names;
  std::vector<double> lo, hi;

  GarchLayout(int o_, ErrorDist d, double sd_) : o(o_), dist(d), sd(sd_) {
    // mu/sd, ln omega, alpha1, beta1, [gamma1], [ln nu]
    names = {"mu", "omega", "alpha1", "beta1"};
    lo = {-1.0, std::log(1e-8 * sd * sd), 0.0, 0.0};
    hi = {1.0, std::log(sd * sd), 1.0, 1.0};
    if (o) {
      names.push_back("gamma1");
      lo.push_back(0.0);
      hi.push_back(1.0);
    }
    if (dist == ErrorDist::student_t) {
      names.push_back("nu");
      lo.push_back(std::log(2.05));
      hi.push_back(std::log(200.0));
    }
  }

  GarchParams natural(const std::vector<double>& u) const {
    GarchParams g;
    g.o = o;
    g.dist = dist;
    g.mu = u[0] * sd;
    g.omega = std::exp(u[1]);
    g.alpha1 = u[2];
    g.beta1 = u[3];
    std::size_t k = 4;
    if (o) g.gamma1 = u[k++];
    if (dist == ErrorDist::student_t) g.nu = std::exp(u[k++]);
    return g;
  }

  std::vector<double> internal(const GarchParams& g) const {
    std::vector<double> u{g.mu / sd, std::log(g.omega), g.alpha1, g.beta1};
    if (o) u.push_back(g.gamma1);
    if (dist == ErrorDist::student_t) u.push_back(std::log(g.nu));
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::clamp(u[i], lo[i], hi[i]);
    return u;
  }

  static std::vector<double> values(const GarchParams& g) {
    std::vector<double> v{g.mu, g.omega, g.alpha1, g.beta1};
    if (g.o) v.push_back(g.gamma1);
    if (g.dist == ErrorDist::student_t) v.push_back(g.nu);
    return v;
  }

  GarchParams from_values(const std::vector<double>& v) const {
    GarchParams g;
    g.o = o;
    g.dist = dist;
    g.mu = v[0];
    g.omega = v[1];
    g.alpha1 = v[2];
    g.beta1 = v[3];
    std::size_t k = 4;
    if (o) g.gamma1 = v[k++];
    if (dist == ErrorDist::student_t) g.nu = v[k++];
    return g;
  }
};

}  // namespace detail

/// Conditional maximum likelihood over the training window.
inline GarchFitResult garch_fit(std::span<const double> returns, int o, ErrorDist dist,
                                const GarchFitOptions& opt = {}) {
  if (o != 0 && o != 1) throw std::invalid_argument("o must be 0 or 1");
  const std::size_t te = opt.train_end == 0 ? returns.size() : std::min(opt.train_end, returns.size());
  if (te < 200) throw std::invalid_argument("GARCH fit needs at least 200 training points");
  if (!(opt.scale > 0.0)) throw std::invalid_argument("scale must be > 0");
  std::vector<double> x(returns.begin(), returns.begin() + static_cast<std::ptrdiff_t>(te));
  for (double& v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite return");
    v *= opt.scale;
  }
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double var = detail::sample_variance(x);
  if (*lo_it == *hi_it || !(var > 0.0)) throw std::domain_error("zero-variance return series");
  const double sd = std::sqrt(var);
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  const detail::GarchLayout L(o, dist, sd);

  auto var0_of = [&](const GarchParams& g) {
    return opt.init == VarianceInit::sample ? var : g.unconditional_variance();
  };
  auto objective = [&](const std::vector<double>& u) {
    const GarchParams g = L.natural(u);
    if (!(g.persistence() < 0.9999)) return std::numeric_limits<double>::infinity();
    const double ll = detail::garch_loglik(g, x, var0_of(g));
    return std::isfinite(ll) ? -ll / static_cast<double>(x.size()) : std::numeric_limits<double>::infinity();
  };

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  opt::Result best;
  for (int r = 0; r < std::max(1, opt.restarts); ++r) {
    GarchParams g0;
    g0.o = o;
    g0.dist = dist;
    g0.mu = mean;
    g0.alpha1 = r == 0 ? (o ? 0.04 : 0.08) : 0.01 + 0.15 * U(rng);
    g0.gamma1 = o ? (r == 0 ? 0.08 : 0.15 * U(rng)) : 0.0;
    g0.beta1 = r == 0 ? 0.9 : 0.5 + 0.45 * U(rng);
    if (g0.persistence() >= 0.995) g0.beta1 = 0.995 - g0.alpha1 - 0.5 * g0.gamma1;
    g0.omega = var * (1.0 - g0.persistence());
    g0.nu = r == 0 ? 8.0 : 4.0 + 16.0 * U(rng);
    const auto u0 = L.internal(g0);
    if (!std::isfinite(objective(u0))) continue;
    opt::Result res = opt::minimize_box(objective, u0, L.lo, L.hi, opt.optimizer);
    if (!std::isfinite(best.f) || res.f < best.f) best = std::move(res);
  }
  if (!std::isfinite(best.f)) throw FitError("no feasible GARCH start point");

  GarchFitResult out;
  out.params = L.natural(best.x);
  out.names = L.names;
  out.estimates = detail::GarchLayout::values(out.params);
  out.loglik = detail::garch_loglik(out.params, x, var0_of(out.params));
  out.aic = 2.0 * out.params.dimension() - 2.0 * out.loglik;
  out.scale = opt.scale;
  out.n = x.size();
  out.converged = best.converged;
  out.gradient_norm = best.pg_norm;
  out.message = best.message;
  out.se.assign(out.names.size(), std::nullopt);
  if (opt.compute_se) {
    const auto v = out.estimates;
    std::vector<double> h(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) h[i] = 1e-4 * std::max(std::abs(v[i]), i == 0 ? 1e-2 * sd : 1e-3);
    h[1] = 1e-4 * v[1];
    // keep the stencil well inside the stationarity region
    const double gap = 1.0 - out.params.persistence();
    for (std::size_t i = 2; i < 4 + static_cast<std::size_t>(o); ++i) h[i] = std::min(h[i], 1e-2 * gap);
    auto ll = [&](const std::vector<double>& a) {
      const GarchParams g = L.from_values(a);
      if (!(g.omega > 0.0) || g.persistence() >= 1.0 || (dist == ErrorDist::student_t && g.nu <= 2.0))
        return -std::numeric_limits<double>::infinity();
      return detail::garch_loglik(g, x, var0_of(g));
    };
    const Eigen::MatrixXd H = opt::hessian(ll, v, h);
    if (H.allFinite()) {
      std::vector<double> scale(h.size());
      for (std::size_t i = 0; i < h.size(); ++i) scale[i] = 1e4 * h[i];
      const auto cov = opt::inverse_information(H, scale);
      out.se = opt::standard_errors_from(cov);
      out.se_singular = cov.singular;
    }
  }
  return out;
}

struct ResidualHawkesFit {
  FitResult fit;
  ExceedanceSeries exceedances;
  std::vector<double> z;
};

/// Bivariate Hawkes fit with eta = alpha = 0 on the GARCH residuals z, with
/// thresholds at the symmetric training quantiles of z.
inline ResidualHawkesFit hawkes_on_residuals(std::span<const double> returns, const GarchParams& g,
                                             FitOptions hawkes = {}, double q = 0.025,
                                             std::size_t train_end = 0,
                                             VarianceInit init = VarianceInit::sample) {
  const std::size_t te = train_end == 0 ? returns.size() : train_end;
  ReturnSeries zs;
  zs.x = garch_filter(g, returns, init, te).z;
  zs.train_end = te;
  zs.validate();
  const auto [ul, ur] = select_thresholds(zs, q);
  ResidualHawkesFit out;
  out.exceedances = extract_exceedances(zs, ul, ur);
  for (const char* name : {"eta_left", "eta_right", "alpha_left", "alpha_right"}) hawkes.fixed[name] = 0.0;
  out.fit = fit_ml(ModelKind::bivariate, out.exceedances, hawkes);
  out.z = std::move(zs.x);
  return out;
}

inline nlohmann::ordered_json to_json(const GarchParams& g) {
  nlohmann::ordered_json j;
  j["mu"] = g.mu;
  j["omega"] = g.omega;
  j["alpha1"] = g.alpha1;
  j["beta1"] = g.beta1;
  j["gamma1"] = g.gamma1;
  j["o"] = g.o;
  j["dist"] = std::string(to_string(g.dist));
  if (g.dist == ErrorDist::student_t) j["nu"] = g.nu;
  return j;
}

inline GarchParams garch_params_from_json(const nlohmann::json& j) {
  GarchParams g;
  g.mu = j.at("mu").get<double>();
  g.omega = j.at("omega").get<double>();
  g.alpha1 = j.at("alpha1").get<double>();
  g.beta1 = j.at("beta1").get<double>();
  g.gamma1 = j.value("gamma1", 0.0);
  g.o = j.value("o", g.gamma1 > 0.0 ? 1 : 0);
  g.dist = parse_error_dist(j.value("dist", std::string("normal")));
  if (g.dist == ErrorDist::student_t) g.nu = j.at("nu").get<double>();
  g.validate();
  return g;
}

inline nlohmann::ordered_json to_json(const GarchFitResult& f) {
  nlohmann::ordered_json j;
  j["params"] = to_json(f.params);
  nlohmann::ordered_json se = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < f.names.size(); ++i) {
    if (f.se[i]) se[f.names[i]] = *f.se[i];
    else se[f.names[i]] = nullptr;
  }
  j["se"] = std::move(se);
  j["loglik"] = f.loglik;
  j["aic"] = f.aic;
  j["scale"] = f.scale;
  j["n"] = f.n;
  j["converged"] = f.converged;
  j["gradient_norm"] = f.gradient_norm;
  return j;
}

}  // namespace tpot
