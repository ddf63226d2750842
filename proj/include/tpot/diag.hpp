#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tpot/intensity.hpp"
#include "tpot/stats.hpp"

namespace tpot {

/// Residual processes of an exceedance history under a parameter vector.
/// Interarrivals are taken between consecutive events of the same process.
struct ResidualSeries {
  std::vector<std::size_t> t;
  std::vector<Tail> tail;
  std::vector<double> tau_total;  // residual time of N<-> at each event
  std::vector<double> tau_own;    // residual time of the event's own tail process
  std::vector<double> sigma;      // conditional GPD scale at arrival
  std::vector<double> resid_m;    // residual excess magnitudes

  std::vector<double> dtau_total;
  PerTail<std::vector<double>> dtau;             // per tail process
  PerTail<std::vector<double>> dtau_total_same;  // d tau<-> between same-tail events
  std::vector<double> z_total;
  PerTail<std::vector<double>> z;

  std::size_t size() const { return t.size(); }
};

struct TestReport {
  std::string name;
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  bool reject_05 = false;
  bool reject_01 = false;
  std::optional<double> band_95;  // KS only
  std::optional<double> band_99;
  std::optional<int> dof;         // LR only

  void set_p(double p) {
    p_value = std::clamp(p, 0.0, 1.0);
    reject_05 = p_value < 0.05;
    reject_01 = p_value < 0.01;
  }
};

enum class Reference { exponential, normal, uniform };

inline std::string_view to_string(Reference r) {
  switch (r) {
    case Reference::exponential: return "unit-exponential";
    case Reference::normal: return "unit-normal";
    case Reference::uniform: return "uniform";
  }
  return "?";
}

inline double reference_cdf(Reference r, double x) {
  switch (r) {
    case Reference::exponential: return x <= 0.0 ? 0.0 : -std::expm1(-x);
    case Reference::normal: return stats::normal_cdf(x);
    case Reference::uniform: return std::clamp(x, 0.0, 1.0);
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Residual processes
// ---------------------------------------------------------------------------

/// d tau per process from the cumulative compensators of `path`. Event times
/// must lie on the path grid.
inline ResidualSeries residual_time(const IntensityPath& path, std::span<const Event> events) {
  ResidualSeries r;
  PerTail<std::optional<double>> last_own, last_total_same;
  std::optional<double> last_total;
  for (const Event& e : events) {
    if (e.t >= path.size()) throw std::out_of_range("event at t = " + std::to_string(e.t) + " beyond the path");
    const double tt = path.tau_total[e.t];
    const double to = e.tail == Tail::left ? path.tau_left[e.t] : path.tau_right[e.t];
    r.t.push_back(e.t);
    r.tail.push_back(e.tail);
    r.tau_total.push_back(tt);
    r.tau_own.push_back(to);
    r.sigma.push_back(e.tail == Tail::left ? path.sigma_left[e.t] : path.sigma_right[e.t]);
    if (last_total) r.dtau_total.push_back(tt - *last_total);
    if (last_own[e.tail]) {
      r.dtau[e.tail].push_back(to - *last_own[e.tail]);
      r.dtau_total_same[e.tail].push_back(tt - *last_total_same[e.tail]);
    }
    last_total = tt;
    last_own[e.tail] = to;
    last_total_same[e.tail] = tt;
  }
  return r;
}

/// Per-tail interarrivals from d tau<-> between consecutive same-tail events:
/// d tau = d tau<-> -+ w/2 + ln(+-sinh(w/2) + sqrt(sinh^2(w/2) + exp(-d tau<->))).
inline double split_interarrival(double dtau_both, Tail tail, double w) {
  if (!(dtau_both >= 0.0)) throw std::invalid_argument("interarrival must be >= 0");
  if (w == 0.0) return 0.5 * dtau_both;
  const double s = std::sinh(0.5 * w);
  const double pm = -sign(tail);  // upper sign for the left tail
  const double root = std::sqrt(s * s + std::exp(-dtau_both));
  // pm*s + root, rearranged to avoid cancellation when pm*s < 0
  const double inner = pm * s >= 0.0 ? pm * s + root : std::exp(-dtau_both) / (root - pm * s);
  return std::max(0.0, dtau_both - pm * 0.5 * w + std::log(inner));
}

inline std::vector<double> split_interarrivals(std::span<const double> dtau_both, Tail tail, double w) {
  std::vector<double> out;
  out.reserve(dtau_both.size());
  for (double d : dtau_both) out.push_back(split_interarrival(d, tail, w));
  return out;
}

/// E = ln(1 + xi |m| / sigma) / xi (|m| / sigma at xi = 0).
inline std::vector<double> residual_magnitudes(std::span<const Event> events, std::span<const double> sigma,
                                               const TailPair& xi) {
  if (sigma.size() != events.size()) throw std::invalid_argument("one scale per event required");
  std::vector<double> out;
  out.reserve(events.size());
  for (std::size_t k = 0; k < events.size(); ++k) {
    if (!(sigma[k] > 0.0)) throw std::invalid_argument("scale must be > 0");
    out.push_back(residual_magnitude(events[k].m, events[k].tail, xi[events[k].tail], sigma[k]));
  }
  return out;
}

/// z = sqrt(2) erfinv(1 - 2 exp(-d tau)), the unit-normal image of a unit
/// exponential.
inline double normal_transform(double dtau) {
  if (!(dtau >= 0.0)) throw std::invalid_argument("interarrival must be >= 0");
  if (dtau == 0.0) return -std::numeric_limits<double>::infinity();
  const double p = -std::expm1(-dtau);  // 1 - e^-d
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return stats::normal_quantile(p);
}

inline std::vector<double> normal_transform(std::span<const double> dtau) {
  std::vector<double> z;
  z.reserve(dtau.size());
  for (double d : dtau) z.push_back(normal_transform(d));
  return z;
}

/// Full residual analysis of the events in [a, b) (default: all).
inline ResidualSeries residuals(const HawkesParams& p, const ExceedanceSeries& ex, std::size_t a = 0,
                                std::size_t b = std::numeric_limits<std::size_t>::max()) {
  const IntensityPath path = evolve_intensity(p, ex);
  std::vector<Event> ev;
  for (const Event& e : ex.events)
    if (e.t >= a && e.t < b) ev.push_back(e);
  ResidualSeries r = residual_time(path, ev);
  r.resid_m = residual_magnitudes(ev, r.sigma, p.xi);
  r.z_total = normal_transform(r.dtau_total);
  for (Tail t : kTails) r.z[t] = normal_transform(r.dtau[t]);
  return r;
}

// ---------------------------------------------------------------------------
// Tests and criteria
// ---------------------------------------------------------------------------

/// Two-sided one-sample KS test with the asymptotic Kolmogorov p-value.
inline TestReport ks_test(std::span<const double> sample, Reference ref, std::string name = "") {
  if (sample.empty()) throw std::invalid_argument("KS test on an empty sample");
  if (sample.size() < 5) throw std::invalid_argument("KS test needs at least 5 points");
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double F = reference_cdf(ref, s[i]);
    d = std::max({d, (i + 1) / n - F, F - i / n});
  }
  TestReport r;
  r.name = name.empty() ? "KS vs " + std::string(to_string(ref)) : std::move(name);
  r.statistic = d;
  r.n = s.size();
  r.set_p(stats::kolmogorov_q(std::sqrt(n) * d));
  r.band_95 = 1.358 / std::sqrt(n);
  r.band_99 = 1.628 / std::sqrt(n);
  return r;
}

inline double aic(double loglik, int dim) { return 2.0 * dim - 2.0 * loglik; }

inline double bic(double loglik, int dim, double n_obs) {
  if (!(n_obs >= 1.0)) throw std::invalid_argument("BIC needs n_obs >= 1");
  return dim * std::log(n_obs) - 2.0 * loglik;
}

/// Observation count entering the BIC penalty: two tails times the events.
inline double bic_observations(double n_events) { return 2.0 * n_events; }

/// Forecast-period score with frozen parameters: the plain deviance.
inline double forecast_aic(double loglik_forecast) { return -2.0 * loglik_forecast; }

/// Forecast-period BIC: the penalty grows only by the increment of the log
/// observation count from the training to the full sample.
inline double forecast_bic(double loglik_forecast, int dim, double n_obs_train, double n_obs_total) {
  if (!(n_obs_train >= 1.0) || n_obs_total < n_obs_train)
    throw std::invalid_argument("forecast BIC needs 1 <= n_train <= n_total");
  return dim * (std::log(n_obs_total) - std::log(n_obs_train)) - 2.0 * loglik_forecast;
}

inline TestReport lr_test(double loglik0, double loglik1, int dof, std::string name = "LR") {
  if (dof < 1) throw std::invalid_argument("LR test needs dof >= 1");
  TestReport r;
  r.name = std::move(name);
  r.statistic = std::max(0.0, 2.0 * (loglik1 - loglik0));
  r.n = 0;
  r.dof = dof;
  r.set_p(loglik1 <= loglik0 ? 1.0 : stats::chi2_sf(r.statistic, dof));
  return r;
}

// ---------------------------------------------------------------------------
// Autocorrelation
// ---------------------------------------------------------------------------

inline constexpr double kZ95 = 1.959963984540054;
inline constexpr double kZ99 = 2.5758293035489004;

struct Acf {
  std::vector<double> values;  // lags 0..max_lag
  std::size_t n = 0;
  double band_95 = 0.0;
  double band_99 = 0.0;
};

inline Acf acf(std::span<const double> x, std::size_t max_lag) {
  if (x.size() <= max_lag) throw std::invalid_argument("series shorter than max_lag + 1");
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double c0 = 0.0;
  for (double v : x) c0 += (v - mean) * (v - mean);
  if (!(c0 > 0.0)) throw std::domain_error("zero-variance series");
  Acf out;
  out.n = x.size();
  for (std::size_t h = 0; h <= max_lag; ++h) {
    double c = 0.0;
    for (std::size_t i = h; i < x.size(); ++i) c += (x[i] - mean) * (x[i - h] - mean);
    out.values.push_back(h == 0 ? 1.0 : c / c0);
  }
  out.band_95 = kZ95 / std::sqrt(n);
  out.band_99 = kZ99 / std::sqrt(n);
  return out;
}

struct RollingAcf {
  std::size_t window = 50;
  std::vector<std::optional<double>> values;  // one per window, indexed by its last point; empty: zero variance
  double band_95 = 0.0;
  double band_99 = 0.0;
};

inline RollingAcf rolling_acf1(std::span<const double> x, std::size_t window = 50) {
  if (window < 3) throw std::invalid_argument("rolling window must be >= 3");
  if (x.size() < window) throw std::invalid_argument("series shorter than the rolling window");
  RollingAcf out;
  out.window = window;
  out.band_95 = kZ95 / std::sqrt(static_cast<double>(window));
  out.band_99 = kZ99 / std::sqrt(static_cast<double>(window));
  for (std::size_t end = window; end <= x.size(); ++end) {
    const auto w = x.subspan(end - window, window);
    const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(window);
    double c0 = 0.0, c1 = 0.0;
    for (std::size_t i = 0; i < window; ++i) {
      c0 += (w[i] - mean) * (w[i] - mean);
      if (i > 0) c1 += (w[i] - mean) * (w[i - 1] - mean);
    }
    if (c0 > 0.0) out.values.emplace_back(c1 / c0);
    else out.values.emplace_back(std::nullopt);
  }
  return out;
}

/// Share of interarrivals below `bin` against the unit-exponential mass
/// 1 - exp(-bin); negative when the sample is depleted near zero.
inline double first_bin_excess(std::span<const double> dtau, double bin) {
  if (dtau.empty()) throw std::invalid_argument("empty sample");
  const auto below = std::count_if(dtau.begin(), dtau.end(), [&](double d) { return d < bin; });
  return static_cast<double>(below) / static_cast<double>(dtau.size()) + std::expm1(-bin);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const TestReport& r) {
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["statistic"] = r.statistic;
  j["p_value"] = r.p_value;
  j["n"] = r.n;
  j["reject_05"] = r.reject_05;
  j["reject_01"] = r.reject_01;
  if (r.band_95) j["band_95"] = *r.band_95;
  if (r.band_99) j["band_99"] = *r.band_99;
  if (r.dof) j["dof"] = *r.dof;
  return j;
}

/// One row per event.
inline csv::Writer residuals_csv(const ResidualSeries& r) {
  csv::Writer w({"t", "tail", "tau_total", "tau_own", "count_total", "count_own", "dtau_total",
                 "dtau_own", "z_total", "z_own", "sigma", "resid_m"});
  PerTail<std::size_t> own{0, 0};
  for (std::size_t k = 0; k < r.size(); ++k) {
    const Tail tl = r.tail[k];
    const std::size_t i_own = own[tl]++;
    auto opt = [](const std::vector<double>& v, std::size_t i) {
      return i < v.size() ? csv::format_double(v[i]) : std::string();
    };
    w.add({std::to_string(r.t[k]), std::string(to_string(tl)), csv::format_double(r.tau_total[k]),
           csv::format_double(r.tau_own[k]), std::to_string(k + 1), std::to_string(i_own + 1),
           k > 0 ? opt(r.dtau_total, k - 1) : std::string(), i_own > 0 ? opt(r.dtau[tl], i_own - 1) : std::string(),
           k > 0 ? opt(r.z_total, k - 1) : std::string(), i_own > 0 ? opt(r.z[tl], i_own - 1) : std::string(),
           csv::format_double(r.sigma[k]), k < r.resid_m.size() ? csv::format_double(r.resid_m[k]) : std::string()});
  }
  return w;
}

inline csv::Writer acf_csv(const Acf& a) {
  csv::Writer w({"lag", "acf", "band_95", "band_99"});
  for (std::size_t h = 0; h < a.values.size(); ++h)
    w.add({std::to_string(h), csv::format_double(a.values[h]), csv::format_double(a.band_95),
           csv::format_double(a.band_99)});
  return w;
}

inline csv::Writer rolling_acf_csv(const RollingAcf& a) {
  csv::Writer w({"end", "acf1", "band_95", "band_99", "gap"});
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const auto& v = a.values[i];
    w.add({std::to_string(i + a.window - 1), v ? csv::format_double(*v) : std::string(),
           csv::format_double(a.band_95), csv::format_double(a.band_99), v ? "0" : "1"});
  }
  return w;
}

}  // namespace tpot
