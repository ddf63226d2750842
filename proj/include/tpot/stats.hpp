#pragma once

// Distribution functions used by the tests and diagnostics.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/erf.hpp>

namespace tpot::stats {

/// Kolmogorov survival function Q(x) = P(K > x) = 2 sum (-1)^{k-1} exp(-2 k^2 x^2).
inline double kolmogorov_q(double x) {
  if (!(x > 0.0)) return 1.0;
  if (x < 0.27) return 1.0;  // Q > 1 - 1e-15 here
  if (x < 1.0) {
    // theta-function form converges fast for small x
    const double pi = 3.14159265358979323846;
    const double t = pi * pi / (8.0 * x * x);
    double s = 0.0;
    for (int k = 1; k <= 15; k += 2) s += std::exp(-static_cast<double>(k * k) * t);
    return 1.0 - std::sqrt(2.0 * pi) / x * s;
  }
  double s = 0.0, sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += sign * term;
    if (term < 1e-17) break;
    sign = -sign;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

inline double chi2_sf(double x, double dof) {
  if (!(dof > 0.0)) throw std::invalid_argument("chi-squared needs dof > 0");
  if (!(x > 0.0)) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared_distribution<double>(dof), x));
}

inline double normal_cdf(double x) {
  return boost::math::cdf(boost::math::normal_distribution<double>(), x);
}

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal quantile needs p in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

/// Unit-variance Student-t: scale sqrt((nu - 2) / nu).
inline double std_t_cdf(double z, double nu) {
  const double s = std::sqrt((nu - 2.0) / nu);
  return boost::math::cdf(boost::math::students_t_distribution<double>(nu), z / s);
}

inline double std_t_log_pdf(double z, double nu) {
  const double s = std::sqrt((nu - 2.0) / nu);
  const double y = z / s;
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * M_PI) -
         0.5 * (nu + 1.0) * std::log1p(y * y / nu) - std::log(s);
}

inline double erf_inv(double x) { return boost::math::erf_inv(x); }

}  // namespace tpot::stats
