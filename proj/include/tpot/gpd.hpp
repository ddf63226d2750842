#pragma once

// Generalized Pareto excess distribution, the magnitude impact function and
// the logistic tail weight shared by all model kinds.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "tpot/tail.hpp"

namespace tpot {

namespace detail {

inline constexpr double kXiZero = 1e-14;

// Cumulative hazard of the GPD at excess y >= 0, i.e. -ln(1 - F(y)).
// Returns +inf outside the support.
inline double gpd_hazard(double y, double xi, double sigma) {
  const double z = y / sigma;
  if (std::abs(xi) < kXiZero) return z;
  const double arg = xi * z;
  if (arg <= -1.0) return std::numeric_limits<double>::infinity();
  return std::log1p(arg) / xi;
}

// ln f(y); -inf outside the support.
inline double gpd_log_density(double y, double xi, double sigma) {
  const double z = y / sigma;
  if (std::abs(xi) < kXiZero) return -std::log(sigma) - z;
  const double arg = xi * z;
  if (arg <= -1.0) return -std::numeric_limits<double>::infinity();
  return -std::log(sigma) - (1.0 / xi + 1.0) * std::log1p(arg);
}

inline void check_excess(double m, Tail tail, double xi, double sigma) {
  if (!(sigma > 0.0)) throw std::domain_error("GPD scale must be positive");
  if (m * sign(tail) < 0.0) {
    throw std::domain_error("excess " + std::to_string(m) + " has the wrong sign for the " +
                            std::string(to_string(tail)) + " tail");
  }
  if (xi < 0.0 && std::abs(m) >= sigma / -xi) {
    throw std::domain_error("excess " + std::to_string(m) + " lies outside the GPD support");
  }
}

}  // namespace detail

/// F(m) for a signed excess m on the given tail; the left tail uses |m|.
inline double gpd_cdf(double m, Tail tail, double xi, double sigma) {
  detail::check_excess(m, tail, xi, sigma);
  return -std::expm1(-detail::gpd_hazard(std::abs(m), xi, sigma));
}

inline double gpd_pdf(double m, Tail tail, double xi, double sigma) {
  detail::check_excess(m, tail, xi, sigma);
  return std::exp(detail::gpd_log_density(std::abs(m), xi, sigma));
}

/// Excess magnitude |m| at cumulative probability p in [0, 1).
inline double gpd_quantile(double p, double xi, double sigma) {
  if (!(p >= 0.0 && p < 1.0)) throw std::domain_error("GPD quantile needs p in [0, 1)");
  const double h = -std::log1p(-p);
  if (std::abs(xi) < detail::kXiZero) return sigma * h;
  return sigma * std::expm1(xi * h) / xi;
}

/// Residual excess magnitude: unit exponential when m follows the GPD.
inline double residual_magnitude(double m, Tail tail, double xi, double sigma) {
  detail::check_excess(m, tail, xi, sigma);
  return detail::gpd_hazard(std::abs(m), xi, sigma);
}

/// Impact of an event whose excess sits at conditional quantile F.
/// E[kappa] = 1 when F is uniform.
inline double impact_kappa(double F, double alpha) {
  if (!(F >= 0.0 && F < 1.0)) {
    throw std::domain_error("impact_kappa needs F in [0, 1); got " + std::to_string(F));
  }
  if (alpha < 0.0) throw std::domain_error("mark parameter alpha must be non-negative");
  return (1.0 - alpha * std::log1p(-F)) / (1.0 + alpha);
}

/// Same as impact_kappa, written in terms of the hazard -ln(1 - F).
inline double impact_from_hazard(double hazard, double alpha) {
  return (1.0 + alpha * hazard) / (1.0 + alpha);
}

/// sigma(t) = varsigma + eta * (lambda(t) - mu).
inline double conditional_scale(double lambda_now, double mu_background, double varsigma,
                                double eta) {
  if (lambda_now < mu_background) {
    throw std::domain_error("intensity below its background level");
  }
  return varsigma + eta * (lambda_now - mu_background);
}

/// Logistic weight S(w) = 1 / (1 + exp(-w)).
inline double tail_weight(double w) {
  if (w >= 0.0) return 1.0 / (1.0 + std::exp(-w));
  const double e = std::exp(w);
  return e / (1.0 + e);
}

/// Probability that a common-process event belongs to `tail`: S(-w) left, S(+w) right.
inline double tail_share(Tail tail, double w) { return tail_weight(sign(tail) * w); }

/// Two-tailed mixture density: S(-w) f_left(m) for m < 0, S(+w) f_right(m) for m > 0.
inline double mixture_density(double m, double w, const TailPair& xi, const TailPair& sigma) {
  if (m == 0.0) throw std::domain_error("mixture density is undefined at m = 0");
  const Tail tail = m < 0.0 ? Tail::left : Tail::right;
  return tail_share(tail, w) * gpd_pdf(m, tail, xi[tail], sigma[tail]);
}

}  // namespace tpot
