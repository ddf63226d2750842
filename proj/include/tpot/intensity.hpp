#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "tpot/gpd.hpp"
#include "tpot/ingest.hpp"
#include "tpot/params.hpp"

namespace tpot {

/// Markov excitation state: time and the per-tail endogenous excitement chi.
struct IntensityState {
  double t = 0.0;
  TailPair chi{};
};

/// What happened to the state when an event was absorbed.
struct Impact {
  double sigma;   // conditional GPD scale from the pre-jump intensity
  double hazard;  // -ln(1 - F(|m|)), the residual magnitude
  double kappa;
};

/// Exact exponential-kernel recursion for one parameter vector. Between events
/// chi decays as exp(-beta dt) in closed form; at an event the pre-jump
/// (left-limit) intensity sets the GPD scale, then chi jumps by beta * kappa.
class HawkesRecursion {
 public:
  explicit HawkesRecursion(const HawkesParams& p, IntensityState start = {})
      : p_(p), state_(start) {
    share_ = {tail_share(Tail::left, p.w), tail_share(Tail::right, p.w)};
  }

  const IntensityState& state() const { return state_; }
  double time() const { return state_.t; }
  const TailPair& chi() const { return state_.chi; }

  /// Total two-tailed intensity (lambda_left + lambda_right, or lambda_<->).
  double lambda_total() const {
    if (is_common(p_.kind)) {
      return p_.mu_common + p_.gamma_common.left * state_.chi.left +
             p_.gamma_common.right * state_.chi.right;
    }
    const TailPair l = lambda();
    return l.left + l.right;
  }

  /// Per-tail intensities; for common kinds the reporting split S(-+w) lambda_<->.
  TailPair lambda() const {
    if (is_common(p_.kind)) {
      const double total = lambda_total();
      return {share_.left * total, share_.right * total};
    }
    const auto& g = p_.gamma;
    const auto& c = state_.chi;
    return {p_.mu.left + g[0][0] * c.left + g[0][1] * c.right,
            p_.mu.right + g[1][0] * c.left + g[1][1] * c.right};
  }

  /// lambda - mu entering the conditional scale of `tail`.
  double excess_intensity(Tail tail) const {
    const auto& c = state_.chi;
    switch (p_.kind) {
      case ModelKind::common:
        return share_[tail] * (p_.gamma_common.left * c.left + p_.gamma_common.right * c.right);
      case ModelKind::common_symmetric:
        return p_.gamma_common.left * c.left + p_.gamma_common.right * c.right;
      default: {
        const auto& row = p_.gamma[index(tail)];
        return row[0] * c.left + row[1] * c.right;
      }
    }
  }

  double sigma(Tail tail) const {
    return p_.varsigma[tail] + p_.eta[tail] * excess_intensity(tail);
  }

  /// Integral of each chi over the next dt, without advancing.
  TailPair chi_integral(double dt) const {
    TailPair out{};
    for (Tail t : kTails) out[t] = -state_.chi[t] * std::expm1(-p_.beta[t] * dt) / p_.beta[t];
    return out;
  }

  /// Per-tail compensator over the next dt (common kinds: split by tail share).
  TailPair compensator(double dt) const {
    const TailPair I = chi_integral(dt);
    if (is_common(p_.kind)) {
      const double total = p_.mu_common * dt + p_.gamma_common.left * I.left +
                           p_.gamma_common.right * I.right;
      return {share_.left * total, share_.right * total};
    }
    const auto& g = p_.gamma;
    return {p_.mu.left * dt + g[0][0] * I.left + g[0][1] * I.right,
            p_.mu.right * dt + g[1][0] * I.left + g[1][1] * I.right};
  }

  /// Moves to time t >= time() and returns the per-tail compensator increment.
  TailPair advance(double t) {
    const double dt = t - state_.t;
    if (dt < 0.0) throw std::invalid_argument("events are not sorted in time");
    if (dt == 0.0) return {};
    const TailPair inc = compensator(dt);
    for (Tail tl : kTails) state_.chi[tl] *= std::exp(-p_.beta[tl] * dt);
    state_.t = t;
    return inc;
  }

  /// Applies an event of excess |m| on `tail` at the current time. Returns
  /// hazard = +inf (and leaves chi untouched) when |m| is outside the support.
  Impact absorb(Tail tail, double abs_m) {
    const double s = sigma(tail);
    const double h = detail::gpd_hazard(abs_m, p_.xi[tail], s);
    if (!std::isfinite(h)) return {s, h, std::numeric_limits<double>::infinity()};
    const double k = impact_from_hazard(h, p_.alpha[tail]);
    state_.chi[tail] += p_.beta[tail] * k;
    return {s, h, k};
  }

  const HawkesParams& params() const { return p_; }
  double share(Tail tail) const { return share_[tail]; }

 private:
  HawkesParams p_;
  IntensityState state_;
  TailPair share_{};
};

/// Intensity sampled on the integer grid 0..T. Values are left limits (before
/// any event at that step); tau holds the cumulative compensators from 0.
struct IntensityPath {
  std::vector<double> lambda_left, lambda_right, lambda_total;
  std::vector<double> chi_left, chi_right;
  std::vector<double> tau_left, tau_right, tau_total;
  std::vector<double> sigma_left, sigma_right;

  std::size_t size() const { return lambda_total.size(); }
};

namespace detail {

inline void check_sorted(std::span<const Event> events) {
  for (std::size_t k = 1; k < events.size(); ++k)
    if (events[k].t < events[k - 1].t) throw std::invalid_argument("events are not sorted in time");
}

inline void absorb_checked(HawkesRecursion& rec, const Event& e) {
  const Impact imp = rec.absorb(e.tail, std::abs(e.m));
  if (!std::isfinite(imp.hazard))
    throw std::domain_error("excess at t = " + std::to_string(e.t) + " outside the GPD support");
}

}  // namespace detail

inline IntensityPath evolve_intensity(const HawkesParams& p, const ExceedanceSeries& ex) {
  p.validate();
  detail::check_sorted(ex.events);
  IntensityPath path;
  const std::size_t n = ex.T + 1;
  for (auto* v : {&path.lambda_left, &path.lambda_right, &path.lambda_total, &path.chi_left,
                  &path.chi_right, &path.tau_left, &path.tau_right, &path.tau_total,
                  &path.sigma_left, &path.sigma_right})
    v->reserve(n);

  HawkesRecursion rec(p);
  TailPair tau{};
  std::size_t k = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const TailPair inc = rec.advance(static_cast<double>(t));
    tau.left += inc.left;
    tau.right += inc.right;
    const TailPair lam = rec.lambda();
    path.lambda_left.push_back(lam.left);
    path.lambda_right.push_back(lam.right);
    path.lambda_total.push_back(rec.lambda_total());
    path.chi_left.push_back(rec.chi().left);
    path.chi_right.push_back(rec.chi().right);
    path.tau_left.push_back(tau.left);
    path.tau_right.push_back(tau.right);
    path.tau_total.push_back(tau.left + tau.right);
    path.sigma_left.push_back(rec.sigma(Tail::left));
    path.sigma_right.push_back(rec.sigma(Tail::right));
    while (k < ex.events.size() && ex.events[k].t == t) detail::absorb_checked(rec, ex.events[k++]);
  }
  return path;
}

/// Left-limit per-tail intensity at arbitrary sorted probe times.
inline std::vector<TailPair> intensity_at(const HawkesParams& p, std::span<const Event> events,
                                          std::span<const double> probes) {
  detail::check_sorted(events);
  std::vector<TailPair> out;
  out.reserve(probes.size());
  HawkesRecursion rec(p);
  std::size_t k = 0;
  for (double s : probes) {
    while (k < events.size() && static_cast<double>(events[k].t) < s) {
      rec.advance(static_cast<double>(events[k].t));
      detail::absorb_checked(rec, events[k++]);
    }
    rec.advance(s);
    out.push_back(rec.lambda());
  }
  return out;
}

}  // namespace tpot
