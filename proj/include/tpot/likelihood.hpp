#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

#include "tpot/intensity.hpp"

namespace tpot {

struct LogLikelihood {
  double total = 0.0;
  TailPair per_tail{};      // event terms split by tail label, compensator split per process
  TailPair compensator{};   // integral of lambda over the window, per tail
  TailPair n_events{};

  double deviance() const { return -2.0 * total; }
};

namespace detail {

// Log-likelihood over [a, b). The state is propagated through all events
// before a. Returns total = -inf when an excess falls outside the GPD support.
inline LogLikelihood log_likelihood_unchecked(const HawkesParams& p, std::span<const Event> events,
                                              std::size_t a, std::size_t b) {
  LogLikelihood out;
  HawkesRecursion rec(p);
  std::size_t k = 0;
  const std::size_t n = events.size();
  while (k < n && events[k].t < a) {
    rec.advance(static_cast<double>(events[k].t));
    if (!std::isfinite(rec.absorb(events[k].tail, std::abs(events[k].m)).hazard)) {
      out.total = -std::numeric_limits<double>::infinity();
      out.per_tail = {out.total, out.total};
      return out;
    }
    ++k;
  }
  rec.advance(static_cast<double>(a));

  TailPair event_terms{};
  const bool common = is_common(p.kind);
  for (; k < n && events[k].t < b; ++k) {
    const Event& e = events[k];
    const TailPair inc = rec.advance(static_cast<double>(e.t));
    out.compensator.left += inc.left;
    out.compensator.right += inc.right;

    const double y = std::abs(e.m);
    const double lam = common ? rec.share(e.tail) * rec.lambda_total() : rec.lambda()[e.tail];
    const double s = rec.sigma(e.tail);
    const double log_f = gpd_log_density(y, p.xi[e.tail], s);
    if (!std::isfinite(log_f)) {
      out.total = -std::numeric_limits<double>::infinity();
      out.per_tail = {out.total, out.total};
      return out;
    }
    event_terms[e.tail] += std::log(lam) + log_f;
    out.n_events[e.tail] += 1.0;
    rec.absorb(e.tail, y);
  }
  const TailPair inc = rec.advance(static_cast<double>(b));
  out.compensator.left += inc.left;
  out.compensator.right += inc.right;

  out.per_tail.left = event_terms.left - out.compensator.left;
  out.per_tail.right = event_terms.right - out.compensator.right;
  out.total = out.per_tail.left + out.per_tail.right;
  return out;
}

}  // namespace detail

/// Log-likelihood of the events in the window [a, b) given the full history.
/// Compensators are integrated in closed form.
inline LogLikelihood log_likelihood(const HawkesParams& p, const ExceedanceSeries& ex,
                                    std::size_t a, std::size_t b) {
  p.validate();
  if (a > b || b > ex.T) throw std::invalid_argument("likelihood window must lie within [0, T]");
  detail::check_sorted(ex.events);
  LogLikelihood ll = detail::log_likelihood_unchecked(p, ex.events, a, b);
  if (!std::isfinite(ll.total))
    throw std::domain_error("an excess lies outside the GPD support under these parameters");
  return ll;
}

/// Training-window likelihood [0, train_end).
inline LogLikelihood log_likelihood(const HawkesParams& p, const ExceedanceSeries& ex) {
  return log_likelihood(p, ex, 0, ex.train_end);
}

}  // namespace tpot
