#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "tpot/garch.hpp"
#include "tpot/intensity.hpp"

namespace tpot {

struct SimConfig {
  std::size_t T = 12311;
  std::uint64_t seed = 1;
  std::optional<std::size_t> burn_in;  // default ceil(10 / min beta)
  bool at_most_one_event_per_step = true;
  std::optional<std::size_t> train_end;  // default T
  double u_left = -1.0;                  // labels carried into the output
  double u_right = 1.0;

  void validate() const {
    if (T == 0) throw std::invalid_argument("simulation length must be > 0");
    if (train_end && (*train_end == 0 || *train_end > T))
      throw std::invalid_argument("train_end must lie in (0, T]");
    if (!(u_left < u_right)) throw std::invalid_argument("thresholds need u_left < u_right");
  }
};

/// Independent stream seed for replication `index` of a batch (splitmix64).
inline std::uint64_t replication_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::size_t default_burn_in(const HawkesParams& p) {
  return static_cast<std::size_t>(std::ceil(10.0 / std::min(p.beta.left, p.beta.right)));
}

/// Discrete-time generation on the unit grid. Each step (t-1, t] fires with
/// probability 1 - exp(-Lambda) for the closed-form step integral Lambda; the
/// event is stamped at t with its GPD excess drawn at the left-limit scale.
inline ExceedanceSeries simulate_hawkes(const HawkesParams& p, const SimConfig& cfg) {
  p.validate();
  cfg.validate();
  const bool common = is_common(p.kind);
  const bool single = cfg.at_most_one_event_per_step || common;
  const std::size_t burn = cfg.burn_in.value_or(default_burn_in(p));

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  HawkesRecursion rec(p);

  ExceedanceSeries ex;
  ex.u_left = cfg.u_left;
  ex.u_right = cfg.u_right;
  ex.T = cfg.T;
  ex.train_end = cfg.train_end.value_or(cfg.T);

  auto fire = [&](std::size_t s, Tail tail) {
    const double sigma = rec.sigma(tail);
    double y = 0.0;
    while (!(y > 0.0)) y = gpd_quantile(U(rng), p.xi[tail], sigma);
    rec.absorb(tail, y);
    if (s > burn) ex.events.push_back({s - burn - 1, tail, sign(tail) * y});
  };

  for (std::size_t s = 1; s <= burn + cfg.T; ++s) {
    const TailPair Lam = rec.compensator(1.0);
    rec.advance(static_cast<double>(s));
    const double total = Lam.left + Lam.right;
    if (!std::isfinite(total)) throw std::domain_error("non-finite intensity during simulation");
    if (single) {
      if (U(rng) >= -std::expm1(-total)) continue;
      const double p_left = common ? tail_share(Tail::left, p.w) : Lam.left / total;
      fire(s, U(rng) < p_left ? Tail::left : Tail::right);
    } else {
      const bool left = U(rng) < -std::expm1(-Lam.left);
      const bool right = U(rng) < -std::expm1(-Lam.right);
      if (left) fire(s, Tail::left);
      if (right) fire(s, Tail::right);
    }
  }
  return ex;
}

struct GarchPath {
  ReturnSeries series;
  std::vector<double> sigma;
};

/// x_t = mu + sigma_t eps_t with sigma_0^2 the unconditional variance and
/// unit-variance normal or Student-t innovations.
inline GarchPath simulate_garch_path(const GarchParams& g, std::size_t n, std::uint64_t seed) {
  g.validate();
  if (n == 0) throw std::invalid_argument("series length must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> N(0.0, 1.0);
  std::student_t_distribution<double> St(g.dist == ErrorDist::student_t ? g.nu : 3.0);
  const double t_scale = g.dist == ErrorDist::student_t ? std::sqrt((g.nu - 2.0) / g.nu) : 1.0;

  GarchPath out;
  out.series.x.reserve(n);
  out.sigma.reserve(n);
  double var = g.unconditional_variance();
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0) {
      const double e = out.series.x[t - 1] - g.mu;
      var = g.omega + (g.alpha1 + (e < 0.0 ? g.gamma1 : 0.0)) * e * e + g.beta1 * var;
    }
    const double s = std::sqrt(var);
    const double eps = g.dist == ErrorDist::normal ? N(rng) : t_scale * St(rng);
    out.sigma.push_back(s);
    out.series.x.push_back(g.mu + s * eps);
  }
  out.series.train_end = n;
  return out;
}

inline ReturnSeries simulate_garch(const GarchParams& g, std::size_t n, std::uint64_t seed) {
  return simulate_garch_path(g, n, seed).series;
}

inline nlohmann::ordered_json to_json(const SimConfig& c) {
  nlohmann::ordered_json j;
  j["T"] = c.T;
  j["seed"] = c.seed;
  if (c.burn_in) j["burn_in"] = *c.burn_in;
  else j["burn_in"] = nullptr;
  j["at_most_one_event_per_step"] = c.at_most_one_event_per_step;
  if (c.train_end) j["train_end"] = *c.train_end;
  else j["train_end"] = nullptr;
  j["u_left"] = c.u_left;
  j["u_right"] = c.u_right;
  return j;
}

inline SimConfig sim_config_from_json(const nlohmann::json& j) {
  SimConfig c;
  c.T = j.value("T", c.T);
  c.seed = j.value("seed", c.seed);
  if (j.contains("burn_in") && !j["burn_in"].is_null()) c.burn_in = j["burn_in"].get<std::size_t>();
  c.at_most_one_event_per_step = j.value("at_most_one_event_per_step", true);
  if (j.contains("train_end") && !j["train_end"].is_null()) c.train_end = j["train_end"].get<std::size_t>();
  c.u_left = j.value("u_left", c.u_left);
  c.u_right = j.value("u_right", c.u_right);
  c.validate();
  return c;
}

}  // namespace tpot
