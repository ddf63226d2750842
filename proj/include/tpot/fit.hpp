#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tpot/likelihood.hpp"
#include "tpot/optimize.hpp"
#include "tpot/params.hpp"

namespace tpot {

struct FitOptions {
  int restarts = 8;            // total number of start points, the first deterministic
  std::uint64_t seed = 1;
  bool free_w = false;         // estimate w (common kind); otherwise w stays at its initial value
  std::map<std::string, double> fixed;  // free-parameter names held at the given value
  std::optional<HawkesParams> initial;  // replaces the default first start point
  bool compute_se = true;
  double max_branching = 0.999;
  opt::Options optimizer{};
};

struct FitResult {
  ModelKind kind = ModelKind::common;
  HawkesParams params;
  std::vector<std::string> names;             // estimated parameters, in layout order
  std::vector<double> estimates;
  std::vector<std::optional<double>> se;      // empty entry: unavailable
  std::vector<std::string> pinned;            // estimates sitting on a box bound
  bool se_singular = false;
  double loglik = -std::numeric_limits<double>::infinity();
  double deviance = std::numeric_limits<double>::infinity();
  TailPair loglik_per_tail{};
  TailPair n_events{};
  int dim = 0;
  bool converged = false;
  int n_restarts_used = 0;
  double gradient_norm = std::numeric_limits<double>::infinity();

  std::optional<double> se_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i < se.size() ? se[i] : std::nullopt;
    return std::nullopt;
  }
  double estimate_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return estimates[i];
    throw std::out_of_range("no estimated parameter named '" + name + "'");
  }
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct Layout {
  HawkesParams base;
  std::vector<ParamSpec> specs;  // estimated parameters only
  std::vector<double> lo, hi;    // internal coordinates
  std::vector<double> scale;     // linear-transform scales
  double max_branching = 0.999;

  double to_internal(std::size_t i, double v) const {
    return specs[i].transform == Transform::log ? std::log(v) : v / scale[i];
  }
  double to_natural(std::size_t i, double u) const {
    return specs[i].transform == Transform::log ? std::exp(u) : u * scale[i];
  }
  std::vector<double> internal(const HawkesParams& p) const {
    std::vector<double> u(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const double v = std::clamp(specs[i].get(p), specs[i].lower, specs[i].upper);
      u[i] = to_internal(i, v);
    }
    return u;
  }
  HawkesParams natural(const std::vector<double>& u) const {
    HawkesParams p = base;
    for (std::size_t i = 0; i < specs.size(); ++i) specs[i].set(p, to_natural(i, u[i]));
    return p;
  }
  HawkesParams from_values(const std::vector<double>& v) const {
    HawkesParams p = base;
    for (std::size_t i = 0; i < specs.size(); ++i) specs[i].set(p, v[i]);
    return p;
  }
};

inline double mean_abs_excess(const ExceedanceSeries& ex, Tail tail, std::size_t end) {
  double s = 0.0;
  int n = 0;
  for (const auto& e : ex.events)
    if (e.t < end && e.tail == tail) {
      s += std::abs(e.m);
      ++n;
    }
  return n ? s / n : 1e-3;
}

inline HawkesParams default_start(ModelKind kind, const ExceedanceSeries& ex, bool free_w) {
  const TailPair n = ex.count(0, ex.train_end);
  const double T = static_cast<double>(ex.train_end);
  HawkesParams p;
  p.kind = kind;
  p.mu = {0.5 * n.left / T, 0.5 * n.right / T};
  p.mu_common = 0.5 * (n.left + n.right) / T;
  p.gamma = {{{0.2, 0.2}, {0.2, 0.2}}};
  if (kind == ModelKind::bivariate_decoupled) p.gamma = {{{0.4, 0.0}, {0.0, 0.4}}};
  p.gamma_common = {0.4, 0.4};
  p.beta = {0.05, 0.05};
  p.xi = {0.1, 0.1};
  for (Tail t : kTails) p.varsigma[t] = std::clamp(0.9 * mean_abs_excess(ex, t, ex.train_end), 2e-6, 0.9);
  p.eta = {0.0, 0.0};
  p.alpha = {0.5, 0.5};
  p.w = 0.0;
  if (kind == ModelKind::common && free_w && n.left > 0 && n.right > 0) p.w = std::log(n.right / n.left);
  if (kind == ModelKind::common_symmetric) {
    const double s = 0.5 * (p.varsigma.left + p.varsigma.right);
    p.varsigma = {s, s};
  }
  return p;
}

// Random start inside a data-informed sub-box of the bounds.
inline HawkesParams random_start(const HawkesParams& base, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto log_uniform = [&](double a, double b) { return a * std::pow(b / a, U(rng)); };
  HawkesParams p = base;
  for (Tail t : kTails) p.mu[t] = base.mu[t] * log_uniform(0.3, 1.8);
  p.mu_common = base.mu_common * log_uniform(0.3, 1.8);
  for (auto& row : p.gamma)
    for (double& g : row) g = 0.45 * U(rng);
  if (base.kind == ModelKind::bivariate_decoupled) p.gamma[0][1] = p.gamma[1][0] = 0.0;
  const bool sym = base.kind == ModelKind::common_symmetric;
  const double ref_scale = 0.5 * (base.varsigma.left + base.varsigma.right);
  for (Tail t : kTails) {
    p.gamma_common[t] = 0.9 * U(rng);
    p.beta[t] = log_uniform(0.005, 0.5);
    p.xi[t] = -0.2 + 0.6 * U(rng);
    p.varsigma[t] = base.varsigma[t] * log_uniform(0.6, 1.5);
    p.eta[t] = 15.0 * ref_scale * U(rng);
    p.alpha[t] = log_uniform(0.05, 5.0);
    if (sym) {
      p.gamma_common.right = p.gamma_common.left;
      p.beta.right = p.beta.left;
      p.xi.right = p.xi.left;
      p.varsigma.right = p.varsigma.left;
      p.eta.right = p.eta.left;
      p.alpha.right = p.alpha.left;
      break;
    }
  }
  return p;
}

inline Layout make_layout(ModelKind kind, const HawkesParams& base, const ExceedanceSeries& ex,
                          const FitOptions& o) {
  Layout L;
  L.base = base;
  L.max_branching = o.max_branching;
  for (auto& s : param_specs(kind, o.free_w)) {
    auto it = o.fixed.find(s.name);
    if (it != o.fixed.end()) {
      s.set(L.base, it->second);
      continue;
    }
    L.specs.push_back(std::move(s));
  }
  for (const auto& [name, v] : o.fixed) {
    bool known = false;
    for (const auto& s : param_specs(kind, o.free_w)) known = known || s.name == name;
    if (!known) throw std::invalid_argument("cannot fix unknown parameter '" + name + "'");
  }
  const double excess_scale =
      0.5 * (mean_abs_excess(ex, Tail::left, ex.train_end) + mean_abs_excess(ex, Tail::right, ex.train_end));
  for (const auto& s : L.specs) {
    double sc = 1.0;
    if (s.name.rfind("eta", 0) == 0) sc = std::max(10.0 * excess_scale, 1e-8);
    L.scale.push_back(sc);
  }
  for (std::size_t i = 0; i < L.specs.size(); ++i) {
    L.lo.push_back(L.to_internal(i, L.specs[i].lower));
    L.hi.push_back(L.to_internal(i, L.specs[i].upper));
  }
  return L;
}

inline bool within_bounds(const HawkesParams& p, const std::vector<ParamSpec>& all) {
  for (const auto& s : all) {
    const double v = s.get(p);
    if (!(v >= s.lower && v <= s.upper)) return false;
  }
  return true;
}

}  // namespace detail

/// Minus the log-likelihood as a function of internal coordinates; +inf when
/// the point is infeasible (branching above the cap or GPD support violated).
struct NegLogLikObjective {
  const detail::Layout* layout;
  const ExceedanceSeries* ex;

  double operator()(const std::vector<double>& u) const {
    const HawkesParams p = layout->natural(u);
    if (!(p.branching_ratio() < layout->max_branching)) return std::numeric_limits<double>::infinity();
    const LogLikelihood ll = detail::log_likelihood_unchecked(p, ex->events, 0, ex->train_end);
    return std::isfinite(ll.total) ? -ll.total : std::numeric_limits<double>::infinity();
  }
};

struct StandardErrors {
  std::vector<std::optional<double>> se;
  std::vector<std::string> pinned;
  bool singular = false;
};

/// Finite-difference observed-information standard errors for the estimated
/// parameters. Estimates within two difference steps of a box bound are listed
/// as pinned; where a central difference would leave the valid parameter
/// domain the Hessian is taken one step inside instead.
inline StandardErrors standard_errors(const HawkesParams& at, const ExceedanceSeries& ex,
                                      const FitOptions& o = {}) {
  const detail::Layout L = detail::make_layout(at.kind, at, ex, o);
  const std::size_t n = L.specs.size();
  std::vector<double> v(n), center(n), step(n);
  StandardErrors out;
  out.se.assign(n, std::nullopt);
  if (n == 0) return out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = L.specs[i];
    v[i] = s.get(at);
    const double typical = s.transform == Transform::log ? std::abs(v[i]) : std::max(0.1 * L.scale[i], 1e-3);
    step[i] = 1e-4 * std::max(std::abs(v[i]), typical);
    if (v[i] - 2.0 * step[i] < s.lower || v[i] + 2.0 * step[i] > s.upper) out.pinned.push_back(s.name);
    const bool nonnegative = s.name.rfind("xi", 0) != 0 && s.name != "w";
    center[i] = nonnegative && v[i] - step[i] < 0.0 ? v[i] + step[i] : v[i];
  }
  auto loglik = [&](const std::vector<double>& a) {
    return detail::log_likelihood_unchecked(L.from_values(a), ex.events, 0, ex.train_end).total;
  };
  const Eigen::MatrixXd H = opt::hessian(loglik, center, step);
  if (!H.allFinite()) throw std::domain_error("non-finite Hessian entries at the optimum");
  std::vector<double> scale(n);
  for (std::size_t i = 0; i < n; ++i) scale[i] = 1e4 * step[i];
  const opt::Covariance cov = opt::inverse_information(H, scale);
  out.singular = cov.singular;
  const auto se = opt::standard_errors_from(cov);
  for (std::size_t i = 0; i < n; ++i) out.se[i] = se[i];
  return out;
}

/// Maximum-likelihood fit of one model kind on the training window
/// [0, train_end) by multi-start bounded quasi-Newton.
inline FitResult fit_ml(ModelKind kind, const ExceedanceSeries& ex, const FitOptions& o = {}) {
  ex.validate();
  const TailPair n = ex.count(0, ex.train_end);
  if (n.left < 10 || n.right < 10)
    throw std::invalid_argument("need at least 10 training events per tail to fit");
  if (o.free_w && kind != ModelKind::common)
    throw std::invalid_argument("w can only be estimated for the common kind");

  HawkesParams start = o.initial ? *o.initial : detail::default_start(kind, ex, o.free_w);
  start.kind = kind;
  const detail::Layout L = detail::make_layout(kind, start, ex, o);
  const NegLogLikObjective objective{&L, &ex};
  const auto all_specs = param_specs(kind, o.free_w);

  std::mt19937_64 rng(o.seed);
  opt::Result best;
  int used = 0;
  for (int r = 0; r < std::max(1, o.restarts); ++r) {
    HawkesParams p0 = r == 0 ? L.base : detail::random_start(L.base, rng);
    // keep fixed values and the deterministic w in random starts
    for (const auto& [name, val] : o.fixed)
      for (const auto& s : all_specs)
        if (s.name == name) s.set(p0, val);
    if (kind == ModelKind::common && !o.free_w) p0.w = L.base.w;
    if (p0.branching_ratio() >= 0.95) {
      const double f = 0.9 / p0.branching_ratio();
      for (auto& row : p0.gamma)
        for (double& g : row) g *= f;
      for (Tail t : kTails) p0.gamma_common[t] *= f;
    }
    const std::vector<double> u0 = L.internal(p0);
    if (!std::isfinite(objective(u0))) continue;
    ++used;
    opt::Result res = opt::minimize_box(objective, u0, L.lo, L.hi, o.optimizer);
    if (!std::isfinite(best.f) || res.f < best.f ||
        (res.f == best.f && res.converged && !best.converged))
      best = std::move(res);
  }
  if (!std::isfinite(best.f))
    throw FitError(std::string("no feasible start point for the ") + std::string(to_string(kind)) +
                   " fit");

  FitResult fr;
  fr.kind = kind;
  fr.params = L.natural(best.x);
  fr.params.validate();
  for (std::size_t i = 0; i < L.specs.size(); ++i) {
    fr.names.push_back(L.specs[i].name);
    fr.estimates.push_back(L.specs[i].get(fr.params));
  }
  const LogLikelihood ll = log_likelihood(fr.params, ex);
  fr.loglik = ll.total;
  fr.deviance = -2.0 * fr.loglik;
  fr.loglik_per_tail = ll.per_tail;
  fr.n_events = n;
  fr.dim = static_cast<int>(L.specs.size());
  fr.converged = best.converged;
  fr.n_restarts_used = used;
  fr.gradient_norm = best.pg_norm;
  if (o.compute_se) {
    try {
      const StandardErrors se = standard_errors(fr.params, ex, o);
      fr.se = se.se;
      fr.pinned = se.pinned;
      fr.se_singular = se.singular;
    } catch (const std::domain_error&) {
      fr.se.assign(fr.names.size(), std::nullopt);
      fr.se_singular = true;
    }
  } else {
    fr.se.assign(fr.names.size(), std::nullopt);
    for (std::size_t i = 0; i < L.specs.size(); ++i) {
      const double v = fr.estimates[i];
      const auto& s = L.specs[i];
      if (v <= s.lower || v >= s.upper) fr.pinned.push_back(s.name);
    }
  }
  return fr;
}

inline nlohmann::ordered_json to_json(const FitResult& f) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(f.kind));
  j["params"] = to_json(f.params);
  nlohmann::ordered_json se = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < f.names.size(); ++i) {
    if (i < f.se.size() && f.se[i]) se[f.names[i]] = *f.se[i];
    else se[f.names[i]] = nullptr;
  }
  j["se"] = std::move(se);
  j["loglik"] = f.loglik;
  j["deviance"] = f.deviance;
  j["loglik_per_tail"] = {{"left", f.loglik_per_tail.left}, {"right", f.loglik_per_tail.right}};
  j["n_events"] = {{"left", f.n_events.left},
                   {"right", f.n_events.right},
                   {"total", f.n_events.left + f.n_events.right}};
  j["dim"] = f.dim;
  j["converged"] = f.converged;
  j["n_restarts_used"] = f.n_restarts_used;
  j["gradient_norm"] = f.gradient_norm;
  j["se_singular"] = f.se_singular;
  j["pinned"] = f.pinned;
  return j;
}

inline FitResult fit_from_json(const nlohmann::json& j) {
  FitResult f;
  f.kind = parse_kind(j.at("kind").get<std::string>());
  f.params = params_from_json(j.at("params"));
  for (const auto& [name, v] : j.at("se").items()) {
    f.names.push_back(name);
    f.se.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
  }
  const auto specs = param_specs(f.kind, f.kind == ModelKind::common && f.names.size() == 14);
  for (const auto& name : f.names) {
    for (const auto& s : specs)
      if (s.name == name) f.estimates.push_back(s.get(f.params));
  }
  f.loglik = j.at("loglik").get<double>();
  f.deviance = j.at("deviance").get<double>();
  if (j.contains("loglik_per_tail"))
    f.loglik_per_tail = {j["loglik_per_tail"].at("left").get<double>(),
                         j["loglik_per_tail"].at("right").get<double>()};
  f.n_events = {j.at("n_events").at("left").get<double>(), j.at("n_events").at("right").get<double>()};
  f.dim = j.value("dim", static_cast<int>(f.names.size()));
  f.converged = j.at("converged").get<bool>();
  f.n_restarts_used = j.value("n_restarts_used", 0);
  f.gradient_norm = j.value("gradient_norm", 0.0);
  f.se_singular = j.value("se_singular", false);
  if (j.contains("pinned")) f.pinned = j["pinned"].get<std::vector<std::string>>();
  return f;
}

}  // namespace tpot
