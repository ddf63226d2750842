#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tpot/gpd.hpp"
#include "tpot/tail.hpp"

namespace tpot {

enum class ModelKind { bivariate, bivariate_decoupled, common, common_symmetric };

inline constexpr std::array<ModelKind, 4> kAllKinds{ModelKind::bivariate,
                                                    ModelKind::bivariate_decoupled,
                                                    ModelKind::common,
                                                    ModelKind::common_symmetric};

inline std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::bivariate: return "bivariate";
    case ModelKind::bivariate_decoupled: return "bivariate-decoupled";
    case ModelKind::common: return "common";
    case ModelKind::common_symmetric: return "common-symmetric";
  }
  return "?";
}

inline ModelKind parse_kind(std::string_view s) {
  for (ModelKind k : kAllKinds)
    if (to_string(k) == s) return k;
  // short aliases used on the command line
  if (s == "bi") return ModelKind::bivariate;
  if (s == "bi-d" || s == "decoupled") return ModelKind::bivariate_decoupled;
  if (s == "ci") return ModelKind::common;
  if (s == "ci-s" || s == "symmetric") return ModelKind::common_symmetric;
  throw std::invalid_argument("unknown model kind '" + std::string(s) + "'");
}

constexpr bool is_common(ModelKind kind) {
  return kind == ModelKind::common || kind == ModelKind::common_symmetric;
}

/// Branching matrix; gamma[i][j] is the mean number of daughters in tail i
/// triggered by one mother event in tail j.
using Branching = std::array<std::array<double, 2>, 2>;

/// Largest |eigenvalue| of a 2x2 matrix.
inline double spectral_radius(const Branching& g) {
  const double tr = g[0][0] + g[1][1];
  const double det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
  const double disc = 0.25 * tr * tr - det;
  if (disc >= 0.0) {
    const double r = std::sqrt(disc);
    return std::max(std::abs(0.5 * tr + r), std::abs(0.5 * tr - r));
  }
  return std::sqrt(det);  // complex pair, |lambda|^2 = det
}

/// Parameters of one model variant. Rates are per trading day (d_t^-1);
/// varsigma is in the units of the series, eta in series units times d_t.
struct HawkesParams {
  ModelKind kind = ModelKind::common;
  TailPair mu{};          // bivariate kinds
  double mu_common = 0.0; // common kinds
  Branching gamma{};      // bivariate kinds
  TailPair gamma_common{};// common kinds: (gamma_<->left, gamma_<->right)
  TailPair beta{};
  TailPair xi{};
  TailPair varsigma{};
  TailPair eta{};
  TailPair alpha{};
  double w = 0.0;         // common kinds only

  /// Background intensity of the whole two-tailed process.
  double background_total() const {
    return is_common(kind) ? mu_common : mu.left + mu.right;
  }

  /// Spectral radius of the branching matrix; for common kinds the
  /// effective ratio gamma_left S(-w) + gamma_right S(+w).
  double branching_ratio() const {
    if (is_common(kind)) {
      return gamma_common.left * tail_share(Tail::left, w) +
             gamma_common.right * tail_share(Tail::right, w);
    }
    return spectral_radius(gamma);
  }

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const;

  /// Number of free parameters (w counted only when it is estimated).
  static int dimension(ModelKind kind, bool free_w = false) {
    switch (kind) {
      case ModelKind::bivariate: return 16;
      case ModelKind::bivariate_decoupled: return 14;
      case ModelKind::common: return free_w ? 14 : 13;
      case ModelKind::common_symmetric: return 7;
    }
    return 0;
  }
};

inline void HawkesParams::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("HawkesParams: " + what); };
  auto finite = [](double v) { return std::isfinite(v); };
  for (Tail t : kTails) {
    const std::string tn(to_string(t));
    if (!finite(beta[t]) || !(beta[t] > 0.0)) fail("beta_" + tn + " must be > 0");
    if (!finite(varsigma[t]) || !(varsigma[t] > 0.0)) fail("varsigma_" + tn + " must be > 0");
    if (!finite(xi[t])) fail("xi_" + tn + " must be finite");
    if (!finite(eta[t]) || eta[t] < 0.0) fail("eta_" + tn + " must be >= 0");
    if (!finite(alpha[t]) || alpha[t] < 0.0) fail("alpha_" + tn + " must be >= 0");
  }
  if (is_common(kind)) {
    if (!finite(mu_common) || !(mu_common > 0.0)) fail("mu must be > 0");
    if (!finite(w)) fail("w must be finite");
    for (Tail t : kTails)
      if (!finite(gamma_common[t]) || gamma_common[t] < 0.0) fail("gamma entries must be >= 0");
    if (kind == ModelKind::common_symmetric) {
      const bool symmetric = gamma_common.left == gamma_common.right && beta.left == beta.right &&
                             xi.left == xi.right && varsigma.left == varsigma.right &&
                             eta.left == eta.right && alpha.left == alpha.right && w == 0.0;
      if (!symmetric) fail("symmetric kind needs equal tail components and w = 0");
    }
  } else {
    for (Tail t : kTails)
      if (!finite(mu[t]) || !(mu[t] > 0.0)) fail("mu_" + std::string(to_string(t)) + " must be > 0");
    for (const auto& row : gamma)
      for (double g : row)
        if (!finite(g) || g < 0.0) fail("branching entries must be >= 0");
    if (kind == ModelKind::bivariate_decoupled && (gamma[0][1] != 0.0 || gamma[1][0] != 0.0)) {
      fail("decoupled kind needs zero off-diagonal branching");
    }
  }
  if (!(branching_ratio() < 1.0)) {
    fail("supercritical branching (ratio " + std::to_string(branching_ratio()) + ")");
  }
}

// ---------------------------------------------------------------------------
// Free-parameter layout
// ---------------------------------------------------------------------------

/// How a parameter is mapped to optimizer coordinates.
enum class Transform { linear, log };

struct ParamSpec {
  std::string name;
  double lower;
  double upper;
  Transform transform;
  std::function<double(const HawkesParams&)> get;
  std::function<void(HawkesParams&, double)> set;
};

namespace detail {

inline ParamSpec pair_spec(std::string name, TailPair HawkesParams::*field, Tail tail, double lo,
                           double hi, Transform tr) {
  return {std::move(name), lo, hi, tr,
          [field, tail](const HawkesParams& p) { return (p.*field)[tail]; },
          [field, tail](HawkesParams& p, double v) { (p.*field)[tail] = v; }};
}

inline ParamSpec tied_spec(std::string name, TailPair HawkesParams::*field, double lo, double hi,
                           Transform tr) {
  return {std::move(name), lo, hi, tr,
          [field](const HawkesParams& p) { return (p.*field).left; },
          [field](HawkesParams& p, double v) { (p.*field).left = (p.*field).right = v; }};
}

struct Bounds {
  double lo, hi;
  Transform tr;
};

inline constexpr Bounds kMuBounds{1e-6, 1.0, Transform::log};
inline constexpr Bounds kGammaBounds{0.0, 2.0, Transform::linear};
inline constexpr Bounds kBetaBounds{1e-4, 10.0, Transform::log};
inline constexpr Bounds kXiBounds{-0.95, 0.95, Transform::linear};
inline constexpr Bounds kVarsigmaBounds{1e-6, 1.0, Transform::log};
inline constexpr Bounds kEtaBounds{0.0, 10.0, Transform::linear};
inline constexpr Bounds kAlphaBounds{0.0, 100.0, Transform::linear};
inline constexpr Bounds kWBounds{-5.0, 5.0, Transform::linear};

}  // namespace detail

/// Ordered list of the free parameters of a model kind with their box bounds.
inline std::vector<ParamSpec> param_specs(ModelKind kind, bool free_w = false) {
  using detail::pair_spec;
  using detail::tied_spec;
  namespace d = detail;
  std::vector<ParamSpec> s;
  auto per_tail = [&](const char* base, TailPair HawkesParams::*field, d::Bounds b) {
    for (Tail t : kTails)
      s.push_back(pair_spec(std::string(base) + "_" + std::string(to_string(t)), field, t, b.lo,
                            b.hi, b.tr));
  };

  if (kind == ModelKind::common_symmetric) {
    s.push_back({"mu", d::kMuBounds.lo, d::kMuBounds.hi, d::kMuBounds.tr,
                 [](const HawkesParams& p) { return p.mu_common; },
                 [](HawkesParams& p, double v) { p.mu_common = v; }});
    s.push_back(tied_spec("gamma", &HawkesParams::gamma_common, d::kGammaBounds.lo,
                          d::kGammaBounds.hi, d::kGammaBounds.tr));
    s.push_back(tied_spec("beta", &HawkesParams::beta, d::kBetaBounds.lo, d::kBetaBounds.hi,
                          d::kBetaBounds.tr));
    s.push_back(tied_spec("xi", &HawkesParams::xi, d::kXiBounds.lo, d::kXiBounds.hi,
                          d::kXiBounds.tr));
    s.push_back(tied_spec("varsigma", &HawkesParams::varsigma, d::kVarsigmaBounds.lo,
                          d::kVarsigmaBounds.hi, d::kVarsigmaBounds.tr));
    s.push_back(tied_spec("eta", &HawkesParams::eta, d::kEtaBounds.lo, d::kEtaBounds.hi,
                          d::kEtaBounds.tr));
    s.push_back(tied_spec("alpha", &HawkesParams::alpha, d::kAlphaBounds.lo,
                          d::kAlphaBounds.hi, d::kAlphaBounds.tr));
    return s;
  }

  if (kind == ModelKind::common) {
    s.push_back({"mu", d::kMuBounds.lo, d::kMuBounds.hi, d::kMuBounds.tr,
                 [](const HawkesParams& p) { return p.mu_common; },
                 [](HawkesParams& p, double v) { p.mu_common = v; }});
    per_tail("gamma", &HawkesParams::gamma_common, d::kGammaBounds);
  } else {
    per_tail("mu", &HawkesParams::mu, d::kMuBounds);
    for (Tail i : kTails) {
      for (Tail j : kTails) {
        if (kind == ModelKind::bivariate_decoupled && i != j) continue;
        const std::size_t a = index(i), b = index(j);
        s.push_back({"gamma_" + std::string(to_string(i)) + "_" + std::string(to_string(j)),
                     d::kGammaBounds.lo, d::kGammaBounds.hi, d::kGammaBounds.tr,
                     [a, b](const HawkesParams& p) { return p.gamma[a][b]; },
                     [a, b](HawkesParams& p, double v) { p.gamma[a][b] = v; }});
      }
    }
  }
  per_tail("beta", &HawkesParams::beta, d::kBetaBounds);
  per_tail("xi", &HawkesParams::xi, d::kXiBounds);
  per_tail("varsigma", &HawkesParams::varsigma, d::kVarsigmaBounds);
  per_tail("eta", &HawkesParams::eta, d::kEtaBounds);
  per_tail("alpha", &HawkesParams::alpha, d::kAlphaBounds);
  if (kind == ModelKind::common && free_w) {
    s.push_back({"w", d::kWBounds.lo, d::kWBounds.hi, d::kWBounds.tr,
                 [](const HawkesParams& p) { return p.w; },
                 [](HawkesParams& p, double v) { p.w = v; }});
  }
  return s;
}

inline std::vector<double> pack(const HawkesParams& p, const std::vector<ParamSpec>& specs) {
  std::vector<double> v;
  v.reserve(specs.size());
  for (const auto& s : specs) v.push_back(s.get(p));
  return v;
}

inline void unpack(HawkesParams& p, const std::vector<ParamSpec>& specs,
                   const std::vector<double>& v) {
  for (std::size_t i = 0; i < specs.size(); ++i) specs[i].set(p, v[i]);
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json pair_json(const TailPair& v) {
  return {{"left", v.left}, {"right", v.right}};
}

inline TailPair pair_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw std::invalid_argument(std::string("missing field '") + key + "'");
  const auto& v = j.at(key);
  return {v.at("left").get<double>(), v.at("right").get<double>()};
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const HawkesParams& p) {
  using detail::pair_json;
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(p.kind));
  if (is_common(p.kind)) {
    j["mu"] = p.mu_common;
    j["gamma"] = pair_json(p.gamma_common);
  } else {
    j["mu"] = pair_json(p.mu);
    j["gamma"] = {{"left_left", p.gamma[0][0]},
                  {"left_right", p.gamma[0][1]},
                  {"right_left", p.gamma[1][0]},
                  {"right_right", p.gamma[1][1]}};
  }
  j["beta"] = pair_json(p.beta);
  j["xi"] = pair_json(p.xi);
  j["varsigma"] = pair_json(p.varsigma);
  j["eta"] = pair_json(p.eta);
  j["alpha"] = pair_json(p.alpha);
  if (is_common(p.kind)) j["w"] = p.w;
  j["units"] = {{"mu", "1/d_t"},       {"beta", "1/d_t"}, {"gamma", "dimensionless"},
                {"xi", "dimensionless"}, {"varsigma", "series units"},
                {"eta", "series units * d_t"}, {"alpha", "dimensionless"}};
  return j;
}

inline HawkesParams params_from_json(const nlohmann::json& j) {
  using detail::pair_from;
  HawkesParams p;
  p.kind = parse_kind(j.at("kind").get<std::string>());
  if (is_common(p.kind)) {
    p.mu_common = j.at("mu").get<double>();
    p.gamma_common = pair_from(j, "gamma");
    p.w = j.value("w", 0.0);
  } else {
    p.mu = pair_from(j, "mu");
    const auto& g = j.at("gamma");
    p.gamma[0][0] = g.at("left_left").get<double>();
    p.gamma[0][1] = g.value("left_right", 0.0);
    p.gamma[1][0] = g.value("right_left", 0.0);
    p.gamma[1][1] = g.at("right_right").get<double>();
  }
  p.beta = pair_from(j, "beta");
  p.xi = pair_from(j, "xi");
  p.varsigma = pair_from(j, "varsigma");
  p.eta = pair_from(j, "eta");
  p.alpha = pair_from(j, "alpha");
  p.validate();
  return p;
}

}  // namespace tpot
