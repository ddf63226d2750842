#pragma once

// Box-constrained quasi-Newton minimisation with finite-difference
// derivatives, and the finite-difference Hessian used for standard errors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tpot::opt {

using Vec = std::vector<double>;

struct Options {
  int max_iterations = 400;
  int memory = 10;
  double gtol = 1e-6;          // projected-gradient inf-norm for convergence
  double accept_gtol = 1e-3;   // weaker criterion accepted after a stall
  double ftol = 1e-13;         // relative objective change counted as a stall
  double fd_step = 1e-6;       // relative central-difference step
  int max_backtracks = 40;
};

struct Result {
  Vec x;
  double f = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  double pg_norm = std::numeric_limits<double>::infinity();
  std::string message;
};

namespace detail {

inline double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

inline void project(Vec& x, const Vec& lo, const Vec& hi) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = clamp(x[i], lo[i], hi[i]);
}

inline double dot(const Vec& a, const Vec& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace detail

/// Inf-norm of x - P(x - g): zero exactly at a KKT point of the box problem.
inline double projected_gradient_norm(const Vec& x, const Vec& g, const Vec& lo, const Vec& hi) {
  double n = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    n = std::max(n, std::abs(x[i] - detail::clamp(x[i] - g[i], lo[i], hi[i])));
  return n;
}

/// Central differences, falling back to one-sided steps at the box edges or
/// where the objective is not finite.
template <class F>
Vec gradient(F&& f, const Vec& x, double fx, const Vec& lo, const Vec& hi, double rel_step,
             int* evaluations = nullptr) {
  Vec g(x.size(), 0.0);
  Vec y = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x[i]));
    const double up = std::min(x[i] + h, hi[i]);
    const double dn = std::max(x[i] - h, lo[i]);
    y[i] = up;
    const double fu = up > x[i] ? f(y) : std::numeric_limits<double>::infinity();
    y[i] = dn;
    const double fd = dn < x[i] ? f(y) : std::numeric_limits<double>::infinity();
    y[i] = x[i];
    if (evaluations) *evaluations += 2;
    if (std::isfinite(fu) && std::isfinite(fd)) g[i] = (fu - fd) / (up - dn);
    else if (std::isfinite(fu)) g[i] = (fu - fx) / (up - x[i]);
    else if (std::isfinite(fd)) g[i] = (fx - fd) / (x[i] - dn);
    else g[i] = 0.0;
  }
  return g;
}

/// Projected limited-memory BFGS on the box [lo, hi]. Variables held at a
/// bound with the gradient pointing outward are frozen for the step; the
/// quasi-Newton direction acts on the rest. The objective may return +inf to
/// reject infeasible points; the line search then backtracks.
template <class F>
Result minimize_box(F&& f, Vec x, const Vec& lo, const Vec& hi, const Options& o = {}) {
  using detail::dot;
  const std::size_t n = x.size();
  Result r;
  detail::project(x, lo, hi);
  double fx = f(x);
  r.evaluations = 1;
  if (!std::isfinite(fx)) {
    r.x = x;
    r.message = "objective not finite at the start point";
    return r;
  }
  Vec g = gradient(f, x, fx, lo, hi, o.fd_step, &r.evaluations);
  std::deque<std::pair<Vec, Vec>> mem;
  int stalls = 0;

  for (r.iterations = 0; r.iterations < o.max_iterations; ++r.iterations) {
    r.pg_norm = projected_gradient_norm(x, g, lo, hi);
    if (r.pg_norm < o.gtol) {
      r.converged = true;
      r.message = "projected gradient below tolerance";
      break;
    }

    std::vector<char> free(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double span = hi[i] - lo[i];
      if ((x[i] <= lo[i] + 1e-12 * span && g[i] > 0.0) || (x[i] >= hi[i] - 1e-12 * span && g[i] < 0.0))
        free[i] = 0;
    }
    auto mask = [&](Vec v) {
      for (std::size_t i = 0; i < n; ++i)
        if (!free[i]) v[i] = 0.0;
      return v;
    };

    // two-loop recursion on the free subspace
    Vec q = mask(g);
    std::vector<double> a(mem.size());
    for (std::size_t k = mem.size(); k-- > 0;) {
      const Vec s = mask(mem[k].first), y = mask(mem[k].second);
      const double sy = dot(s, y);
      if (sy <= 0.0) continue;
      a[k] = dot(s, q) / sy;
      for (std::size_t i = 0; i < n; ++i) q[i] -= a[k] * y[i];
    }
    if (!mem.empty()) {
      const Vec s = mask(mem.back().first), y = mask(mem.back().second);
      const double yy = dot(y, y), sy = dot(s, y);
      if (yy > 0.0 && sy > 0.0)
        for (double& v : q) v *= sy / yy;
    }
    for (std::size_t k = 0; k < mem.size(); ++k) {
      const Vec s = mask(mem[k].first), y = mask(mem[k].second);
      const double sy = dot(s, y);
      if (sy <= 0.0) continue;
      const double b = dot(y, q) / sy;
      for (std::size_t i = 0; i < n; ++i) q[i] += (a[k] - b) * s[i];
    }
    Vec d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = -q[i];
    const Vec gm = mask(g);
    if (dot(d, gm) >= 0.0 || mem.empty()) {
      const double gn = std::sqrt(dot(gm, gm));
      for (std::size_t i = 0; i < n; ++i) d[i] = -gm[i] / std::max(gn, 1.0);
      if (dot(d, gm) >= 0.0) {
        r.converged = r.pg_norm < o.accept_gtol;
        r.message = "no descent direction";
        break;
      }
    }

    double step = 1.0;
    Vec xn(n);
    double fn = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int bt = 0; bt < o.max_backtracks; ++bt) {
      for (std::size_t i = 0; i < n; ++i) xn[i] = x[i] + step * d[i];
      detail::project(xn, lo, hi);
      fn = f(xn);
      ++r.evaluations;
      double decrease = 0.0;
      for (std::size_t i = 0; i < n; ++i) decrease += g[i] * (xn[i] - x[i]);
      if (std::isfinite(fn) && fn <= fx + 1e-4 * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!mem.empty()) {
        mem.clear();  // retry from a steepest-descent step
        continue;
      }
      r.converged = r.pg_norm < o.accept_gtol;
      r.message = "line search failed";
      break;
    }

    Vec gn = gradient(f, xn, fn, lo, hi, o.fd_step, &r.evaluations);
    Vec s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = xn[i] - x[i];
      y[i] = gn[i] - g[i];
    }
    if (dot(s, y) > 1e-12 * std::sqrt(dot(s, s) * dot(y, y))) {
      mem.emplace_back(std::move(s), std::move(y));
      if (static_cast<int>(mem.size()) > o.memory) mem.pop_front();
    }
    const double change = std::abs(fx - fn);
    x = std::move(xn);
    g = std::move(gn);
    if (change <= o.ftol * std::max(1.0, std::abs(fn))) {
      if (++stalls >= 3) {
        r.pg_norm = projected_gradient_norm(x, g, lo, hi);
        r.converged = r.pg_norm < o.accept_gtol;
        r.message = "objective stalled";
        fx = fn;
        break;
      }
    } else {
      stalls = 0;
    }
    fx = fn;
  }
  if (r.iterations >= o.max_iterations) {
    r.pg_norm = projected_gradient_norm(x, g, lo, hi);
    r.converged = r.pg_norm < o.accept_gtol;
    r.message = "iteration limit";
  }
  r.x = std::move(x);
  r.f = fx;
  return r;
}

/// Central-difference Hessian with per-coordinate absolute steps.
template <class F>
Eigen::MatrixXd hessian(F&& f, const Vec& x, const Vec& steps) {
  const std::size_t n = x.size();
  Eigen::MatrixXd H(n, n);
  const double f0 = f(x);
  Vec y = x;
  for (std::size_t i = 0; i < n; ++i) {
    const double hi = steps[i];
    y[i] = x[i] + hi;
    const double fp = f(y);
    y[i] = x[i] - hi;
    const double fm = f(y);
    y[i] = x[i];
    H(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
    for (std::size_t j = 0; j < i; ++j) {
      const double hj = steps[j];
      y[i] = x[i] + hi; y[j] = x[j] + hj; const double fpp = f(y);
      y[j] = x[j] - hj; const double fpm = f(y);
      y[i] = x[i] - hi; const double fmm = f(y);
      y[j] = x[j] + hj; const double fmp = f(y);
      y[i] = x[i]; y[j] = x[j];
      H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
    }
  }
  return H;
}

struct Covariance {
  Eigen::MatrixXd matrix;
  bool singular = false;  // a pseudo-inverse was used
  bool finite = true;
};

/// Inverse of the observed information -H of a log-likelihood; falls back to
/// the eigen pseudo-inverse when -H is not positive definite. `scale` holds
/// typical parameter magnitudes used to equilibrate H before the eigen
/// decomposition.
inline Covariance inverse_information(const Eigen::MatrixXd& hess, const Vec& scale = {}) {
  Covariance c;
  if (!hess.allFinite()) {
    c.finite = false;
    return c;
  }
  Eigen::VectorXd d = Eigen::VectorXd::Ones(hess.rows());
  for (std::size_t i = 0; i < scale.size() && static_cast<Eigen::Index>(i) < d.size(); ++i)
    if (scale[i] > 0.0 && std::isfinite(scale[i])) d[static_cast<Eigen::Index>(i)] = scale[i];
  const Eigen::MatrixXd info = -0.5 * d.asDiagonal() * (hess + hess.transpose()) * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(info);
  const auto& ev = es.eigenvalues();
  const double top = ev.size() ? ev.cwiseAbs().maxCoeff() : 0.0;
  const double tol = 1e-10 * std::max(top, 1e-300);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] > tol) inv[i] = 1.0 / ev[i];
    else c.singular = true;
  }
  c.matrix = d.asDiagonal() * (es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose()) *
             d.asDiagonal();
  return c;
}

/// sqrt(diag(cov)); entries whose variance is not positive are empty.
inline std::vector<std::optional<double>> standard_errors_from(const Covariance& c) {
  std::vector<std::optional<double>> se;
  if (!c.finite) return se;
  for (Eigen::Index i = 0; i < c.matrix.rows(); ++i) {
    const double v = c.matrix(i, i);
    if (v > 0.0 && std::isfinite(v)) se.emplace_back(std::sqrt(v));
    else se.emplace_back(std::nullopt);
  }
  return se;
}

}  // namespace tpot::opt
