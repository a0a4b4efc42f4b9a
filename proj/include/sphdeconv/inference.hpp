#pragma once

// Pointwise confidence intervals: asymptotic normality (AN) and empirical
// likelihood (EL).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/tools/roots.hpp>

#include "error_model.hpp"
#include "errors.hpp"
#include "estimators.hpp"

namespace sphdeconv {

enum class IntervalMethod { AN, EL };

inline const char* to_string(IntervalMethod m) { return m == IntervalMethod::AN ? "AN" : "EL"; }

struct ConfidenceInterval {
  double center = 0.0;
  double low = 0.0;
  double high = 0.0;
  double level = 0.95;
  IntervalMethod method = IntervalMethod::AN;
  bool degenerate = false;
  double se = 0.0;  // s_hat / sqrt(n)

  double length() const { return high - low; }
  bool contains(double v) const { return low <= v && v <= high; }
};

struct ElResult {
  double log_el = 0.0;
  double lambda = 0.0;
  bool feasible = true;
};

struct ElProfile {
  std::vector<double> theta;
  std::vector<double> log_el;
  std::vector<double> lambda;
};

//! Upper alpha/2 standard normal quantile for a two-sided interval at `level`.
inline double normal_critical(double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("confidence level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + 0.5 * level);
}

//! Upper (1 - level) quantile of chi-square with one degree of freedom.
inline double chi2_critical(double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("confidence level must lie in (0, 1)");
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(1.0), level);
}

//! Warning text for models outside the ordinary-smooth theory, if any.
inline std::optional<std::string> scenario_warning(const ErrorModel& m) {
  const Scenario s = m.smoothness().scenario;
  if (s == Scenario::S1) return std::nullopt;
  return std::string("interval theory covers ordinary-smooth errors only; model ") + m.name() + " is " + to_string(s);
}

// ---------------------------------------------------------------------------
// AN intervals from a kernel row K_i = Re K_T(x, Z_i)

inline ConfidenceInterval an_interval_density_row(std::span<const double> K, double level) {
  const std::size_t n = K.size();
  if (n < 2) throw DomainError("interval needs n >= 2");
  double s = 0.0, s2 = 0.0;
  for (double k : K) {
    s += k;
    s2 += k * k;
  }
  const double nn = static_cast<double>(n);
  const double f = s / nn;
  // n^{-1} sum K_i^2 - f^2, accumulated in centered form.
  double var = 0.0;
  for (double k : K) var += (k - f) * (k - f);
  var /= nn;
  ConfidenceInterval ci;
  ci.method = IntervalMethod::AN;
  ci.level = level;
  ci.center = f;
  if (var <= 1e-24 * s2 / nn) {
    var = 0.0;
    ci.degenerate = true;
  }
  ci.se = std::sqrt(var / nn);
  const double h = normal_critical(level) * ci.se;
  ci.low = f - h;
  ci.high = f + h;
  return ci;
}

inline ConfidenceInterval an_interval_regression_row(std::span<const double> K, std::span<const double> Y, double level,
                                                     double floor) {
  const std::size_t n = K.size();
  if (n < 2) throw DomainError("interval needs n >= 2");
  if (Y.size() != n) throw DomainError("response length does not match kernel row");
  const double nn = static_cast<double>(n);
  double den = 0.0, num = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    den += K[i];
    num += K[i] * Y[i];
  }
  const double f = den / nn, m = num / den;
  ConfidenceInterval ci;
  ci.method = IntervalMethod::AN;
  ci.level = level;
  ci.center = m;
  double resid = 0.0, q = 0.0, scale = 0.0, q0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = K[i] * (Y[i] - m);
    resid += t;
    q += t * t;
    scale += std::abs(K[i] * Y[i]);
    q0 += K[i] * K[i] * (Y[i] * Y[i] + m * m);
  }
  // sum_i K_i (Y_i - m_hat) vanishes by construction; rounding only.
  if (!(std::abs(resid) <= 1e-9 * nn + 1e-13 * scale) || !(std::abs(f) >= floor) || !std::isfinite(m)) {
    ci.degenerate = true;
    ci.low = ci.high = m;
    return ci;
  }
  if (q <= 1e-24 * q0) {
    ci.degenerate = true;
    ci.low = ci.high = m;
    return ci;
  }
  const double var = q / nn / (f * f);
  ci.se = std::sqrt(var / nn);
  const double h = normal_critical(level) * ci.se;
  ci.low = m - h;
  ci.high = m + h;
  return ci;
}

// ---------------------------------------------------------------------------
// Empirical likelihood

/// log EL = -sum log(1 + lambda F_i) where lambda solves
/// sum F_i / (1 + lambda F_i) = 0 on the interval keeping every weight
/// 1 / (n (1 + lambda F_i)) in (0, 1]. If 0 is outside the convex hull of F
/// the ratio is zero (log EL = -inf).
inline ElResult el_log_ratio(std::span<const double> F, double lambda0 = 0.0) {
  const std::size_t n = F.size();
  if (n < 2) throw DomainError("empirical likelihood needs n >= 2");
  double fmin = F[0], fmax = F[0];
  for (double v : F) {
    fmin = std::min(fmin, v);
    fmax = std::max(fmax, v);
  }
  if (fmin == 0.0 && fmax == 0.0) return {};
  if (fmin >= 0.0 || fmax <= 0.0) return {-std::numeric_limits<double>::infinity(), 0.0, false};
  const double nn = static_cast<double>(n);
  double lo = (1.0 / nn - 1.0) / fmax, hi = (1.0 / nn - 1.0) / fmin;
  const auto eval = [&](double lam, double& g, double& dg) {
    g = 0.0;
    dg = 0.0;
    for (double v : F) {
      const double r = v / (1.0 + lam * v);
      g += r;
      dg -= r * r;
    }
  };
  double lam = (lambda0 > lo && lambda0 < hi) ? lambda0 : 0.0;
  const double tol = 1e-10 * nn;
  double g, dg;
  for (int it = 0; it < 500; ++it) {
    eval(lam, g, dg);
    if (std::abs(g) < tol) break;
    // g is decreasing in lambda: the root lies right of lam when g > 0.
    if (g > 0.0) lo = lam;
    else hi = lam;
    double next = lam - g / dg;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == lam || hi - lo <= 1e-15 * std::max(std::abs(lo), std::abs(hi))) break;
    lam = next;
  }
  double log_el = 0.0;
  for (double v : F) log_el -= std::log1p(lam * v);
  return {std::min(0.0, log_el), lam, true};
}

namespace detail {

//! EL interval around theta_hat from F(theta) built by `make_F`.
template <class MakeF>
ConfidenceInterval el_interval(MakeF&& make_F, std::size_t n, double theta_hat, double step, double level) {
  ConfidenceInterval ci;
  ci.method = IntervalMethod::EL;
  ci.level = level;
  ci.center = theta_hat;
  ci.se = step;
  ci.low = ci.high = theta_hat;
  if (!(step > 0.0) || !std::isfinite(theta_hat)) {
    ci.degenerate = true;
    return ci;
  }
  const double crit = chi2_critical(level);
  std::vector<double> F(n);
  double lam_warm = 0.0;
  const auto stat = [&](double theta) {
    make_F(theta, F);
    const ElResult r = el_log_ratio(F, lam_warm);
    if (!r.feasible) return std::numeric_limits<double>::infinity();
    lam_warm = r.lambda;
    return -2.0 * r.log_el;
  };
  if (!std::isfinite(stat(theta_hat))) {
    ci.degenerate = true;
    return ci;
  }
  const double big = 1e6 * crit;
  for (int side : {-1, 1}) {
    lam_warm = 0.0;
    double inner = theta_hat, outer = theta_hat;
    double h = step;
    bool crossed = false;
    for (int k = 0; k < 200; ++k) {
      outer = theta_hat + side * h;
      if (stat(outer) >= crit) {
        crossed = true;
        break;
      }
      inner = outer;
      h *= 2.0;
    }
    if (!crossed) {
      ci.degenerate = true;
      (side < 0 ? ci.low : ci.high) = outer;
      continue;
    }
    const auto g = [&](double theta) { return std::min(stat(theta), big) - crit; };
    double a = std::min(inner, outer), b = std::max(inner, outer);
    double fa = g(a), fb = g(b);
    if (fa == 0.0) {
      (side < 0 ? ci.low : ci.high) = a;
      continue;
    }
    if (fb == 0.0) {
      (side < 0 ? ci.low : ci.high) = b;
      continue;
    }
    std::uintmax_t iters = 200;
    const auto tolf = [](double x, double y) { return std::abs(x - y) < 1e-9; };
    const auto root = boost::math::tools::toms748_solve(g, a, b, fa, fb, tolf, iters);
    (side < 0 ? ci.low : ci.high) = 0.5 * (root.first + root.second);
  }
  return ci;
}

} // namespace detail

inline ConfidenceInterval el_interval_density_row(std::span<const double> K, double level) {
  const ConfidenceInterval an = an_interval_density_row(K, level);
  return detail::el_interval(
      [&](double theta, std::vector<double>& F) {
        for (std::size_t i = 0; i < K.size(); ++i) F[i] = K[i] - theta;
      },
      K.size(), an.center, an.se, level);
}

inline ConfidenceInterval el_interval_regression_row(std::span<const double> K, std::span<const double> Y, double level,
                                                     double floor) {
  const ConfidenceInterval an = an_interval_regression_row(K, Y, level, floor);
  if (an.degenerate) {
    ConfidenceInterval ci = an;
    ci.method = IntervalMethod::EL;
    return ci;
  }
  return detail::el_interval(
      [&](double theta, std::vector<double>& F) {
        for (std::size_t i = 0; i < K.size(); ++i) F[i] = K[i] * (Y[i] - theta);
      },
      K.size(), an.center, an.se, level);
}

inline ElProfile el_profile_density(std::span<const double> K, std::span<const double> thetas) {
  ElProfile p;
  std::vector<double> F(K.size());
  for (double t : thetas) {
    for (std::size_t i = 0; i < K.size(); ++i) F[i] = K[i] - t;
    const ElResult r = el_log_ratio(F);
    p.theta.push_back(t);
    p.log_el.push_back(r.log_el);
    p.lambda.push_back(r.lambda);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Single-point wrappers

namespace detail {

inline std::vector<double> kernel_row(const DeconvKernel& k, const SpherePoint& x, std::span<const SpherePoint> Z) {
  std::vector<double> row(Z.size());
  const SpherePoint nodes[1] = {x};
  for_each_kernel_rows(k, std::span<const SpherePoint>(nodes), Z, [&](std::size_t, const Eigen::MatrixXd& r) {
    for (std::size_t i = 0; i < Z.size(); ++i) row[i] = r(0, static_cast<Eigen::Index>(i));
  });
  return row;
}

inline void check_interval_input(const Dataset& data, const DeconvKernel& k, bool response) {
  data.validate(2);
  if (data.d != k.dim()) throw DomainError("dataset and kernel dimensions differ");
  if (response && !data.has_response()) throw DomainError("regression interval requires responses");
}

} // namespace detail

inline ConfidenceInterval an_interval_density(const Dataset& data, const DeconvKernel& k, const SpherePoint& x,
                                              double level) {
  detail::check_interval_input(data, k, false);
  return an_interval_density_row(detail::kernel_row(k, x, data.Z), level);
}

inline ConfidenceInterval an_interval_regression(const Dataset& data, const DeconvKernel& k, const SpherePoint& x,
                                                 double level) {
  detail::check_interval_input(data, k, true);
  return an_interval_regression_row(detail::kernel_row(k, x, data.Z), data.Y, level, density_floor(data.d));
}

inline ConfidenceInterval el_interval_density(const Dataset& data, const DeconvKernel& k, const SpherePoint& x,
                                              double level) {
  detail::check_interval_input(data, k, false);
  return el_interval_density_row(detail::kernel_row(k, x, data.Z), level);
}

inline ConfidenceInterval el_interval_regression(const Dataset& data, const DeconvKernel& k, const SpherePoint& x,
                                                 double level) {
  detail::check_interval_input(data, k, true);
  return el_interval_regression_row(detail::kernel_row(k, x, data.Z), data.Y, level, density_floor(data.d));
}

/// Fills s1 (density) or s2 (regression), ci_low, ci_high and degenerate on
/// an estimate grid. Regression is used when the grid carries m_hat.
inline void attach_intervals(EstimateGrid& g, const Dataset& data, const DeconvKernel& k, double level,
                             IntervalMethod method) {
  const bool regression = !g.m_hat.empty();
  detail::check_interval_input(data, k, regression);
  const std::size_t G = g.size();
  const double sqrt_n = std::sqrt(static_cast<double>(data.size()));
  g.ci_low.assign(G, 0.0);
  g.ci_high.assign(G, 0.0);
  g.degenerate.assign(G, 0);
  (regression ? g.s2 : g.s1).assign(G, 0.0);
  const double floor = density_floor(data.d);
  std::vector<double> row(data.size());
  for_each_kernel_rows(k, g.nodes, data.Z, [&](std::size_t g0, const Eigen::MatrixXd& rows) {
    for (Eigen::Index j = 0; j < rows.rows(); ++j) {
      for (std::size_t i = 0; i < row.size(); ++i) row[i] = rows(j, static_cast<Eigen::Index>(i));
      ConfidenceInterval ci;
      if (regression)
        ci = method == IntervalMethod::AN ? an_interval_regression_row(row, data.Y, level, floor)
                                          : el_interval_regression_row(row, data.Y, level, floor);
      else
        ci = method == IntervalMethod::AN ? an_interval_density_row(row, level) : el_interval_density_row(row, level);
      const std::size_t idx = g0 + static_cast<std::size_t>(j);
      // Row means and coefficient-space estimates differ by round-off; re-center on the grid value.
      const double est = regression ? g.m_hat[idx] : g.f_hat[idx];
      const double shift = est - ci.center;
      const bool recenter = std::isfinite(shift) && std::abs(shift) <= 1e-9 * (1.0 + std::abs(est));
      g.ci_low[idx] = recenter ? ci.low + shift : ci.low;
      g.ci_high[idx] = recenter ? ci.high + shift : ci.high;
      if (recenter && ci.degenerate) g.ci_low[idx] = g.ci_high[idx] = est;
      g.degenerate[idx] = ci.degenerate;
      (regression ? g.s2 : g.s1)[idx] = ci.se * sqrt_n;
    }
  });
}

} // namespace sphdeconv
