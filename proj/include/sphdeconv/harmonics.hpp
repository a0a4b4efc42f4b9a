#pragma once

// Orthonormal spherical-harmonic bases B^l_q on S^d and Wigner small-d matrices.
//
// Index convention: q runs 1..N(d,l). For d = 2 the classical order is
// m = q - l - 1. Vectors returned here are 0-based, so entry q-1 holds B^l_q.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "sphere_geom.hpp"

namespace sphdeconv {

using cplx = std::complex<double>;

inline constexpr int kWignerDegreeCap = 128;  // d = 2
inline constexpr int kGeneralDegreeCap = 64;  // d >= 3

//! Stability cap on the degree for S^d; d = 1 has none.
inline int degree_cap(int d) {
  if (d == 1) return 1 << 20;
  return d == 2 ? kWignerDegreeCap : kGeneralDegreeCap;
}

namespace detail {

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // r * (n - k + i) is divisible by i at every step.
    r = r / i * (n - k + i) + r % i * (n - k + i) / i;
  }
  return r;
}

inline long double log_factorial(int k) {
  static const std::vector<long double> table = [] {
    std::vector<long double> t(2 * kWignerDegreeCap + 8);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::lgamma(static_cast<long double>(i) + 1.0L);
    return t;
  }();
  if (k < static_cast<int>(table.size())) return table[k];
  return std::lgamma(static_cast<long double>(k) + 1.0L);
}

} // namespace detail

//! Dimension of the degree-l harmonic space on S^d.
inline long long n_dl(int d, int l) {
  if (d < 1 || l < 0) throw DomainError("n_dl requires d >= 1, l >= 0");
  const auto c = [d](int m) -> long long {
    return m < 0 ? 0 : static_cast<long long>(detail::binomial(static_cast<std::uint64_t>(m + d),
                                                               static_cast<std::uint64_t>(d)));
  };
  return c(l) - c(l - 2);
}

//! Number of basis functions of degree 0..L.
inline long long basis_size(int d, int L) {
  long long s = 0;
  for (int l = 0; l <= L; ++l) s += n_dl(d, l);
  return s;
}

/// One entry d^l_{qr}(theta) by the explicit alternating sum, evaluated in
/// long double with log-factorials. Exact to rounding for small l; the sum
/// cancels catastrophically for large l, so it only seeds the recursion and
/// serves as a reference for low degrees.
inline double wigner_d_explicit(int l, int q, int r, double theta) {
  const long double c = std::cos(0.5L * theta);
  const long double s = std::sin(0.5L * theta);
  const long double logc = 0.5L * (detail::log_factorial(2 * l + 1 - q) + detail::log_factorial(q - 1) +
                                   detail::log_factorial(2 * l + 1 - r) + detail::log_factorial(r - 1));
  const int kmin = std::max(0, r - q);
  const int kmax = std::min(2 * l + 1 - q, r - 1);
  long double sum = 0.0L;
  for (int k = kmin; k <= kmax; ++k) {
    const int a = 2 * l - 2 * k + r - q;
    const int b = 2 * k + q - r;
    if ((a > 0 && c == 0.0L) || (b > 0 && s == 0.0L)) continue;
    long double lg = logc - detail::log_factorial(2 * l + 1 - q - k) - detail::log_factorial(r - 1 - k) -
                     detail::log_factorial(k + q - r) - detail::log_factorial(k);
    if (a > 0) lg += a * std::log(std::abs(c));
    if (b > 0) lg += b * std::log(std::abs(s));
    long double term = std::exp(lg);
    if ((k + q - r) % 2 != 0) term = -term;
    if (a % 2 != 0 && c < 0) term = -term;
    if (b % 2 != 0 && s < 0) term = -term;
    sum += term;
  }
  return static_cast<double>(sum);
}

namespace detail {

// Three-term recurrence in the degree for fixed orders (mp, m):
// (l-1) sqrt((l^2-m^2)(l^2-mp^2)) d^l = (2l-1)(l(l-1) cos - m mp) d^{l-1}
//                                      - l sqrt(((l-1)^2-m^2)((l-1)^2-mp^2)) d^{l-2}
inline double wigner_step(int l, int mp, int m, double ct, double dl1, double dl2) {
  const double L = l, mm = m, mpp = mp;
  const double a = (2.0 * L - 1.0) * (L * (L - 1.0) * ct - mm * mpp);
  const double b = L * std::sqrt(((L - 1) * (L - 1) - mm * mm) * ((L - 1) * (L - 1) - mpp * mpp));
  const double den = (L - 1.0) * std::sqrt((L * L - mm * mm) * (L * L - mpp * mpp));
  return (a * dl1 - b * dl2) / den;
}

//! Runs the recurrence for (mp, m) from its lowest degree up to L, calling sink(l, value).
template <class Sink> void wigner_orders(int L, int mp, int m, double theta, Sink&& sink) {
  const int l0 = std::max(std::abs(m), std::abs(mp));
  if (l0 > L) return;
  const double ct = std::cos(theta);
  double d2 = wigner_d_explicit(l0, mp + l0 + 1, m + l0 + 1, theta);
  sink(l0, d2);
  if (l0 + 1 > L) return;
  double d1 = wigner_d_explicit(l0 + 1, mp + l0 + 2, m + l0 + 2, theta);
  sink(l0 + 1, d1);
  for (int l = l0 + 2; l <= L; ++l) {
    const double v = wigner_step(l, mp, m, ct, d1, d2);
    sink(l, v);
    d2 = d1;
    d1 = v;
  }
}

} // namespace detail

/// Real (2l+1)x(2l+1) Wigner small-d matrix; entry (q, r) is 1-based.
struct WignerSmallD {
  int degree = 0;
  Eigen::MatrixXd values;
  double operator()(int q, int r) const { return values(q - 1, r - 1); }
};

inline WignerSmallD wigner_small_d(int l, double theta) {
  if (l < 0) throw DomainError("negative degree");
  if (l > kWignerDegreeCap) throw DegreeOverflow(l, kWignerDegreeCap);
  WignerSmallD out{l, Eigen::MatrixXd::Zero(2 * l + 1, 2 * l + 1)};
  for (int mp = -l; mp <= l; ++mp) {
    for (int m = -l; m <= l; ++m) {
      detail::wigner_orders(l, mp, m, theta, [&](int deg, double v) {
        if (deg == l) out.values(mp + l, m + l) = v;
      });
    }
  }
  return out;
}

//! d^0(theta) .. d^L(theta) in one sweep.
inline std::vector<Eigen::MatrixXd> wigner_small_d_upto(int L, double theta) {
  if (L > kWignerDegreeCap) throw DegreeOverflow(L, kWignerDegreeCap);
  std::vector<Eigen::MatrixXd> out;
  out.reserve(L + 1);
  for (int l = 0; l <= L; ++l) out.push_back(Eigen::MatrixXd::Zero(2 * l + 1, 2 * l + 1));
  for (int mp = -L; mp <= L; ++mp) {
    for (int m = -L; m <= L; ++m) {
      detail::wigner_orders(L, mp, m, theta, [&](int deg, double v) { out[deg](mp + deg, m + deg) = v; });
    }
  }
  return out;
}

/// Central columns d^l_{q(l+1)}(theta), l = 0..L, concatenated degree-major
/// (offset l^2, 2l+1 entries each).
inline std::vector<double> wigner_center_columns(int L, double theta) {
  std::vector<double> out(static_cast<std::size_t>(L + 1) * (L + 1));
  for (int mp = 0; mp <= L; ++mp) {
    const double sign = (mp % 2 == 0) ? 1.0 : -1.0; // d^l_{-m',0} = (-1)^{m'} d^l_{m',0}
    detail::wigner_orders(L, mp, 0, theta, [&](int deg, double v) {
      const std::size_t base = static_cast<std::size_t>(deg) * deg + deg;
      out[base + mp] = v;
      out[base - mp] = sign * v;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bases

namespace detail {

//! Normalized Gegenbauer P_{n,D}(t) = C_n^{(D-2)/2}(t) / C_n^{(D-2)/2}(1), n = 0..N.
inline void legendre_dimension(int N, int D, double t, std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(N + 1), 0.0);
  out[0] = 1.0;
  if (N >= 1) out[1] = t;
  for (int n = 2; n <= N; ++n) {
    out[n] = ((2.0 * n + D - 4.0) * t * out[n - 1] - (n - 1.0) * out[n - 2]) / (n + D - 3.0);
  }
}

//! log of the normalizing constant of P~_{l,d+1,j}.
inline double log_assoc_norm(int d, int l, int j) {
  return 0.5 * (std::log(2.0 * l + d - 1.0) + std::lgamma(l + d + j - 1.0)) -
         (0.5 * (d - 1) + j) * std::log(2.0) - 0.5 * std::lgamma(l - j + 1.0) - std::lgamma(j + 0.5 * d);
}

} // namespace detail

/// Evaluates all basis functions of degree 0..L at a point of S^d.
///
/// Output layout is degree-major: degree l occupies [offset(l), offset(l) + N(d,l)).
/// For d >= 3 the entries of one degree are ordered by (j ascending, r
/// ascending), where j is the degree of the S^{d-1} factor.
class BasisEvaluator {
public:
  BasisEvaluator(int d, int L) : d_(d), L_(L) {
    if (d < 1) throw DomainError("sphere dimension must be >= 1");
    if (L < 0) throw DomainError("negative degree");
    if (L > degree_cap(d)) throw DegreeOverflow(L, degree_cap(d));
    offsets_.resize(static_cast<std::size_t>(L + 2));
    offsets_[0] = 0;
    for (int l = 0; l <= L; ++l) offsets_[l + 1] = offsets_[l] + static_cast<std::size_t>(n_dl(d, l));
    if (d >= 3) {
      sub_ = std::make_shared<BasisEvaluator>(d - 1, L);
      lognorm_.resize(static_cast<std::size_t>(L + 1) * (L + 1));
      for (int l = 0; l <= L; ++l)
        for (int j = 0; j <= l; ++j) lognorm_[static_cast<std::size_t>(l) * (L + 1) + j] = detail::log_assoc_norm(d, l, j);
    }
  }

  int dim() const { return d_; }
  int max_degree() const { return L_; }
  std::size_t size() const { return offsets_.back(); }
  std::size_t offset(int l) const { return offsets_[l]; }
  std::size_t degree_size(int l) const { return offsets_[l + 1] - offsets_[l]; }

  void operator()(const SpherePoint& x, std::span<cplx> out) const {
    if (x.dim() != d_) throw DomainError("point dimension does not match basis");
    if (out.size() < size()) throw DomainError("output buffer too small");
    if (d_ == 1) {
      out[0] = 1.0 / std::sqrt(kTwoPi);
      const double inv = 1.0 / std::sqrt(kPi);
      for (int l = 1; l <= L_; ++l) {
        out[2 * l - 1] = std::cos(l * x.phi()) * inv;
        out[2 * l] = std::sin(l * x.phi()) * inv;
      }
    } else if (d_ == 2) {
      eval_d2(x.phi(), x.polar(), out);
    } else {
      eval_general(x, out);
    }
  }

  std::vector<cplx> operator()(const SpherePoint& x) const {
    std::vector<cplx> v(size());
    (*this)(x, v);
    return v;
  }

private:
  void eval_d2(double phi, double theta, std::span<cplx> out) const {
    const std::vector<double> col = wigner_center_columns(L_, theta);
    // e^{i m phi} for m = 0..L
    std::vector<cplx> e(static_cast<std::size_t>(L_ + 1));
    const cplx step = std::polar(1.0, phi);
    e[0] = 1.0;
    for (int m = 1; m <= L_; ++m) e[m] = (m % 16 == 0) ? std::polar(1.0, m * phi) : e[m - 1] * step;
    for (int l = 0; l <= L_; ++l) {
      const double c = std::sqrt((2.0 * l + 1.0) / (4.0 * kPi));
      const std::size_t base = static_cast<std::size_t>(l) * l + l;
      for (int m = -l; m <= l; ++m) {
        const cplx em = m >= 0 ? e[m] : std::conj(e[-m]);
        out[base + m] = c * col[base + m] * em;
      }
    }
  }

  void eval_general(const SpherePoint& x, std::span<cplx> out) const {
    const auto& th = x.thetas();
    const double polar = th.back();
    const double t = std::cos(polar);
    const double s2 = std::sin(polar) * std::sin(polar);
    // Projected point on S^{d-1}: drop the last angle.
    const SpherePoint proj = from_angles(d_ - 1, x.phi(), std::span<const double>(th.data(), th.size() - 1));
    std::vector<cplx> sub(sub_->size());
    (*sub_)(proj, sub);

    std::vector<double> gp;
    for (int j = 0; j <= L_; ++j) {
      detail::legendre_dimension(L_ - j, d_ + 1 + 2 * j, t, gp);
      const std::size_t sub_off = sub_->offset(j);
      const std::size_t sub_n = sub_->degree_size(j);
      for (int l = j; l <= L_; ++l) {
        // Position of the j-block inside degree l.
        const std::size_t pos = offsets_[l] + (sub_->offset(j));
        double f = 0.0;
        if (j == 0 || s2 > 0.0) {
          const double lg = lognorm_[static_cast<std::size_t>(l) * (L_ + 1) + j] + (j > 0 ? 0.5 * j * std::log(s2) : 0.0);
          f = std::exp(lg) * gp[l - j];
        }
        for (std::size_t r = 0; r < sub_n; ++r) out[pos + r] = f * sub[sub_off + r];
      }
    }
  }

  int d_;
  int L_;
  std::vector<std::size_t> offsets_;
  std::shared_ptr<BasisEvaluator> sub_;
  std::vector<double> lognorm_;
};

inline std::vector<cplx> eval_basis_general(int d, int l, const SpherePoint& x) {
  if (d < 3) throw DomainError("eval_basis_general requires d >= 3");
  if (l > kGeneralDegreeCap) throw DegreeOverflow(l, kGeneralDegreeCap);
  const BasisEvaluator ev(d, l);
  const std::vector<cplx> all = ev(x);
  return {all.begin() + static_cast<std::ptrdiff_t>(ev.offset(l)), all.end()};
}

inline std::vector<cplx> eval_basis_d1(int l, const SpherePoint& x) {
  if (x.dim() != 1) throw DomainError("eval_basis_d1 requires a point on S^1");
  if (l < 1) throw DomainError("eval_basis_d1 requires l >= 1");
  const double inv = 1.0 / std::sqrt(kPi);
  return {cplx(std::cos(l * x.phi()) * inv, 0.0), cplx(std::sin(l * x.phi()) * inv, 0.0)};
}

inline std::vector<cplx> eval_basis_d2(int l, const SpherePoint& x) {
  if (x.dim() != 2) throw DomainError("eval_basis_d2 requires a point on S^2");
  if (l < 1) throw DomainError("eval_basis_d2 requires l >= 1");
  if (l > kWignerDegreeCap) throw DegreeOverflow(l, kWignerDegreeCap);
  const std::vector<double> col = wigner_center_columns(l, x.polar());
  const double c = std::sqrt((2.0 * l + 1.0) / (4.0 * kPi));
  std::vector<cplx> out(static_cast<std::size_t>(2 * l + 1));
  for (int q = 1; q <= 2 * l + 1; ++q) {
    const int m = q - l - 1;
    out[q - 1] = c * col[static_cast<std::size_t>(l) * l + (q - 1)] * std::polar(1.0, m * x.phi());
  }
  return out;
}

//! Degree-l basis vector at x for any d; l = 0 gives (nu(S^d))^{-1/2}.
inline std::vector<cplx> eval_basis(int d, int l, const SpherePoint& x) {
  if (x.dim() != d) throw DomainError("point dimension does not match d");
  if (l < 0) throw DomainError("negative degree");
  if (l == 0) return {cplx(1.0 / std::sqrt(sphere_area(d)), 0.0)};
  if (d == 1) return eval_basis_d1(l, x);
  if (d == 2) return eval_basis_d2(l, x);
  return eval_basis_general(d, l, x);
}

} // namespace sphdeconv
