#pragma once

// Points on S^d, rotations in SO(d+1), and product quadrature rules on both.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace sphdeconv {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

//! Surface area nu(S^d) = 2 pi^{(d+1)/2} / Gamma((d+1)/2).
inline double sphere_area(int d) {
  if (d < 1) throw DomainError("sphere dimension must be >= 1");
  return 2.0 * std::pow(kPi, 0.5 * (d + 1)) / std::tgamma(0.5 * (d + 1));
}

namespace detail {

inline double wrap_angle(double phi) {
  phi = std::fmod(phi, kTwoPi);
  if (phi < 0.0) phi += kTwoPi;
  if (phi >= kTwoPi) phi = 0.0;
  return phi + 0.0; // drop negative zero
}

} // namespace detail

/// A point on the unit hypersphere S^d.
///
/// Coordinates follow the hyperspherical map
///   x = (cos(phi) prod_k sin(theta_k), sin(phi) prod_k sin(theta_k),
///        cos(theta_1) prod_{k>=2} sin(theta_k), ..., cos(theta_{d-1})),
/// and the cached angles are always the canonical representative derived
/// from the stored unit vector (lower angles are zero at singularities).
class SpherePoint {
public:
  SpherePoint() = default;

  //! Normalizes `coords`; throws DomainError on a zero or non-finite vector.
  static SpherePoint from_coords(std::vector<double> coords) {
    if (coords.size() < 2) throw DomainError("a point on S^d needs at least 2 coordinates");
    double norm2 = 0.0;
    for (double c : coords) {
      if (!std::isfinite(c)) throw DomainError("non-finite coordinate");
      norm2 += c * c;
    }
    if (norm2 <= 0.0) throw DomainError("cannot normalize the zero vector");
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& c : coords) c *= inv;
    SpherePoint p;
    p.coords_ = std::move(coords);
    p.compute_angles();
    return p;
  }

  int dim() const { return static_cast<int>(coords_.size()) - 1; }
  const std::vector<double>& coords() const { return coords_; }
  double operator[](std::size_t i) const { return coords_[i]; }
  double phi() const { return phi_; }
  //! theta_1 .. theta_{d-1}; empty for d = 1.
  const std::vector<double>& thetas() const { return thetas_; }
  //! Polar angle theta_{d-1} measured from the last axis (d >= 2).
  double polar() const { return thetas_.back(); }

private:
  void compute_angles() {
    const int d = dim();
    thetas_.assign(static_cast<std::size_t>(d - 1), 0.0);
    // Running norm of the leading coordinates x_0..x_k.
    std::vector<double> lead(static_cast<std::size_t>(d + 1));
    double acc = 0.0;
    for (int k = 0; k <= d; ++k) {
      acc += coords_[k] * coords_[k];
      lead[k] = std::sqrt(acc);
    }
    for (int k = d - 1; k >= 1; --k) {
      thetas_[k - 1] = std::atan2(lead[k], coords_[k + 1]) + 0.0;
    }
    phi_ = detail::wrap_angle(std::atan2(coords_[1], coords_[0]));
  }

  std::vector<double> coords_;
  double phi_ = 0.0;
  std::vector<double> thetas_;
};

//! Builds a point from hyperspherical angles. phi in [0, 2pi), each theta in [0, pi].
inline SpherePoint from_angles(int d, double phi, std::span<const double> theta) {
  if (d < 1) throw DomainError("sphere dimension must be >= 1");
  if (static_cast<int>(theta.size()) != d - 1)
    throw DomainError("expected " + std::to_string(d - 1) + " polar angles");
  if (!(phi >= 0.0 && phi < kTwoPi)) throw DomainError("phi outside [0, 2pi)");
  for (double t : theta)
    if (!(t >= 0.0 && t <= kPi)) throw DomainError("theta outside [0, pi]");

  std::vector<double> x(static_cast<std::size_t>(d + 1));
  // Suffix products of sin(theta_k).
  std::vector<double> tail(static_cast<std::size_t>(d + 1), 1.0);
  for (int k = d - 1; k >= 1; --k) tail[k] = tail[k + 1] * std::sin(theta[k - 1]);
  // tail[k] = prod_{j>=k} sin(theta_j); tail[d] = 1
  x[0] = std::cos(phi) * tail[1];
  x[1] = std::sin(phi) * tail[1];
  for (int k = 1; k <= d - 1; ++k) x[k + 1] = std::cos(theta[k - 1]) * tail[k + 1];
  return SpherePoint::from_coords(std::move(x));
}

inline SpherePoint from_angles(int d, double phi, std::initializer_list<double> theta) {
  return from_angles(d, phi, std::span<const double>(theta.begin(), theta.size()));
}

struct HypersphericalAngles {
  double phi;
  std::vector<double> theta;
};

inline HypersphericalAngles to_angles(const SpherePoint& p) { return {p.phi(), p.thetas()}; }

/// An element of SO(d+1).
class Rotation {
public:
  Rotation() = default;

  static Rotation identity(int d) {
    Rotation r;
    r.matrix_ = Eigen::MatrixXd::Identity(d + 1, d + 1);
    if (d == 2) r.euler_ = std::array<double, 3>{0.0, 0.0, 0.0};
    return r;
  }

  //! Validates orthogonality and unit determinant to `tol`.
  static Rotation from_matrix(Eigen::MatrixXd m, double tol = 1e-10) {
    if (m.rows() != m.cols() || m.rows() < 2) throw DomainError("rotation matrix must be square, size >= 2");
    const Eigen::Index k = m.rows();
    const double defect = (m.transpose() * m - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
    if (defect > tol) throw DomainError("matrix is not orthogonal");
    if (std::abs(m.determinant() - 1.0) > tol) throw DomainError("matrix determinant is not 1");
    Rotation r;
    r.matrix_ = std::move(m);
    return r;
  }

  //! SO(2) element rotating counter-clockwise by `phi`.
  static Rotation planar(double phi) {
    Rotation r;
    r.matrix_.resize(2, 2);
    const double c = std::cos(phi), s = std::sin(phi);
    r.matrix_ << c, -s, s, c;
    return r;
  }

  int dim() const { return static_cast<int>(matrix_.rows()) - 1; }
  const Eigen::MatrixXd& matrix() const { return matrix_; }

  //! Angle of an SO(2) element in [0, 2pi).
  double angle() const {
    if (dim() != 1) throw DomainError("angle() requires d = 1");
    return detail::wrap_angle(std::atan2(matrix_(1, 0), matrix_(0, 0)));
  }

  //! ZYZ Euler angles (phi, theta, psi) with u = R(phi) S(theta) R(psi).
  std::array<double, 3> euler() const {
    if (dim() != 2) throw DomainError("euler() requires d = 2");
    if (euler_) return *euler_;
    const auto& m = matrix_;
    const double ct = std::clamp(m(2, 2), -1.0, 1.0);
    const double st = std::hypot(m(0, 2), m(1, 2));
    double phi, theta, psi;
    if (st > 1e-12) {
      theta = std::atan2(st, ct);
      phi = std::atan2(m(1, 2), m(0, 2));
      psi = std::atan2(m(2, 1), -m(2, 0));
    } else if (ct > 0.0) {
      theta = 0.0;
      psi = 0.0;
      phi = std::atan2(m(1, 0), m(0, 0));
    } else {
      theta = kPi;
      psi = 0.0;
      phi = std::atan2(-m(1, 0), -m(0, 0));
    }
    return {detail::wrap_angle(phi), theta, detail::wrap_angle(psi)};
  }

  Rotation inverse() const {
    Rotation r;
    r.matrix_ = matrix_.transpose();
    return r;
  }

  friend Rotation operator*(const Rotation& a, const Rotation& b) {
    if (a.dim() != b.dim()) throw DomainError("rotation dimension mismatch");
    Rotation r;
    r.matrix_ = a.matrix_ * b.matrix_;
    return r;
  }

private:
  friend Rotation rotation_from_euler(double, double, double);
  Eigen::MatrixXd matrix_;
  std::optional<std::array<double, 3>> euler_;
};

namespace detail {

inline Eigen::Matrix3d about_z(double t) {
  Eigen::Matrix3d m;
  const double c = std::cos(t), s = std::sin(t);
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}

inline Eigen::Matrix3d about_y(double t) {
  Eigen::Matrix3d m;
  const double c = std::cos(t), s = std::sin(t);
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}

} // namespace detail

//! u = R(phi) S(theta) R(psi); phi, psi in [0, 2pi), theta in [0, pi].
inline Rotation rotation_from_euler(double phi, double theta, double psi) {
  if (!(phi >= 0.0 && phi < kTwoPi) || !(psi >= 0.0 && psi < kTwoPi))
    throw DomainError("Euler angle phi/psi outside [0, 2pi)");
  if (!(theta >= 0.0 && theta <= kPi)) throw DomainError("Euler angle theta outside [0, pi]");
  Rotation r;
  r.matrix_ = detail::about_z(phi) * detail::about_y(theta) * detail::about_z(psi);
  r.euler_ = std::array<double, 3>{phi, theta, psi};
  return r;
}

//! Rotation of angle `angle` about the unit axis `axis` (Rodrigues).
inline Rotation rotation_from_axis_angle(const Eigen::Vector3d& axis, double angle) {
  const Eigen::Vector3d a = axis.normalized();
  Eigen::Matrix3d k;
  k << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  const Eigen::Matrix3d m =
      Eigen::Matrix3d::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * (k * k);
  return Rotation::from_matrix(Eigen::MatrixXd(m), 1e-9);
}

inline SpherePoint apply(const Rotation& u, const SpherePoint& x) {
  if (u.dim() != x.dim()) throw DomainError("rotation and point dimensions differ");
  const Eigen::Map<const Eigen::VectorXd> v(x.coords().data(), x.dim() + 1);
  const Eigen::VectorXd y = u.matrix() * v;
  return SpherePoint::from_coords(std::vector<double>(y.data(), y.data() + y.size()));
}

// ---------------------------------------------------------------------------
// Quadrature

struct SphereQuadrature {
  int dim = 0;
  std::vector<SpherePoint> nodes;
  std::vector<double> weights; // sum = nu(S^d)

  template <class F> auto integrate(F&& f) const {
    using R = decltype(f(nodes.front()));
    R acc{};
    for (std::size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * f(nodes[i]);
    return acc;
  }
};

struct RotationQuadrature {
  int dim = 0;
  std::vector<Rotation> nodes;
  std::vector<double> weights; // sum = 1 (normalized Haar measure)

  template <class F> auto integrate(F&& f) const {
    using R = decltype(f(nodes.front()));
    R acc{};
    for (std::size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * f(nodes[i]);
    return acc;
  }
};

struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

//! Gauss-Legendre nodes/weights on [-1, 1] (Newton iteration on P_n).
inline GaussRule gauss_legendre(int n) {
  if (n < 1) throw DomainError("Gauss-Legendre needs n >= 1");
  GaussRule g;
  g.nodes.resize(n);
  g.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    g.nodes[i] = -x;
    g.nodes[n - 1 - i] = x;
    g.weights[i] = w;
    g.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) g.nodes[n / 2] = 0.0;
  return g;
}

/// Product rule on S^d for d in {1, 2, 3}.
///
/// d=1: trapezoid in phi (`resolution` nodes). d=2: Gauss-Legendre in
/// cos(theta) times trapezoid in phi (2*resolution nodes). d=3 adds a
/// second-kind Gauss-Chebyshev rule for the sin^2 weight of theta_2.
inline SphereQuadrature product_quadrature(int d, int resolution) {
  if (d < 1 || d > 3) throw UnsupportedDimension(d);
  if (resolution < 4) throw DomainError("quadrature resolution must be >= 4");
  SphereQuadrature q;
  q.dim = d;
  if (d == 1) {
    const double w = kTwoPi / resolution;
    for (int k = 0; k < resolution; ++k) {
      q.nodes.push_back(from_angles(1, kTwoPi * k / resolution, {}));
      q.weights.push_back(w);
    }
    return q;
  }
  const int nphi = 2 * resolution;
  const double wphi = kTwoPi / nphi;
  const GaussRule gl = gauss_legendre(resolution);
  if (d == 2) {
    q.nodes.reserve(static_cast<std::size_t>(nphi) * resolution);
    for (int i = 0; i < resolution; ++i) {
      const double theta = std::acos(gl.nodes[i]);
      for (int k = 0; k < nphi; ++k) {
        q.nodes.push_back(from_angles(2, kTwoPi * k / nphi, {theta}));
        q.weights.push_back(gl.weights[i] * wphi);
      }
    }
    return q;
  }
  // d = 3: integral of g(t) sqrt(1 - t^2) dt with t = cos(theta_2).
  for (int j = 1; j <= resolution; ++j) {
    const double theta2 = kPi * j / (resolution + 1);
    const double s = std::sin(theta2);
    const double w2 = kPi / (resolution + 1) * s * s;
    for (int i = 0; i < resolution; ++i) {
      const double theta1 = std::acos(gl.nodes[i]);
      for (int k = 0; k < nphi; ++k) {
        q.nodes.push_back(from_angles(3, kTwoPi * k / nphi, {theta1, theta2}));
        q.weights.push_back(w2 * gl.weights[i] * wphi);
      }
    }
  }
  return q;
}

/// Product rule for the normalized Haar measure on SO(3) in Euler angles:
/// trapezoid in phi and psi, Gauss-Legendre in cos(theta), weight sin/(8 pi^2).
inline RotationQuadrature so3_quadrature(int resolution) {
  if (resolution < 4) throw DomainError("quadrature resolution must be >= 4");
  RotationQuadrature q;
  q.dim = 2;
  const GaussRule gl = gauss_legendre(resolution);
  const std::size_t total = static_cast<std::size_t>(resolution) * resolution * resolution;
  q.nodes.reserve(total);
  q.weights.reserve(total);
  const double base = 1.0 / (2.0 * resolution * resolution);
  for (int a = 0; a < resolution; ++a) {
    for (int i = 0; i < resolution; ++i) {
      const double theta = std::acos(gl.nodes[i]);
      for (int b = 0; b < resolution; ++b) {
        q.nodes.push_back(rotation_from_euler(kTwoPi * a / resolution, theta, kTwoPi * b / resolution));
        q.weights.push_back(gl.weights[i] * base);
      }
    }
  }
  return q;
}

//! Quasi-uniform Fibonacci lattice of `count` points on S^2.
inline std::vector<SpherePoint> fibonacci_lattice(int count) {
  if (count < 1) throw DomainError("lattice size must be positive");
  std::vector<SpherePoint> pts;
  pts.reserve(count);
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < count; ++k) {
    const double z = 1.0 - (2.0 * k + 1.0) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * k;
    pts.push_back(SpherePoint::from_coords({r * std::cos(phi), r * std::sin(phi), z}));
  }
  return pts;
}

} // namespace sphdeconv
