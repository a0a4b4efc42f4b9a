#pragma once

// Measurement-error distributions on SO(d+1) and their smoothness classes.

#include <cmath>
#include <string>

#include "errors.hpp"
#include "sphere_geom.hpp"

namespace sphdeconv {

enum class ErrorKind { ErrorFree, Laplace, Gaussian, Rosenthal, VonMisesFisher };
enum class Scenario { S1, S2, S3 };

inline const char* to_string(Scenario s) {
  switch (s) {
  case Scenario::S1: return "S1";
  case Scenario::S2: return "S2";
  case Scenario::S3: return "S3";
  }
  return "?";
}

/// Growth class of the inverse transform norms.
/// S1: ordinary smooth of order beta. S2: super smooth (beta, alpha, gamma).
/// S3: log-super smooth (beta, alpha, gamma, xi1, xi2).
struct SmoothnessClass {
  Scenario scenario = Scenario::S1;
  double beta = 0.0;
  double alpha = 0.0;
  double gamma = 0.0;
  double xi1 = 0.0;
  double xi2 = 0.0;
};

namespace detail {

//! Integral over [a, b] of f using an n-point Gauss-Legendre rule.
template <class F> double gl_integrate(F&& f, double a, double b, int n) {
  const GaussRule g = gauss_legendre(n);
  const double h = 0.5 * (b - a), c = 0.5 * (b + a);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += g.weights[i] * f(c + h * g.nodes[i]);
  return s * h;
}

//! cos(a(pi - r)) / cos(a pi) with a = sqrt(1/4 - 1/lambda^2), analytically continued.
inline double so3_laplace_ratio(double lambda, double r) {
  const double disc = 0.25 - 1.0 / (lambda * lambda);
  if (disc >= 0.0) {
    const double a = std::sqrt(disc);
    return std::cos(a * (kPi - r)) / std::cos(a * kPi);
  }
  const double b = std::sqrt(-disc);
  return (std::exp(-b * r) + std::exp(-b * (kTwoPi - r))) / (1.0 + std::exp(-kTwoPi * b));
}

} // namespace detail

/// A named error distribution on SO(d+1). Densities are taken with respect
/// to the normalized Haar measure.
class ErrorModel {
public:
  static ErrorModel error_free(int d) {
    check_dim(d);
    ErrorModel m(ErrorKind::ErrorFree, d);
    m.smooth_ = {Scenario::S1, 0.0};
    return m;
  }

  static ErrorModel laplace(int d, double lambda) {
    check_dim(d);
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("Laplace lambda must be > 0");
    ErrorModel m(ErrorKind::Laplace, d);
    m.lambda_ = lambda;
    m.smooth_ = {Scenario::S1, 2.0};
    return m;
  }

  static ErrorModel gaussian(int d, double lambda) {
    check_dim(d);
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("Gaussian lambda must be > 0");
    ErrorModel m(ErrorKind::Gaussian, d);
    m.lambda_ = lambda;
    m.smooth_ = {Scenario::S2, 2.0, 0.0, 0.5 * lambda * lambda};
    return m;
  }

  //! Rotation by `theta` about a uniform axis, composed p times (SO(3) only, integer p >= 1).
  static ErrorModel rosenthal(double theta, int p) {
    if (!(theta > 0.0 && theta <= kPi)) throw DomainError("Rosenthal theta must lie in (0, pi]");
    if (p < 1) throw DomainError("Rosenthal p must be a positive integer");
    ErrorModel m(ErrorKind::Rosenthal, 2);
    m.theta_ = theta;
    m.p_ = p;
    m.smooth_ = {Scenario::S1, static_cast<double>(p)};
    return m;
  }

  //! Density exp(lambda Tr(A^T u)) / c on SO(2) or SO(3).
  static ErrorModel von_mises_fisher(int d, double lambda, const Rotation& A) {
    if (d != 1 && d != 2) throw UnsupportedModel("von Mises-Fisher errors are supported for d in {1, 2}");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("von Mises-Fisher lambda must be > 0");
    if (A.dim() != d) throw DomainError("orientation matrix has the wrong dimension");
    ErrorModel m(ErrorKind::VonMisesFisher, d);
    m.lambda_ = lambda;
    m.A_ = A;
    if (d == 1) {
      m.smooth_ = {Scenario::S3, 1.0, 0.0, 1.0, 1.0 + std::log(lambda), 1.0 + std::log(2.0 * lambda)};
      m.log_norm_ = std::log(detail::gl_integrate(
          [lambda](double t) { return std::exp(2.0 * lambda * (std::cos(t) - 1.0)); }, 0.0, kTwoPi, 256) / kTwoPi) +
          2.0 * lambda;
    } else {
      m.smooth_ = {Scenario::S3, 1.0, 4.0, 1.0, 1.0 + std::log(lambda), 1.0 + std::log(3.0 * lambda)};
      // Haar marginal of the rotation angle is (1 - cos r)/pi and Tr = 1 + 2 cos r.
      m.log_norm_ = std::log(detail::gl_integrate(
          [lambda](double r) { return std::exp(2.0 * lambda * (std::cos(r) - 1.0)) * (1.0 - std::cos(r)) / kPi; },
          0.0, kPi, 256)) + 3.0 * lambda;
    }
    return m;
  }

  static ErrorModel von_mises_fisher(int d, double lambda) {
    return von_mises_fisher(d, lambda, Rotation::identity(d));
  }

  ErrorKind kind() const { return kind_; }
  int dim() const { return d_; }
  double lambda() const { return lambda_; }
  double theta() const { return theta_; }
  int p() const { return p_; }
  const Rotation& orientation() const { return A_; }
  const SmoothnessClass& smoothness() const { return smooth_; }
  //! log c(lambda, A) for von Mises-Fisher errors.
  double log_normalizer() const { return log_norm_; }

  //! True when every transform block is a scalar multiple of the identity.
  bool scalar_blocks() const { return kind_ != ErrorKind::VonMisesFisher; }

  //! Class-function models on SO(3): density depends only on the rotation angle.
  bool class_function() const {
    return kind_ == ErrorKind::Laplace || kind_ == ErrorKind::Gaussian || kind_ == ErrorKind::Rosenthal ||
           (kind_ == ErrorKind::VonMisesFisher && (A_.matrix() - Eigen::MatrixXd::Identity(d_ + 1, d_ + 1)).norm() < 1e-14);
  }

  std::string name() const {
    switch (kind_) {
    case ErrorKind::ErrorFree: return "error-free";
    case ErrorKind::Laplace: return "laplace";
    case ErrorKind::Gaussian: return "gaussian";
    case ErrorKind::Rosenthal: return "rosenthal";
    case ErrorKind::VonMisesFisher: return "vmf";
    }
    return "?";
  }

  /// The scalar s_l with phi~^l(f_U) = s_l I for scalar-block models.
  double scalar_transform(int l) const {
    if (l < 0) throw DomainError("negative degree");
    const double ll = static_cast<double>(l) * (l + d_ - 1);
    switch (kind_) {
    case ErrorKind::ErrorFree: return 1.0;
    case ErrorKind::Laplace: return 1.0 / (1.0 + lambda_ * lambda_ * ll);
    case ErrorKind::Gaussian: return std::exp(-0.5 * lambda_ * lambda_ * ll);
    case ErrorKind::Rosenthal: {
      const double s = std::sin(0.5 * theta_);
      const double base = std::abs(s) < 1e-12 ? 1.0 : std::sin((2 * l + 1) * 0.5 * theta_) / ((2 * l + 1) * s);
      return std::pow(base, p_);
    }
    case ErrorKind::VonMisesFisher: break;
    }
    throw UnsupportedModel("von Mises-Fisher blocks are not scalar; use transform_blocks");
  }

  /// Density of the rotation angle r in [0, pi] (SO(3)) or [0, 2 pi) (SO(2))
  /// with respect to Lebesgue measure dr. For SO(3) this folds in the Haar
  /// marginal (1 - cos r)/pi.
  double angle_density(double r) const {
    if (d_ == 1) return so2_density(r) / kTwoPi;
    if (d_ != 2) throw UnsupportedModel("angle densities exist for d in {1, 2}");
    switch (kind_) {
    case ErrorKind::Laplace:
      return 2.0 / (lambda_ * lambda_) * std::sin(0.5 * r) * detail::so3_laplace_ratio(lambda_, r);
    case ErrorKind::Gaussian: {
      double s = 0.0;
      for (int l = 0;; ++l) {
        const double t = (2.0 * l + 1.0) * std::exp(-0.5 * lambda_ * lambda_ * l * (l + 1.0));
        if (t < 1e-14 && l > 0) break;
        s += t * std::sin((2.0 * l + 1.0) * 0.5 * r);
      }
      return 2.0 / kPi * std::sin(0.5 * r) * s;
    }
    case ErrorKind::VonMisesFisher:
      if (!class_function()) break;
      return std::exp(lambda_ * (1.0 + 2.0 * std::cos(r)) - log_norm_) * (1.0 - std::cos(r)) / kPi;
    default: break;
    }
    throw UnsupportedModel("no closed-form angle density for model " + name());
  }

  /// Density with respect to normalized Haar measure at u. Available for
  /// every model except ErrorFree and Rosenthal (whose law is singular or
  /// only given through its transform).
  double density(const Rotation& u) const {
    if (u.dim() != d_) throw DomainError("rotation dimension does not match model");
    if (kind_ == ErrorKind::VonMisesFisher) {
      const double tr = (A_.matrix().transpose() * u.matrix()).trace();
      return std::exp(lambda_ * tr - log_norm_);
    }
    if (d_ == 1) return so2_density(u.angle());
    if (d_ == 2 && (kind_ == ErrorKind::Laplace || kind_ == ErrorKind::Gaussian)) {
      const double c = std::clamp(0.5 * (u.matrix().trace() - 1.0), -1.0, 1.0);
      const double r = std::acos(c);
      const double haar = (1.0 - std::cos(r)) / kPi;
      return angle_density(r) / haar;
    }
    throw UnsupportedModel("density not available for model " + name());
  }

private:
  ErrorModel(ErrorKind k, int d) : kind_(k), d_(d), A_(Rotation::identity(d)) {}

  static void check_dim(int d) {
    if (d < 1) throw DomainError("sphere dimension must be >= 1");
  }

  // Density on SO(2) with respect to d(phi)/(2 pi).
  double so2_density(double phi) const {
    switch (kind_) {
    case ErrorKind::Laplace: {
      const double L = lambda_;
      return kPi / L * (std::exp(-phi / L) / (1.0 - std::exp(-kTwoPi / L)) +
                        std::exp((phi - kTwoPi) / L) / (1.0 - std::exp(-kTwoPi / L)));
    }
    case ErrorKind::Gaussian: {
      double s = 0.0;
      for (int k = -10; k <= 10; ++k) {
        const double t = phi + kTwoPi * k;
        s += std::exp(-t * t / (2.0 * lambda_ * lambda_));
      }
      return std::sqrt(kTwoPi) / lambda_ * s;
    }
    case ErrorKind::VonMisesFisher: {
      const double a = A_.angle();
      return std::exp(2.0 * lambda_ * std::cos(phi - a) - log_norm_);
    }
    default: break;
    }
    throw UnsupportedModel("no SO(2) density for model " + name());
  }

  ErrorKind kind_;
  int d_;
  double lambda_ = 0.0;
  double theta_ = 0.0;
  int p_ = 0;
  Rotation A_;
  SmoothnessClass smooth_;
  double log_norm_ = 0.0;
};

} // namespace sphdeconv
