#pragma once

// Seeded random samplers on S^d and SO(d+1).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "error_model.hpp"
#include "errors.hpp"
#include "sphere_geom.hpp"

namespace sphdeconv {

using Rng = std::mt19937_64;

//! splitmix64 mix of (base, stream) for independent per-task seeds.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

//! Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double standard_normal(Rng& rng) {
  // Marsaglia polar method; deterministic across standard libraries.
  for (;;) {
    const double u = 2.0 * uniform01(rng) - 1.0;
    const double v = 2.0 * uniform01(rng) - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

/// Tabulated inverse CDF of a 1-D density on [a, b]: cumulative trapezoid on
/// `points` nodes, monotone linear interpolation.
class InverseCdf {
public:
  template <class F> InverseCdf(F&& density, double a, double b, int points = 4096) {
    if (!(b > a) || points < 2) throw DomainError("invalid inverse-CDF table");
    x_.resize(points);
    c_.resize(points);
    const double h = (b - a) / (points - 1);
    double prev = std::max(0.0, density(a));
    x_[0] = a;
    c_[0] = 0.0;
    for (int i = 1; i < points; ++i) {
      x_[i] = i == points - 1 ? b : a + h * i;
      const double cur = std::max(0.0, density(x_[i]));
      c_[i] = c_[i - 1] + 0.5 * h * (prev + cur);
      prev = cur;
    }
    const double total = c_.back();
    if (!(total > 0.0) || !std::isfinite(total)) throw DomainError("density does not integrate to a positive value");
    for (double& c : c_) c /= total;
  }

  double operator()(double u) const {
    const auto it = std::upper_bound(c_.begin(), c_.end(), u);
    if (it == c_.begin()) return x_.front();
    if (it == c_.end()) return x_.back();
    const auto i = static_cast<std::size_t>(it - c_.begin());
    const double span = c_[i] - c_[i - 1];
    const double t = span > 0.0 ? (u - c_[i - 1]) / span : 0.0;
    return x_[i - 1] + t * (x_[i] - x_[i - 1]);
  }

private:
  std::vector<double> x_, c_;
};

inline SpherePoint uniform_sphere(int d, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(d + 1));
  for (;;) {
    double n2 = 0.0;
    for (double& c : v) {
      c = standard_normal(rng);
      n2 += c * c;
    }
    if (n2 > 1e-20) return SpherePoint::from_coords(v);
  }
}

//! Haar-distributed rotation in SO(3) from a uniform unit quaternion.
inline Rotation haar_so3(Rng& rng) {
  const SpherePoint q = uniform_sphere(3, rng);
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::MatrixXd m(3, 3);
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),
      2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
      2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
  return Rotation::from_matrix(std::move(m), 1e-9);
}

/// i.i.d. von Mises-Fisher draws on S^1 or S^2, density proportional to
/// exp(kappa mean^T x). kappa = 0 gives the uniform law.
inline std::vector<SpherePoint> sample_vmf_sphere(const SpherePoint& mean, double kappa, int n, std::uint64_t seed) {
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw DomainError("vMF concentration must be >= 0");
  if (n < 0) throw DomainError("sample size must be >= 0");
  const int d = mean.dim();
  if (d != 1 && d != 2) throw UnsupportedDimension(d);
  Rng rng(seed);
  std::vector<SpherePoint> out;
  out.reserve(n);
  if (d == 1) {
    const InverseCdf icdf([kappa](double t) { return std::exp(kappa * (std::cos(t) - 1.0)); }, -kPi, kPi);
    const double base = mean.phi();
    for (int i = 0; i < n; ++i) {
      const double t = base + icdf(uniform01(rng));
      out.push_back(SpherePoint::from_coords({std::cos(t), std::sin(t)}));
    }
    return out;
  }
  // Orthonormal frame (e1, e2) of the tangent plane at the mean.
  const Eigen::Vector3d mu(mean[0], mean[1], mean[2]);
  Eigen::Vector3d helper = std::abs(mu.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  const Eigen::Vector3d e1 = (helper - helper.dot(mu) * mu).normalized();
  const Eigen::Vector3d e2 = mu.cross(e1);
  for (int i = 0; i < n; ++i) {
    const double u = uniform01(rng);
    double w;
    if (kappa == 0.0) {
      w = 2.0 * u - 1.0;
    } else {
      // Inverse CDF of w = mean^T x with density proportional to exp(kappa w) on [-1, 1].
      w = 1.0 + std::log(u + (1.0 - u) * std::exp(-2.0 * kappa)) / kappa;
      w = std::clamp(w, -1.0, 1.0);
    }
    const double a = kTwoPi * uniform01(rng);
    const double s = std::sqrt(std::max(0.0, 1.0 - w * w));
    const Eigen::Vector3d x = w * mu + s * (std::cos(a) * e1 + std::sin(a) * e2);
    out.push_back(SpherePoint::from_coords({x.x(), x.y(), x.z()}));
  }
  return out;
}

/// i.i.d. draws from an error model on SO(2) or SO(3).
inline std::vector<Rotation> sample_error(const ErrorModel& model, int n, std::uint64_t seed) {
  if (n < 0) throw DomainError("sample size must be >= 0");
  const int d = model.dim();
  std::vector<Rotation> out;
  out.reserve(n);
  if (model.kind() == ErrorKind::ErrorFree) {
    out.assign(static_cast<std::size_t>(n), Rotation::identity(d));
    return out;
  }
  Rng rng(seed);
  if (d == 1) {
    const InverseCdf icdf([&](double phi) { return model.angle_density(phi); }, 0.0, kTwoPi);
    for (int i = 0; i < n; ++i) out.push_back(Rotation::planar(icdf(uniform01(rng))));
    return out;
  }
  if (d != 2) throw UnsupportedModel("error sampling requires d in {1, 2}");
  const auto random_axis = [&rng] {
    const SpherePoint a = uniform_sphere(2, rng);
    return Eigen::Vector3d(a[0], a[1], a[2]);
  };
  switch (model.kind()) {
  case ErrorKind::Laplace:
  case ErrorKind::Gaussian: {
    const InverseCdf icdf([&](double r) { return model.angle_density(r); }, 0.0, kPi);
    for (int i = 0; i < n; ++i) {
      const double r = icdf(uniform01(rng));
      out.push_back(rotation_from_axis_angle(random_axis(), r));
    }
    return out;
  }
  case ErrorKind::Rosenthal: {
    for (int i = 0; i < n; ++i) {
      Rotation u = Rotation::identity(2);
      for (int k = 0; k < model.p(); ++k) u = u * rotation_from_axis_angle(random_axis(), model.theta());
      out.push_back(u);
    }
    return out;
  }
  case ErrorKind::VonMisesFisher: {
    const Eigen::MatrixXd At = model.orientation().matrix().transpose();
    const double lam = model.lambda();
    while (static_cast<int>(out.size()) < n) {
      Rotation u = haar_so3(rng);
      // Envelope: Tr(A^T u) <= 3.
      const double accept = std::exp(lam * ((At * u.matrix()).trace() - 3.0));
      if (uniform01(rng) < accept) out.push_back(std::move(u));
    }
    return out;
  }
  default: break;
  }
  throw UnsupportedModel("no sampler for model " + model.name());
}

} // namespace sphdeconv
