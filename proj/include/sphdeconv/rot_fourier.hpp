#pragma once

// Representation matrices D^l(u), transform blocks of error densities, and
// quadrature-based transforms of functions on the sphere.

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "error_model.hpp"
#include "errors.hpp"
#include "harmonics.hpp"
#include "sphere_geom.hpp"

namespace sphdeconv {

inline constexpr double kConditionGuard = 1e12;

/// D^l(u), satisfying B^l_q(u x) = sum_r conj(D^l_{qr}(u)) B^l_r(x).
inline Eigen::MatrixXcd big_d_matrix(int d, int l, const Rotation& u) {
  if (u.dim() != d) throw DomainError("rotation dimension does not match d");
  if (l < 0) throw DomainError("negative degree");
  if (d == 1) {
    if (l == 0) return Eigen::MatrixXcd::Ones(1, 1);
    const double a = u.angle();
    Eigen::MatrixXcd m(2, 2);
    m << std::cos(l * a), -std::sin(l * a), std::sin(l * a), std::cos(l * a);
    return m;
  }
  if (d != 2) throw UnsupportedDimension(d);
  if (l > kWignerDegreeCap) throw DegreeOverflow(l, kWignerDegreeCap);
  const auto [phi, theta, psi] = u.euler();
  const WignerSmallD w = wigner_small_d(l, theta);
  Eigen::MatrixXcd m(2 * l + 1, 2 * l + 1);
  for (int q = 0; q <= 2 * l; ++q)
    for (int r = 0; r <= 2 * l; ++r)
      m(q, r) = std::polar(1.0, -(q - l) * phi) * w.values(q, r) * std::polar(1.0, -(r - l) * psi);
  return m;
}

/// Largest singular value via power iteration on M* M.
inline double operator_norm(const Eigen::MatrixXcd& M, double rel_tol = 1e-10) {
  if (M.rows() != M.cols()) throw DomainError("operator_norm expects a square matrix");
  const Eigen::Index n = M.cols();
  if (n == 0) return 0.0;
  const Eigen::MatrixXcd G = M.adjoint() * M;
  Eigen::VectorXcd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = cplx(1.0 + 0.01 * i, 0.003 * i);
  v.normalize();
  double prev = 0.0;
  for (int it = 0; it < 100000; ++it) {
    Eigen::VectorXcd w = G * v;
    const double lam = std::real(v.dot(w));
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    v = w / nw;
    if (it > 0 && std::abs(lam - prev) <= rel_tol * std::abs(lam)) {
      // One more Rayleigh quotient with the refined vector.
      return std::sqrt(std::max(0.0, std::real(v.dot(G * v))));
    }
    prev = lam;
  }
  return std::sqrt(std::max(0.0, prev));
}

/// Per-degree transform blocks phi~^l(f_U), l = 0..L, with cached inverses.
struct TransformBlocks {
  int dim = 0;
  int max_degree = -1;
  bool scalar = true;
  std::vector<double> scalars;                 // s_l when scalar
  std::vector<Eigen::MatrixXcd> blocks;        // phi~^l
  std::vector<Eigen::MatrixXcd> inverses;      // (phi~^l)^{-1}
  std::vector<double> inverse_norms;           // ||(phi~^l)^{-1}||_op
  std::vector<double> conditions;              // ||phi~^l|| ||(phi~^l)^{-1}||

  //! Leading degrees 0..L as a new object.
  TransformBlocks truncated(int L) const {
    if (L > max_degree) throw DomainError("cannot extend transform blocks by truncation");
    TransformBlocks t;
    t.dim = dim;
    t.max_degree = L;
    t.scalar = scalar;
    const auto n = static_cast<std::size_t>(L + 1);
    if (scalar) t.scalars.assign(scalars.begin(), scalars.begin() + n);
    t.blocks.assign(blocks.begin(), blocks.begin() + n);
    t.inverses.assign(inverses.begin(), inverses.begin() + n);
    t.inverse_norms.assign(inverse_norms.begin(), inverse_norms.begin() + n);
    t.conditions.assign(conditions.begin(), conditions.begin() + n);
    return t;
  }
};

namespace detail {

inline void finish_block(TransformBlocks& tb, int l, Eigen::MatrixXcd block) {
  Eigen::MatrixXcd inv;
  double inv_norm, cond;
  if (tb.scalar) {
    const double s = std::real(block(0, 0));
    if (s == 0.0 || !std::isfinite(s)) throw InvertibilityError(l, std::numeric_limits<double>::infinity());
    inv = Eigen::MatrixXcd::Identity(block.rows(), block.cols()) / s;
    inv_norm = 1.0 / std::abs(s);
    cond = 1.0;
  } else {
    const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(block);
    inv = lu.inverse();
    inv_norm = operator_norm(inv);
    cond = operator_norm(block) * inv_norm;
    if (!std::isfinite(cond)) throw InvertibilityError(l, cond);
  }
  // Density transforms have norm <= 1, so a large inverse norm is as bad as a large condition number.
  if (std::max(cond, inv_norm) > kConditionGuard) throw InvertibilityError(l, std::max(cond, inv_norm));
  tb.blocks.push_back(std::move(block));
  tb.inverses.push_back(std::move(inv));
  tb.inverse_norms.push_back(inv_norm);
  tb.conditions.push_back(cond);
}

// vMF blocks on SO(3) by Euler-angle product quadrature, separable in phi and psi.
inline std::vector<Eigen::MatrixXcd> vmf_so3_blocks(const ErrorModel& model, int L, int res) {
  const Eigen::Matrix3d At = model.orientation().matrix().transpose();
  const double lam = model.lambda();
  const int M = 2 * L + 1;
  std::vector<Eigen::MatrixXcd> out;
  for (int l = 0; l <= L; ++l) out.push_back(Eigen::MatrixXcd::Zero(2 * l + 1, 2 * l + 1));

  const GaussRule gl = gauss_legendre(res);
  // e^{-i m angle_k}, m = -L..L
  Eigen::MatrixXcd ex(res, M);
  for (int k = 0; k < res; ++k)
    for (int m = -L; m <= L; ++m) ex(k, m + L) = std::polar(1.0, -m * kTwoPi * k / res);

  Eigen::MatrixXd F(res, res);
  double mass = 0.0;
  std::vector<Eigen::Matrix3d> rz(res);
  for (int k = 0; k < res; ++k) rz[k] = detail::about_z(kTwoPi * k / res);
  for (int i = 0; i < res; ++i) {
    const double theta = std::acos(gl.nodes[i]);
    const double w = gl.weights[i] / (2.0 * res * res);
    const Eigen::Matrix3d sy = detail::about_y(theta);
    for (int a = 0; a < res; ++a) {
      const Eigen::Matrix3d left = At * rz[a] * sy;
      for (int b = 0; b < res; ++b) {
        const double tr = (left * rz[b]).trace();
        F(a, b) = std::exp(lam * tr - model.log_normalizer());
      }
    }
    mass += w * F.sum();
    // H(m', m) = sum_{a,b} F(a,b) e^{-i m' phi_a} e^{-i m psi_b}
    const Eigen::MatrixXcd H = ex.transpose() * (F.cast<cplx>() * ex);
    const std::vector<Eigen::MatrixXd> dl = wigner_small_d_upto(L, theta);
    for (int l = 0; l <= L; ++l) {
      for (int q = 0; q <= 2 * l; ++q)
        for (int r = 0; r <= 2 * l; ++r) out[l](q, r) += w * dl[l](q, r) * H(q - l + L, r - l + L);
    }
  }
  // Normalize by the quadrature mass so the degree-0 block is exactly 1.
  for (auto& b : out) b /= mass;
  out[0](0, 0) = 1.0;
  return out;
}

inline std::vector<Eigen::MatrixXcd> vmf_so2_blocks(const ErrorModel& model, int L, int res) {
  const double a = model.orientation().angle();
  std::vector<double> dens(static_cast<std::size_t>(res));
  double mass = 0.0;
  for (int k = 0; k < res; ++k) {
    const double phi = kTwoPi * k / res;
    dens[k] = std::exp(2.0 * model.lambda() * std::cos(phi - a) - model.log_normalizer());
    mass += dens[k] / res;
  }
  std::vector<Eigen::MatrixXcd> out;
  out.push_back(Eigen::MatrixXcd::Ones(1, 1));
  for (int l = 1; l <= L; ++l) {
    double c = 0.0, s = 0.0;
    for (int k = 0; k < res; ++k) {
      const double phi = kTwoPi * k / res;
      c += dens[k] * std::cos(l * phi) / res;
      s += dens[k] * std::sin(l * phi) / res;
    }
    c /= mass;
    s /= mass;
    Eigen::MatrixXcd m(2, 2);
    m << c, -s, s, c;
    out.push_back(m);
  }
  return out;
}

} // namespace detail

/// Builds phi~^l(f_U) for l = 0..L. Closed forms for scalar-block models;
/// von Mises-Fisher blocks by Euler-angle quadrature with resolution
/// max(vmf_resolution, 2L + 16). Throws InvertibilityError for a block whose
/// condition number or inverse norm exceeds 1e12.
inline TransformBlocks transform_blocks(const ErrorModel& model, int L, int vmf_resolution = 64) {
  const int d = model.dim();
  if (L < 0) throw DomainError("negative degree");
  if (L > degree_cap(d)) throw DegreeOverflow(L, degree_cap(d));
  TransformBlocks tb;
  tb.dim = d;
  tb.max_degree = L;
  tb.scalar = model.scalar_blocks();
  if (tb.scalar) {
    for (int l = 0; l <= L; ++l) {
      const double s = l == 0 ? 1.0 : model.scalar_transform(l);
      tb.scalars.push_back(s);
      const auto n = static_cast<Eigen::Index>(n_dl(d, l));
      detail::finish_block(tb, l, Eigen::MatrixXcd::Identity(n, n) * s);
    }
    return tb;
  }
  const int res = std::max(vmf_resolution, 2 * L + 16);
  std::vector<Eigen::MatrixXcd> raw =
      d == 1 ? detail::vmf_so2_blocks(model, L, std::max(res, 256)) : detail::vmf_so3_blocks(model, L, res);
  for (int l = 0; l <= L; ++l) detail::finish_block(tb, l, std::move(raw[l]));
  return tb;
}

/// phi^l_q(f) = int f conj(B^l_q) dnu by quadrature; one vector per degree.
template <class F>
std::vector<Eigen::VectorXcd> forward_transform(F&& f, const SphereQuadrature& quad, int L) {
  const BasisEvaluator basis(quad.dim, L);
  std::vector<Eigen::VectorXcd> out;
  for (int l = 0; l <= L; ++l) out.push_back(Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(basis.degree_size(l))));
  std::vector<cplx> b(basis.size());
  for (std::size_t i = 0; i < quad.nodes.size(); ++i) {
    basis(quad.nodes[i], b);
    const double fw = quad.weights[i] * f(quad.nodes[i]);
    for (int l = 0; l <= L; ++l) {
      const std::size_t off = basis.offset(l);
      for (Eigen::Index q = 0; q < out[l].size(); ++q) out[l](q) += fw * std::conj(b[off + q]);
    }
  }
  return out;
}

/// Weighted rotations approximating expectations under f_U:
/// sum_i weights[i] g(nodes[i]) ~ int g(u) f_U(u) dmu(u). Weights sum to 1.
struct ErrorQuadrature {
  std::vector<Rotation> nodes;
  std::vector<double> weights;

  template <class G> auto expect(G&& g) const {
    using R = decltype(g(nodes.front()));
    R acc{};
    for (std::size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * g(nodes[i]);
    return acc;
  }
};

/// Quadrature for E[g(U)] under a model. Class-function models on SO(3) use
/// Gauss-Legendre in the rotation angle times a product rule for the axis;
/// SO(2) uses Gauss-Legendre in the angle; oriented vMF uses Euler angles;
/// Rosenthal composes p fixed-angle steps with axis quadrature.
inline ErrorQuadrature error_quadrature(const ErrorModel& model, int res) {
  if (res < 4) throw DomainError("quadrature resolution must be >= 4");
  const int d = model.dim();
  ErrorQuadrature q;
  if (model.kind() == ErrorKind::ErrorFree) {
    q.nodes.push_back(Rotation::identity(d));
    q.weights.push_back(1.0);
    return q;
  }
  if (d == 1) {
    // Laplace has a cusp at the identity, so integrate on [0, 2pi] rather than periodically.
    const GaussRule g = gauss_legendre(4 * res);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      const double phi = kPi * (g.nodes[i] + 1.0);
      q.nodes.push_back(Rotation::planar(phi));
      q.weights.push_back(kPi * g.weights[i] * model.angle_density(phi));
    }
  } else if (d == 2 && model.kind() == ErrorKind::Rosenthal) {
    const int p = model.p();
    int ares = res;
    while (ares > 4 && std::pow(2.0 * ares * ares, p) > 4e5) --ares;
    const SphereQuadrature axes = product_quadrature(2, ares);
    std::vector<Rotation> steps;
    for (const auto& a : axes.nodes)
      steps.push_back(rotation_from_axis_angle(Eigen::Vector3d(a[0], a[1], a[2]), model.theta()));
    q.nodes.push_back(Rotation::identity(2));
    q.weights.push_back(1.0);
    for (int k = 0; k < p; ++k) {
      ErrorQuadrature next;
      for (std::size_t i = 0; i < q.nodes.size(); ++i)
        for (std::size_t j = 0; j < steps.size(); ++j) {
          next.nodes.push_back(q.nodes[i] * steps[j]);
          next.weights.push_back(q.weights[i] * axes.weights[j] / (4.0 * kPi));
        }
      q = std::move(next);
    }
  } else if (d == 2 && model.class_function()) {
    const GaussRule g = gauss_legendre(2 * res);
    const SphereQuadrature axes = product_quadrature(2, res);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
      const double r = 0.5 * kPi * (g.nodes[i] + 1.0);
      const double wr = 0.5 * kPi * g.weights[i] * model.angle_density(r);
      for (std::size_t j = 0; j < axes.nodes.size(); ++j) {
        const auto& a = axes.nodes[j];
        q.nodes.push_back(rotation_from_axis_angle(Eigen::Vector3d(a[0], a[1], a[2]), r));
        q.weights.push_back(wr * axes.weights[j] / (4.0 * kPi));
      }
    }
  } else if (d == 2) {
    const RotationQuadrature h = so3_quadrature(res);
    for (std::size_t i = 0; i < h.nodes.size(); ++i) {
      q.nodes.push_back(h.nodes[i]);
      q.weights.push_back(h.weights[i] * model.density(h.nodes[i]));
    }
  } else {
    throw UnsupportedModel("error quadrature requires d in {1, 2}");
  }
  double s = 0.0;
  for (double w : q.weights) s += w;
  for (double& w : q.weights) w /= s;
  return q;
}

/// Checks the convolution property phi^l(g * f) = phi~^l(g) phi^l(f) for
/// l <= L. The convolution is formed by quadrature over the error law and
/// transformed by `quad`; returns the largest absolute deviation.
template <class F>
double convolve_check(const ErrorModel& g, F&& f, const SphereQuadrature& quad, int L, int error_res = 24) {
  if (quad.dim != g.dim()) throw DomainError("quadrature dimension does not match model");
  const ErrorQuadrature eq = error_quadrature(g, error_res);
  std::vector<Rotation> inv;
  inv.reserve(eq.nodes.size());
  for (const auto& u : eq.nodes) inv.push_back(u.inverse());
  const auto conv = [&](const SpherePoint& z) {
    double s = 0.0;
    for (std::size_t i = 0; i < inv.size(); ++i) s += eq.weights[i] * f(apply(inv[i], z));
    return s;
  };
  const auto lhs = forward_transform(conv, quad, L);
  const auto fx = forward_transform(f, quad, L);
  const TransformBlocks tb = transform_blocks(g, L);
  double dev = 0.0;
  for (int l = 0; l <= L; ++l) {
    const Eigen::VectorXcd rhs = tb.blocks[l] * fx[l];
    dev = std::max(dev, (lhs[l] - rhs).cwiseAbs().maxCoeff());
  }
  return dev;
}

} // namespace sphdeconv
