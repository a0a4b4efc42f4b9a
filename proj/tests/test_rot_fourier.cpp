#include <cmath>

#include <boost/math/special_functions/bessel.hpp>
#include <gtest/gtest.h>

#include "sphdeconv/rot_fourier.hpp"
#include "sphdeconv/sampling.hpp"

using namespace sphdeconv;

namespace {

double max_abs(const Eigen::MatrixXcd& m) { return m.cwiseAbs().maxCoeff(); }

Rotation random_rotation(int d, Rng& rng) {
  return d == 1 ? Rotation::planar(kTwoPi * uniform01(rng)) : haar_so3(rng);
}

// s_l for vMF(lambda, I) on SO(3) as a 1-D integral over the rotation angle.
double vmf_so3_scalar(double lambda, int l) {
  const ErrorModel m = ErrorModel::von_mises_fisher(2, lambda);
  return detail::gl_integrate(
      [&](double r) {
        const double chi = std::abs(std::sin(0.5 * r)) < 1e-300 ? 2.0 * l + 1.0
                                                                : std::sin((l + 0.5) * r) / std::sin(0.5 * r);
        return m.angle_density(r) * chi / (2.0 * l + 1.0);
      },
      0.0, kPi, 200);
}

} // namespace

TEST(BigD, Examples) {
  const auto m = big_d_matrix(1, 2, Rotation::planar(kPi / 4));
  Eigen::MatrixXcd ref(2, 2);
  ref << 0, -1, 1, 0;
  EXPECT_LT(max_abs(m - ref), 1e-15);
  for (int l = 0; l <= 6; ++l) {
    const auto n = 2 * l + 1;
    EXPECT_LT(max_abs(big_d_matrix(2, l, Rotation::identity(2)) - Eigen::MatrixXcd::Identity(n, n)), 1e-14);
  }
  Rng rng(1);
  const auto u = haar_so3(rng);
  const auto d1 = big_d_matrix(2, 1, u);
  EXPECT_LT(max_abs(d1 * d1.adjoint() - Eigen::MatrixXcd::Identity(3, 3)), 1e-10);
  EXPECT_THROW(big_d_matrix(3, 1, Rotation::identity(3)), UnsupportedDimension);
}

TEST(BigD, RepresentationProperty) {
  Rng rng(2);
  for (int d = 1; d <= 2; ++d)
    for (int k = 0; k < 10; ++k) {
      const Rotation u = random_rotation(d, rng), v = random_rotation(d, rng);
      for (int l = 0; l <= 8; ++l) {
        const auto Du = big_d_matrix(d, l, u), Dv = big_d_matrix(d, l, v);
        EXPECT_LT(max_abs(big_d_matrix(d, l, u * v) - Du * Dv), 1e-9);
        EXPECT_LT(max_abs(big_d_matrix(d, l, u.inverse()) - Du.adjoint()), 1e-9);
      }
    }
}

TEST(BigD, QuadratureDefinition) {
  // D^l_{qr}(u) = conj( int B_q(u x) conj(B_r(x)) dnu(x) ).
  Rng rng(3);
  for (int d = 1; d <= 2; ++d) {
    const int L = 6;
    const auto quad = product_quadrature(d, 2 * L + 8);
    const BasisEvaluator ev(d, L);
    const Rotation u = random_rotation(d, rng);
    std::vector<Eigen::MatrixXcd> acc;
    for (int l = 0; l <= L; ++l) {
      const auto n = static_cast<Eigen::Index>(ev.degree_size(l));
      acc.push_back(Eigen::MatrixXcd::Zero(n, n));
    }
    for (std::size_t i = 0; i < quad.nodes.size(); ++i) {
      const auto bx = ev(quad.nodes[i]);
      const auto bux = ev(apply(u, quad.nodes[i]));
      for (int l = 0; l <= L; ++l) {
        const auto o = ev.offset(l);
        for (Eigen::Index q = 0; q < acc[l].rows(); ++q)
          for (Eigen::Index r = 0; r < acc[l].cols(); ++r) acc[l](q, r) += quad.weights[i] * bux[o + q] * std::conj(bx[o + r]);
      }
    }
    for (int l = 0; l <= L; ++l) EXPECT_LT(max_abs(big_d_matrix(d, l, u) - acc[l].conjugate()), 1e-8) << d << " " << l;
  }
}

TEST(BigD, RotationCovariance) {
  Rng rng(4);
  for (int d = 1; d <= 2; ++d)
    for (int k = 0; k < 10; ++k) {
      const Rotation u = random_rotation(d, rng);
      const SpherePoint x = uniform_sphere(d, rng);
      for (int l = 0; l <= 8; ++l) {
        const auto bx = eval_basis(d, l, x), bux = eval_basis(d, l, apply(u, x));
        const auto D = big_d_matrix(d, l, u);
        for (std::size_t q = 0; q < bx.size(); ++q) {
          cplx s = 0.0;
          for (std::size_t r = 0; r < bx.size(); ++r) s += std::conj(D(q, r)) * bx[r];
          EXPECT_NEAR(std::abs(s - bux[q]), 0.0, 1e-9);
        }
      }
    }
}

TEST(TransformBlocks, ClosedFormExamples) {
  const auto lap = transform_blocks(ErrorModel::laplace(2, 0.5), 3);
  EXPECT_LT(max_abs(lap.blocks[1] - Eigen::MatrixXcd::Identity(3, 3) * (2.0 / 3.0)), 1e-15);
  const auto gau = transform_blocks(ErrorModel::gaussian(2, 0.5), 3);
  EXPECT_NEAR(gau.blocks[1](0, 0).real(), 0.77880078307140488, 1e-15);
  const auto ef = transform_blocks(ErrorModel::error_free(2), 5);
  for (int l = 0; l <= 5; ++l)
    EXPECT_LT(max_abs(ef.blocks[l] - Eigen::MatrixXcd::Identity(2 * l + 1, 2 * l + 1)), 1e-300);
  for (const auto& m : {ErrorModel::laplace(2, 0.3), ErrorModel::gaussian(1, 0.4), ErrorModel::rosenthal(0.5, 2),
                        ErrorModel::von_mises_fisher(2, 2.0), ErrorModel::von_mises_fisher(1, 1.5)}) {
    const auto tb = transform_blocks(m, 4);
    EXPECT_EQ(tb.blocks[0](0, 0), cplx(1.0, 0.0)) << m.name();
    for (int l = 0; l <= 4; ++l) {
      const auto n = tb.blocks[l].rows();
      EXPECT_LT(max_abs(tb.blocks[l] * tb.inverses[l] - Eigen::MatrixXcd::Identity(n, n)), 1e-8);
    }
  }
}

TEST(TransformBlocks, RosenthalAndGeneralD) {
  const auto tb = transform_blocks(ErrorModel::rosenthal(0.8, 3), 4);
  for (int l = 1; l <= 4; ++l) {
    const double base = std::sin((2 * l + 1) * 0.4) / ((2 * l + 1) * std::sin(0.4));
    EXPECT_NEAR(tb.scalars[l], base * base * base, 1e-15);
  }
  const auto lap3 = transform_blocks(ErrorModel::laplace(3, 0.5), 3);
  EXPECT_EQ(lap3.blocks[2].rows(), 9);
  EXPECT_NEAR(lap3.scalars[2], 1.0 / (1.0 + 0.25 * 2 * 4), 1e-15);
}

TEST(TransformBlocks, RejectsNearSingular) {
  // theta = 2 pi / 3 makes sin(3 theta / 2) = 0 at l = 1.
  try {
    transform_blocks(ErrorModel::rosenthal(2 * kPi / 3, 1), 3);
    FAIL() << "expected InvertibilityError";
  } catch (const InvertibilityError& e) {
    EXPECT_EQ(e.degree, 1);
  }
  EXPECT_THROW(transform_blocks(ErrorModel::gaussian(2, 1.0), 10), InvertibilityError);
  EXPECT_THROW(transform_blocks(ErrorModel::laplace(2, 0.5), 129), DegreeOverflow);
}

TEST(TransformBlocks, VmfSo3MatchesAngleIntegral) {
  const auto tb = transform_blocks(ErrorModel::von_mises_fisher(2, 2.0), 6);
  for (int l = 0; l <= 6; ++l) {
    const double s = vmf_so3_scalar(2.0, l);
    const auto n = 2 * l + 1;
    EXPECT_LT(max_abs(tb.blocks[l] - Eigen::MatrixXcd::Identity(n, n) * s), 1e-10) << l;
  }
}

TEST(TransformBlocks, VmfSo3OrientedFactorizes) {
  // Substituting u = A v gives phi~^l(f_A) = D^l(A) phi~^l(f_I).
  const Rotation A = rotation_from_euler(0.4, 1.1, 2.0);
  const auto tb = transform_blocks(ErrorModel::von_mises_fisher(2, 1.5, A), 5);
  for (int l = 0; l <= 5; ++l) {
    const Eigen::MatrixXcd ref = big_d_matrix(2, l, A) * vmf_so3_scalar(1.5, l);
    EXPECT_LT(max_abs(tb.blocks[l] - ref), 1e-10) << l;
  }
}

TEST(TransformBlocks, VmfSo2Bessel) {
  const double lam = 1.3, a = 0.9;
  const auto tb = transform_blocks(ErrorModel::von_mises_fisher(1, lam, Rotation::planar(a)), 6);
  for (int l = 1; l <= 6; ++l) {
    const double s = boost::math::cyl_bessel_i(l, 2 * lam) / boost::math::cyl_bessel_i(0, 2 * lam);
    Eigen::MatrixXcd ref(2, 2);
    ref << std::cos(l * a), -std::sin(l * a), std::sin(l * a), std::cos(l * a);
    EXPECT_LT(max_abs(tb.blocks[l] - s * ref), 1e-12) << l;
  }
}

TEST(OperatorNorm, Examples) {
  EXPECT_NEAR(operator_norm(Eigen::MatrixXcd::Identity(3, 3)), 1.0, 1e-14);
  EXPECT_NEAR(operator_norm(Eigen::MatrixXcd::Identity(3, 3) * (2.0 / 3.0)), 2.0 / 3.0, 1e-14);
  std::srand(7);
  for (int k = 0; k < 5; ++k) {
    const Eigen::MatrixXcd M = Eigen::MatrixXcd::Random(5, 5);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(M.adjoint() * M);
    EXPECT_NEAR(operator_norm(M), std::sqrt(es.eigenvalues().maxCoeff()), 1e-8);
  }
}

TEST(OperatorNorm, LaplaceGrowth) {
  const double lam = 0.5;
  const auto tb = transform_blocks(ErrorModel::laplace(2, lam), 64);
  EXPECT_NEAR(tb.inverse_norms[64] / (64.0 * 64.0) / (lam * lam), 1.0, 0.05);
  for (int l = 1; l < 64; ++l) EXPECT_GT(tb.inverse_norms[l + 1], tb.inverse_norms[l]);
}

TEST(ForwardTransform, Examples) {
  const auto quad = product_quadrature(2, 24);
  const auto c = forward_transform([](const SpherePoint&) { return 1.0 / std::sqrt(4 * kPi); }, quad, 4);
  EXPECT_NEAR(std::abs(c[0](0) - 1.0), 0.0, 1e-10);
  for (int l = 1; l <= 4; ++l) EXPECT_LT(c[l].cwiseAbs().maxCoeff(), 1e-10);

  // q = 4 is order m = 1; conj(B_{l,1}) = -B_{l,-1}, so Re B^2_4 has coefficients 1/2 at q=4 and -1/2 at q=2.
  const auto re = forward_transform([](const SpherePoint& x) { return eval_basis_d2(2, x)[3].real(); }, quad, 3);
  EXPECT_NEAR(std::abs(re[2](3) - 0.5), 0.0, 1e-9);
  EXPECT_NEAR(std::abs(re[2](1) + 0.5), 0.0, 1e-9);
  // q = 3 is order m = 0, which is real-valued.
  const auto re0 = forward_transform([](const SpherePoint& x) { return eval_basis_d2(2, x)[2].real(); }, quad, 3);
  EXPECT_NEAR(std::abs(re0[2](2) - 1.0), 0.0, 1e-9);

  const double kap = 0.1;
  const auto mean = SpherePoint::from_coords({1, 1, 1});
  const auto vmf = [&](const SpherePoint& x) {
    return kap / (4 * kPi * std::sinh(kap)) * std::exp(kap * (x[0] * mean[0] + x[1] * mean[1] + x[2] * mean[2]));
  };
  EXPECT_NEAR(forward_transform(vmf, quad, 0)[0](0).real(), 1 / std::sqrt(4 * kPi), 1e-12);
}

TEST(ConvolveCheck, Examples) {
  const auto quad = product_quadrature(2, 16);
  const auto mean = SpherePoint::from_coords({0.2, -0.5, 1});
  const auto vmf = [&](const SpherePoint& x) {
    const double k = 2.0;
    return k / (4 * kPi * std::sinh(k)) * std::exp(k * (x[0] * mean[0] + x[1] * mean[1] + x[2] * mean[2]));
  };
  EXPECT_LT(convolve_check(ErrorModel::error_free(2), vmf, quad, 4), 1e-9);
  EXPECT_LT(convolve_check(ErrorModel::laplace(2, 0.5), vmf, quad, 4, 16), 1e-6);
  EXPECT_LT(convolve_check(ErrorModel::gaussian(2, 0.5), vmf, quad, 4, 16), 1e-6);
  EXPECT_LT(convolve_check(ErrorModel::rosenthal(0.6, 2), vmf, quad, 4, 12), 1e-6);
  EXPECT_LT(convolve_check(ErrorModel::von_mises_fisher(2, 2.0), [](const SpherePoint&) { return 1 / (4 * kPi); }, quad, 4, 16),
            1e-8);
  EXPECT_LT(convolve_check(ErrorModel::von_mises_fisher(2, 2.0, rotation_from_euler(1, 0.5, 2)), vmf, quad, 4, 20), 1e-6);
  const auto q1 = product_quadrature(1, 32);
  const auto vm1 = [](const SpherePoint& x) { return std::exp(1.5 * x[0]) / (kTwoPi * boost::math::cyl_bessel_i(0, 1.5)); };
  EXPECT_LT(convolve_check(ErrorModel::laplace(1, 0.4), vm1, q1, 6), 1e-6);
  EXPECT_LT(convolve_check(ErrorModel::gaussian(1, 0.4), vm1, q1, 6), 1e-6);
}

TEST(ErrorModel, Smoothness) {
  EXPECT_EQ(ErrorModel::laplace(2, 0.5).smoothness().scenario, Scenario::S1);
  EXPECT_EQ(ErrorModel::laplace(2, 0.5).smoothness().beta, 2.0);
  const auto g = ErrorModel::gaussian(2, 0.5).smoothness();
  EXPECT_EQ(g.scenario, Scenario::S2);
  EXPECT_EQ(g.gamma, 0.125);
  const auto v = ErrorModel::von_mises_fisher(2, 2.0).smoothness();
  EXPECT_EQ(v.scenario, Scenario::S3);
  EXPECT_EQ(v.beta, 1.0);
  EXPECT_EQ(v.alpha, 4.0);
  EXPECT_EQ(v.gamma, 1.0);
  EXPECT_EQ(ErrorModel::error_free(2).smoothness().scenario, Scenario::S1);
  EXPECT_EQ(ErrorModel::rosenthal(1.0, 2).smoothness().scenario, Scenario::S1);
  EXPECT_THROW(ErrorModel::laplace(2, 0.0), DomainError);
  EXPECT_THROW(ErrorModel::rosenthal(0.0, 1), DomainError);
  EXPECT_THROW(ErrorModel::von_mises_fisher(3, 1.0), UnsupportedModel);
}

TEST(ErrorModel, AngleDensitiesIntegrateToOne) {
  for (const auto& m : {ErrorModel::laplace(2, 0.5), ErrorModel::laplace(2, 3.0), ErrorModel::gaussian(2, 0.5),
                        ErrorModel::von_mises_fisher(2, 2.0)}) {
    EXPECT_NEAR(detail::gl_integrate([&](double r) { return m.angle_density(r); }, 0.0, kPi, 200), 1.0, 1e-10) << m.name();
    // Each degree of the character expansion reproduces s_l.
    const auto tb = transform_blocks(m, 5);
    for (int l = 1; l <= 5; ++l) {
      const double s = detail::gl_integrate(
          [&](double r) { return m.angle_density(r) * std::sin((l + 0.5) * r) / std::sin(0.5 * r) / (2.0 * l + 1); }, 0.0,
          kPi, 200);
      EXPECT_NEAR(s, tb.blocks[l](0, 0).real(), 1e-9) << m.name() << " " << l;
    }
  }
  for (const auto& m : {ErrorModel::laplace(1, 0.5), ErrorModel::gaussian(1, 0.5), ErrorModel::von_mises_fisher(1, 2.0)}) {
    EXPECT_NEAR(detail::gl_integrate([&](double r) { return m.angle_density(r); }, 0.0, kTwoPi, 400), 1.0, 1e-10)
        << m.name();
    const auto tb = transform_blocks(m, 4);
    for (int l = 1; l <= 4; ++l) {
      const double c = detail::gl_integrate([&](double r) { return m.angle_density(r) * std::cos(l * r); }, 0.0, kTwoPi, 400);
      EXPECT_NEAR(c, tb.blocks[l](0, 0).real(), 1e-9) << m.name() << " " << l;
    }
  }
}

// ---------------------------------------------------------------------------
// Samplers

TEST(SampleVmfSphere, Uniform) {
  const auto pts = sample_vmf_sphere(SpherePoint::from_coords({0, 0, 1}), 0.0, 10000, 1);
  Eigen::Vector3d s = Eigen::Vector3d::Zero();
  for (const auto& p : pts) s += Eigen::Vector3d(p[0], p[1], p[2]);
  EXPECT_LT(s.norm() / pts.size(), 0.05);
}

TEST(SampleVmfSphere, WeakConcentrationMeanDirection) {
  const auto mean = SpherePoint::from_coords({1, 1, 1});
  const auto pts = sample_vmf_sphere(mean, 0.1, 100000, 2);
  Eigen::Vector3d s = Eigen::Vector3d::Zero();
  for (const auto& p : pts) s += Eigen::Vector3d(p[0], p[1], p[2]);
  const double cosang = s.normalized().dot(Eigen::Vector3d(mean[0], mean[1], mean[2]));
  EXPECT_GT(cosang, std::cos(10.0 * kPi / 180.0));
  // E[mean^T x] = coth(k) - 1/k.
  const double k = 0.1;
  EXPECT_NEAR(s.dot(Eigen::Vector3d(mean[0], mean[1], mean[2])) / pts.size(), 1 / std::tanh(k) - 1 / k, 0.01);
}

TEST(SampleVmfSphere, StrongConcentration) {
  const auto mean = SpherePoint::from_coords({0.3, -0.2, 0.9});
  for (const auto& p : sample_vmf_sphere(mean, 100.0, 10000, 3)) {
    const double c = p[0] * mean[0] + p[1] * mean[1] + p[2] * mean[2];
    EXPECT_GT(c, std::cos(kPi / 6));
  }
  EXPECT_THROW(sample_vmf_sphere(mean, -1.0, 10, 1), DomainError);
}

TEST(SampleVmfSphere, Circle) {
  const auto pts = sample_vmf_sphere(from_angles(1, 1.0, {}), 2.0, 50000, 4);
  double c = 0.0;
  for (const auto& p : pts) c += std::cos(p.phi() - 1.0);
  const double ref = boost::math::cyl_bessel_i(1, 2.0) / boost::math::cyl_bessel_i(0, 2.0);
  EXPECT_NEAR(c / pts.size(), ref, 0.01);
}

TEST(SampleError, ErrorFreeIsIdentity) {
  for (const auto& u : sample_error(ErrorModel::error_free(2), 5, 1))
    EXPECT_EQ((u.matrix() - Eigen::MatrixXd::Identity(3, 3)).norm(), 0.0);
}

TEST(SampleError, LaplaceDiagonalMean) {
  const int n = 100000;
  const auto us = sample_error(ErrorModel::laplace(2, 0.5), n, 7);
  double s = 0.0, s2 = 0.0;
  for (const auto& u : us) {
    const double v = big_d_matrix(2, 1, u)(1, 1).real();
    s += v;
    s2 += v * v;
  }
  const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_NEAR(mean, 2.0 / 3.0, 3 * se);
}

TEST(SampleError, VmfTraceExceedsHaarMean) {
  const auto us = sample_error(ErrorModel::von_mises_fisher(2, 2.0), 20000, 8);
  double t = 0.0;
  for (const auto& u : us) t += u.matrix().trace();
  EXPECT_GT(t / us.size(), 1.0);
}

TEST(SampleError, Unsupported) {
  EXPECT_THROW(sample_error(ErrorModel::laplace(3, 0.5), 3, 1), UnsupportedModel);
}

TEST(SampleError, TransformConsistency) {
  // Monte Carlo means of D^l_{qr}(U) against phi~^l, componentwise within 4 standard errors.
  const int n = 100000;
  const std::vector<ErrorModel> models = {
      ErrorModel::laplace(2, 0.5),        ErrorModel::gaussian(2, 0.5),
      ErrorModel::rosenthal(0.7, 2),      ErrorModel::von_mises_fisher(2, 2.0, rotation_from_euler(0.3, 0.8, 1.7)),
      ErrorModel::laplace(1, 0.5),        ErrorModel::gaussian(1, 0.5),
      ErrorModel::von_mises_fisher(1, 2.0, Rotation::planar(1.0))};
  for (std::size_t k = 0; k < models.size(); ++k) {
    const auto& m = models[k];
    const int d = m.dim();
    const int L = 3;
    const auto tb = transform_blocks(m, L);
    const auto us = sample_error(m, n, 100 + k);
    for (int l = 0; l <= L; ++l) {
      const auto N = tb.blocks[l].rows();
      Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(N, N);
      Eigen::MatrixXd s2re = Eigen::MatrixXd::Zero(N, N), s2im = Eigen::MatrixXd::Zero(N, N);
      for (const auto& u : us) {
        const auto D = big_d_matrix(d, l, u);
        s += D;
        s2re += D.real().cwiseAbs2();
        s2im += D.imag().cwiseAbs2();
      }
      for (Eigen::Index q = 0; q < N; ++q)
        for (Eigen::Index r = 0; r < N; ++r) {
          const cplx mean = s(q, r) / double(n);
          const double se_re = std::sqrt(std::max(s2re(q, r) / n - mean.real() * mean.real(), 1e-12) / n);
          const double se_im = std::sqrt(std::max(s2im(q, r) / n - mean.imag() * mean.imag(), 1e-12) / n);
          EXPECT_NEAR(mean.real(), tb.blocks[l](q, r).real(), 4 * se_re) << m.name() << " l=" << l;
          EXPECT_NEAR(mean.imag(), tb.blocks[l](q, r).imag(), 4 * se_im) << m.name() << " l=" << l;
        }
    }
  }
}

TEST(Sampling, Determinism) {
  const auto a = sample_error(ErrorModel::gaussian(2, 0.5), 50, 42);
  const auto b = sample_error(ErrorModel::gaussian(2, 0.5), 50, 42);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].matrix(), b[i].matrix());
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
}
