#pragma once

// Deconvolution kernels, density and regression estimators, and truncation
// selection by cross-validation.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "error_model.hpp"
#include "errors.hpp"
#include "harmonics.hpp"
#include "rot_fourier.hpp"
#include "sampling.hpp"
#include "sphere_geom.hpp"

namespace sphdeconv {

/// Observations Z_i on S^d with optional responses Y_i. `X` holds latent
/// error-free locations when known (simulation only).
struct Dataset {
  int d = 2;
  std::vector<SpherePoint> Z;
  std::vector<double> Y;
  std::vector<SpherePoint> X;

  std::size_t size() const { return Z.size(); }
  bool has_response() const { return !Y.empty(); }

  void validate(std::size_t min_n = 1) const {
    if (Z.size() < min_n) throw DomainError("dataset needs at least " + std::to_string(min_n) + " observations");
    if (!Y.empty() && Y.size() != Z.size()) throw DomainError("response length does not match observations");
    for (const auto& z : Z)
      if (z.dim() != d) throw DomainError("observation dimension does not match dataset");
  }
};

/// The truncated deconvolution kernel
///   K_T(x, z) = sum_{l <= floor(T)} B^l(x)^T (phi~^l)^{-1} conj(B^l(z)).
class DeconvKernel {
public:
  DeconvKernel(const ErrorModel& model, double T) : DeconvKernel(make_blocks(model, T), T) {}

  DeconvKernel(std::shared_ptr<const TransformBlocks> blocks, double T) : T_(T), blocks_(std::move(blocks)) {
    if (!(T >= 0.0) || !std::isfinite(T)) throw DomainError("truncation T must be finite and >= 0");
    L_ = static_cast<int>(std::floor(T));
    if (L_ > blocks_->max_degree) throw DomainError("transform blocks do not reach floor(T)");
    basis_ = std::make_shared<BasisEvaluator>(blocks_->dim, L_);
  }

  static DeconvKernel error_free(int d, double T) { return DeconvKernel(ErrorModel::error_free(d), T); }

  int dim() const { return blocks_->dim; }
  double T() const { return T_; }
  int degree() const { return L_; }
  const TransformBlocks& blocks() const { return *blocks_; }
  std::shared_ptr<const TransformBlocks> shared_blocks() const { return blocks_; }
  const BasisEvaluator& basis() const { return *basis_; }
  std::size_t size() const { return basis_->size(); }

  //! In-place a_l = (phi~^l)^{-1} c_l over the concatenated coefficient vector.
  void apply_inverse(std::span<cplx> c) const {
    for (int l = 0; l <= L_; ++l) {
      const std::size_t off = basis_->offset(l), n = basis_->degree_size(l);
      if (blocks_->scalar) {
        const double inv = 1.0 / blocks_->scalars[l];
        for (std::size_t q = 0; q < n; ++q) c[off + q] *= inv;
      } else {
        Eigen::Map<Eigen::VectorXcd> v(c.data() + off, static_cast<Eigen::Index>(n));
        const Eigen::VectorXcd w = blocks_->inverses[l] * v;
        v = w;
      }
    }
  }

  //! Dense block-diagonal inverse over all degrees <= floor(T).
  Eigen::MatrixXcd inverse_matrix() const {
    const auto M = static_cast<Eigen::Index>(size());
    Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(M, M);
    for (int l = 0; l <= L_; ++l) {
      const auto off = static_cast<Eigen::Index>(basis_->offset(l));
      const auto n = static_cast<Eigen::Index>(basis_->degree_size(l));
      A.block(off, off, n, n) = blocks_->inverses[l];
    }
    return A;
  }

private:
  static std::shared_ptr<const TransformBlocks> make_blocks(const ErrorModel& model, double T) {
    if (!(T >= 0.0) || !std::isfinite(T)) throw DomainError("truncation T must be finite and >= 0");
    return std::make_shared<const TransformBlocks>(transform_blocks(model, static_cast<int>(std::floor(T))));
  }

  double T_;
  int L_ = 0;
  std::shared_ptr<const TransformBlocks> blocks_;
  std::shared_ptr<BasisEvaluator> basis_;
};

inline cplx kernel_eval(const DeconvKernel& k, const SpherePoint& x, const SpherePoint& z) {
  if (x.dim() != k.dim() || z.dim() != k.dim()) throw DomainError("point dimension does not match kernel");
  const auto bx = k.basis()(x);
  std::vector<cplx> bz = k.basis()(z);
  for (auto& v : bz) v = std::conj(v);
  k.apply_inverse(bz);
  cplx s = 0.0;
  for (std::size_t q = 0; q < bx.size(); ++q) s += bx[q] * bz[q];
  return s;
}

//! Error-free reproducing kernel of the degree <= floor(T) harmonic space.
inline cplx kernel_star_eval(int d, double T, const SpherePoint& x, const SpherePoint& xs) {
  if (x.dim() != d || xs.dim() != d) throw DomainError("point dimension does not match d");
  if (!(T >= 0.0)) throw DomainError("truncation T must be >= 0");
  const BasisEvaluator ev(d, static_cast<int>(std::floor(T)));
  const auto a = ev(x), b = ev(xs);
  cplx s = 0.0;
  for (std::size_t q = 0; q < a.size(); ++q) s += a[q] * std::conj(b[q]);
  return s;
}

/// Estimates on a set of nodes. Optional columns are empty when not computed.
struct EstimateGrid {
  std::vector<SpherePoint> nodes;
  double T = 0.0;
  std::vector<double> f_hat;
  std::vector<double> m_hat;
  std::vector<double> s1, s2;
  std::vector<double> ci_low, ci_high;
  std::vector<std::uint8_t> unstable;  // |f_hat| below the floor
  std::vector<std::uint8_t> degenerate; // interval could not be formed normally

  std::size_t size() const { return nodes.size(); }
};

//! Unstable-denominator floor for the regression estimator.
inline double density_floor(int d) { return 1e-6 / sphere_area(d); }

namespace detail {

//! Evaluates the basis at each point and calls fn(i, values).
template <class Fn> void for_each_basis(const BasisEvaluator& ev, std::span<const SpherePoint> pts, Fn&& fn) {
  std::vector<cplx> b(ev.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ev(pts[i], b);
    fn(i, std::span<const cplx>(b));
  }
}

//! c = n^{-1} sum_i w_i conj(B(Z_i)); w = 1 when weights is empty.
inline std::vector<cplx> empirical_coefficients(const BasisEvaluator& ev, std::span<const SpherePoint> Z,
                                                std::span<const double> weights = {}) {
  std::vector<cplx> c(ev.size(), cplx(0.0));
  for_each_basis(ev, Z, [&](std::size_t i, std::span<const cplx> b) {
    const double w = weights.empty() ? 1.0 : weights[i];
    for (std::size_t q = 0; q < b.size(); ++q) c[q] += w * std::conj(b[q]);
  });
  const double inv = 1.0 / static_cast<double>(Z.size());
  for (auto& v : c) v *= inv;
  return c;
}

//! Re sum_q B_q(x) a_q for each node.
inline std::vector<double> evaluate_expansion(const BasisEvaluator& ev, std::span<const cplx> a,
                                              std::span<const SpherePoint> nodes) {
  std::vector<double> out(nodes.size());
  for_each_basis(ev, nodes, [&](std::size_t i, std::span<const cplx> b) {
    cplx s = 0.0;
    for (std::size_t q = 0; q < b.size(); ++q) s += b[q] * a[q];
    out[i] = s.real();
  });
  return out;
}

//! Basis values at points as rows of an n x M matrix.
inline Eigen::MatrixXcd basis_matrix(const BasisEvaluator& ev, std::span<const SpherePoint> pts) {
  Eigen::MatrixXcd B(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(ev.size()));
  for_each_basis(ev, pts, [&](std::size_t i, std::span<const cplx> b) {
    for (std::size_t q = 0; q < b.size(); ++q) B(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) = b[q];
  });
  return B;
}

} // namespace detail

/// Calls fn(first, rows) where rows(j, i) = Re K_T(nodes[first + j], Z_i),
/// processing nodes in chunks so memory stays bounded for large n.
template <class Fn>
void for_each_kernel_rows(const DeconvKernel& k, std::span<const SpherePoint> nodes, std::span<const SpherePoint> Z,
                          Fn&& fn, std::size_t max_entries = 20'000'000) {
  const std::size_t n = Z.size();
  if (n == 0 || nodes.empty()) return;
  const Eigen::MatrixXcd Ainv = k.inverse_matrix();
  // W = (phi~)^{-1} conj(B_Z)^T, M x n, built once when it fits.
  const std::size_t M = k.size();
  const std::size_t data_chunk = std::max<std::size_t>(256, max_entries / std::max<std::size_t>(M, 1));
  const bool cache = data_chunk >= n;
  Eigen::MatrixXcd Wc;
  if (cache) Wc = Ainv * detail::basis_matrix(k.basis(), Z).adjoint();
  const std::size_t node_chunk = std::max<std::size_t>(1, std::min<std::size_t>(nodes.size(), max_entries / n));
  for (std::size_t g0 = 0; g0 < nodes.size(); g0 += node_chunk) {
    const std::size_t gn = std::min(node_chunk, nodes.size() - g0);
    const Eigen::MatrixXcd Bx = detail::basis_matrix(k.basis(), nodes.subspan(g0, gn));
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(gn), static_cast<Eigen::Index>(n));
    if (cache) {
      rows = (Bx * Wc).real();
    } else {
      for (std::size_t i0 = 0; i0 < n; i0 += data_chunk) {
        const std::size_t in = std::min(data_chunk, n - i0);
        const Eigen::MatrixXcd W = Ainv * detail::basis_matrix(k.basis(), Z.subspan(i0, in)).adjoint();
        rows.middleCols(static_cast<Eigen::Index>(i0), static_cast<Eigen::Index>(in)) = (Bx * W).real();
      }
    }
    fn(g0, static_cast<const Eigen::MatrixXd&>(rows));
  }
}

/// f_hat(x) = n^{-1} sum_i Re K_T(x, Z_i) through the coefficient pipeline:
/// c = mean of conj(B(Z_i)), a = (phi~)^{-1} c, f_hat(x) = Re B(x)^T a.
inline EstimateGrid density_estimate(const Dataset& data, const DeconvKernel& k, std::span<const SpherePoint> grid) {
  data.validate(1);
  if (data.d != k.dim()) throw DomainError("dataset and kernel dimensions differ");
  std::vector<cplx> a = detail::empirical_coefficients(k.basis(), data.Z);
  k.apply_inverse(a);
  EstimateGrid out;
  out.nodes.assign(grid.begin(), grid.end());
  out.T = k.T();
  out.f_hat = detail::evaluate_expansion(k.basis(), a, grid);
  return out;
}

//! The same estimate as a direct double sum over data and nodes.
inline std::vector<double> density_estimate_direct(const Dataset& data, const DeconvKernel& k,
                                                   std::span<const SpherePoint> grid) {
  data.validate(1);
  std::vector<double> f(grid.size(), 0.0);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    double s = 0.0;
    for (const auto& z : data.Z) s += kernel_eval(k, grid[j], z).real();
    f[j] = s / static_cast<double>(data.size());
  }
  return f;
}

/// m_hat(x) = sum_i Re K(x, Z_i) Y_i / sum_i Re K(x, Z_i). Nodes with
/// |f_hat| < 1e-6 / nu(S^d) are flagged unstable; the estimate is still reported.
inline EstimateGrid regression_estimate(const Dataset& data, const DeconvKernel& k, std::span<const SpherePoint> grid) {
  data.validate(1);
  if (!data.has_response()) throw DomainError("regression requires responses");
  if (data.d != k.dim()) throw DomainError("dataset and kernel dimensions differ");
  std::vector<cplx> a = detail::empirical_coefficients(k.basis(), data.Z);
  std::vector<cplx> b = detail::empirical_coefficients(k.basis(), data.Z, data.Y);
  k.apply_inverse(a);
  k.apply_inverse(b);
  EstimateGrid out;
  out.nodes.assign(grid.begin(), grid.end());
  out.T = k.T();
  out.f_hat = detail::evaluate_expansion(k.basis(), a, grid);
  const std::vector<double> num = detail::evaluate_expansion(k.basis(), b, grid);
  out.m_hat.resize(grid.size());
  out.unstable.resize(grid.size());
  const double floor = density_floor(data.d);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    out.m_hat[j] = num[j] / out.f_hat[j];
    out.unstable[j] = std::abs(out.f_hat[j]) < floor;
  }
  return out;
}

//! Regression on the contaminated Z_i with the error-free kernel K*_T.
inline EstimateGrid naive_regression_estimate(const Dataset& data, double T, std::span<const SpherePoint> grid) {
  return regression_estimate(data, DeconvKernel::error_free(data.d, T), grid);
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CvResult {
  double T = 0.0;
  std::vector<double> grid;
  std::vector<double> score;
};

namespace detail {

inline void check_grid(std::span<const double> T_grid) {
  if (T_grid.empty()) throw DomainError("empty truncation grid");
  for (double t : T_grid)
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("truncation values must be finite and >= 0");
}

//! Index of the minimum; a later value must beat the best by more than tol.
inline std::size_t argmin_smallest(const std::vector<double>& T, const std::vector<double>& score, double tol) {
  std::vector<std::size_t> order(T.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return T[a] < T[b]; });
  std::size_t best = order[0];
  for (std::size_t i : order) {
    if (!std::isfinite(score[best]) && std::isfinite(score[i])) best = i;
    else if (std::isfinite(score[i]) && score[i] < score[best] - tol) best = i;
  }
  return best;
}

} // namespace detail

/// Least-squares cross-validation
///   CV(T) = int f_hat^2 dnu - (2/n) sum_i f_hat^{(-i)}(Z_i)
/// for each T in the grid; the leave-one-out sum is formed in coefficient
/// space and int f_hat^2 by product quadrature. Ties go to the smaller T.
inline CvResult select_T_density(const Dataset& data, std::shared_ptr<const TransformBlocks> blocks,
                                 std::span<const double> T_grid) {
  detail::check_grid(T_grid);
  data.validate(2);
  const int d = data.d;
  if (blocks->dim != d) throw DomainError("model and dataset dimensions differ");
  int Lmax = 0;
  for (double t : T_grid) Lmax = std::max(Lmax, static_cast<int>(std::floor(t)));
  const DeconvKernel kmax(blocks, Lmax);
  const BasisEvaluator& ev = kmax.basis();
  const double n = static_cast<double>(data.size());

  // c = mean conj(B(Z_i)); diag[l] = sum_i Re B_l(Z_i)^T (phi~^l)^{-1} conj(B_l(Z_i)).
  std::vector<cplx> c(ev.size(), cplx(0.0));
  std::vector<double> diag(static_cast<std::size_t>(Lmax + 1), 0.0);
  std::vector<cplx> tmp(ev.size());
  detail::for_each_basis(ev, data.Z, [&](std::size_t, std::span<const cplx> b) {
    for (std::size_t q = 0; q < b.size(); ++q) {
      c[q] += std::conj(b[q]);
      tmp[q] = std::conj(b[q]);
    }
    kmax.apply_inverse(tmp);
    for (int l = 0; l <= Lmax; ++l) {
      cplx s = 0.0;
      for (std::size_t q = ev.offset(l); q < ev.offset(l) + ev.degree_size(l); ++q) s += b[q] * tmp[q];
      diag[l] += s.real();
    }
  });
  for (auto& v : c) v /= n;
  std::vector<cplx> a = c;
  kmax.apply_inverse(a);

  const SphereQuadrature quad = product_quadrature(d, 2 * Lmax + 8);
  const Eigen::MatrixXcd Bq = detail::basis_matrix(ev, quad.nodes);

  CvResult res;
  res.grid.assign(T_grid.begin(), T_grid.end());
  for (double t : T_grid) {
    const int L = static_cast<int>(std::floor(t));
    const auto M = static_cast<Eigen::Index>(ev.offset(L) + ev.degree_size(L));
    const Eigen::Map<const Eigen::VectorXcd> av(a.data(), M);
    const Eigen::VectorXd f = (Bq.leftCols(M) * av).real();
    double sq = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) sq += quad.weights[i] * f(i) * f(i);
    double cross = 0.0, dsum = 0.0;
    for (Eigen::Index q = 0; q < M; ++q) cross += (std::conj(c[q]) * a[q]).real();
    for (int l = 0; l <= L; ++l) dsum += diag[l];
    const double loo = (n * n * cross - dsum) / (n - 1.0);
    res.score.push_back(sq - 2.0 / n * loo);
  }
  double scale = 0.0;
  for (double s : res.score)
    if (std::isfinite(s)) scale = std::max(scale, std::abs(s));
  res.T = res.grid[detail::argmin_smallest(res.grid, res.score, 1e-12 * scale)];
  return res;
}

namespace detail {

inline std::shared_ptr<const TransformBlocks> blocks_for_grid(const ErrorModel& model, std::span<const double> T_grid) {
  check_grid(T_grid);
  int Lmax = 0;
  for (double t : T_grid) Lmax = std::max(Lmax, static_cast<int>(std::floor(t)));
  return std::make_shared<const TransformBlocks>(transform_blocks(model, Lmax));
}

} // namespace detail

inline CvResult select_T_density(const Dataset& data, const ErrorModel& model, std::span<const double> T_grid) {
  if (model.dim() != data.d) throw DomainError("model and dataset dimensions differ");
  data.validate(2);
  return select_T_density(data, detail::blocks_for_grid(model, T_grid), T_grid);
}

namespace detail {

//! Seeded Fisher-Yates fold labels 0..folds-1, balanced.
inline std::vector<int> fold_labels(std::size_t n, int folds, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(perm[i - 1], perm[std::min(j, i - 1)]);
  }
  std::vector<int> label(n);
  for (std::size_t r = 0; r < n; ++r) label[perm[r]] = static_cast<int>(r % static_cast<std::size_t>(folds));
  return label;
}

} // namespace detail

/// K-fold cross-validation of the regression estimator at the observed Z_i.
/// Minimizes sum_i (Y_i - m_hat^{(-fold(i))}(Z_i))^2; ties go to the smaller T.
inline CvResult select_T_regression(const Dataset& data, std::shared_ptr<const TransformBlocks> blocks,
                                    std::span<const double> T_grid, int folds = 5, std::uint64_t seed = 0) {
  detail::check_grid(T_grid);
  data.validate(1);
  if (!data.has_response()) throw DomainError("regression cross-validation requires responses");
  if (folds < 2) throw DomainError("need at least 2 folds");
  if (data.size() < static_cast<std::size_t>(folds)) throw DomainError("fewer observations than folds");
  if (blocks->dim != data.d) throw DomainError("model and dataset dimensions differ");
  int Lmax = 0;
  for (double t : T_grid) Lmax = std::max(Lmax, static_cast<int>(std::floor(t)));
  const DeconvKernel kmax(blocks, Lmax);
  const BasisEvaluator& ev = kmax.basis();
  const std::size_t M = ev.size();
  const std::vector<int> label = detail::fold_labels(data.size(), folds, seed);

  // Per-fold sums of conj(B) and Y conj(B).
  std::vector<std::vector<cplx>> den(folds, std::vector<cplx>(M)), num(folds, std::vector<cplx>(M));
  std::vector<cplx> tden(M), tnum(M);
  detail::for_each_basis(ev, data.Z, [&](std::size_t i, std::span<const cplx> b) {
    auto& dn = den[label[i]];
    auto& nm = num[label[i]];
    for (std::size_t q = 0; q < M; ++q) {
      dn[q] += std::conj(b[q]);
      nm[q] += data.Y[i] * std::conj(b[q]);
    }
  });
  for (int f = 0; f < folds; ++f)
    for (std::size_t q = 0; q < M; ++q) {
      tden[q] += den[f][q];
      tnum[q] += num[f][q];
    }
  // Training coefficients with the inverse applied, per fold (scale cancels in the ratio).
  std::vector<std::vector<cplx>> aden(folds), anum(folds);
  for (int f = 0; f < folds; ++f) {
    aden[f].resize(M);
    anum[f].resize(M);
    for (std::size_t q = 0; q < M; ++q) {
      aden[f][q] = tden[q] - den[f][q];
      anum[f][q] = tnum[q] - num[f][q];
    }
    kmax.apply_inverse(aden[f]);
    kmax.apply_inverse(anum[f]);
  }

  std::vector<int> Ls;
  for (double t : T_grid) Ls.push_back(static_cast<int>(std::floor(t)));
  std::vector<double> sse(T_grid.size(), 0.0);
  std::vector<double> pden(static_cast<std::size_t>(Lmax + 1)), pnum(static_cast<std::size_t>(Lmax + 1));
  detail::for_each_basis(ev, data.Z, [&](std::size_t i, std::span<const cplx> b) {
    const auto& ad = aden[label[i]];
    const auto& an = anum[label[i]];
    double cd = 0.0, cn = 0.0;
    for (int l = 0; l <= Lmax; ++l) {
      cplx sd = 0.0, sn = 0.0;
      for (std::size_t q = ev.offset(l); q < ev.offset(l) + ev.degree_size(l); ++q) {
        sd += b[q] * ad[q];
        sn += b[q] * an[q];
      }
      cd += sd.real();
      cn += sn.real();
      pden[l] = cd;
      pnum[l] = cn;
    }
    for (std::size_t t = 0; t < Ls.size(); ++t) {
      const double pred = pnum[Ls[t]] / pden[Ls[t]];
      const double e = data.Y[i] - pred;
      sse[t] += std::isfinite(e) ? e * e : std::numeric_limits<double>::infinity();
    }
  });
  double y2 = 0.0;
  for (double y : data.Y) y2 += y * y;
  CvResult res;
  res.grid.assign(T_grid.begin(), T_grid.end());
  res.score = sse;
  res.T = res.grid[detail::argmin_smallest(res.grid, res.score, 1e-10 * y2)];
  return res;
}

inline CvResult select_T_regression(const Dataset& data, const ErrorModel& model, std::span<const double> T_grid,
                                    int folds = 5, std::uint64_t seed = 0) {
  if (model.dim() != data.d) throw DomainError("model and dataset dimensions differ");
  if (!data.has_response()) throw DomainError("regression cross-validation requires responses");
  if (folds >= 2 && data.size() < static_cast<std::size_t>(folds)) throw DomainError("fewer observations than folds");
  return select_T_regression(data, detail::blocks_for_grid(model, T_grid), T_grid, folds, seed);
}

} // namespace sphdeconv
