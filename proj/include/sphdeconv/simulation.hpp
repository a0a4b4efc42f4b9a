#pragma once

// Monte Carlo harness for regression with rotational measurement error on S^2:
// ISB / IV / IMSE of the deconvolution and naive estimators, and coverage of
// AN and EL intervals.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "error_model.hpp"
#include "errors.hpp"
#include "estimators.hpp"
#include "inference.hpp"
#include "sampling.hpp"
#include "sphere_geom.hpp"

namespace sphdeconv {

struct SimConfig {
  std::string label = "S1";
  ErrorModel model = ErrorModel::laplace(2, 0.5);
  int n = 250;
  int R = 50;
  std::vector<double> T_grid = {1, 2, 3, 4, 5, 6};
  std::optional<double> fixed_T;
  int folds = 5;
  int quad_res = 24;
  int grid_size = 400;
  std::vector<double> levels = {0.90, 0.95};
  double x_kappa = 0.1;
  double noise_sd = 0.5;
  std::uint64_t seed = 20240531;

  void validate() const {
    if (R < 2) throw ConfigError("R must be >= 2");
    if (n < 10) throw ConfigError("n must be >= 10");
    if (model.dim() != 2) throw ConfigError("simulation runs on S^2 only");
    if (T_grid.empty() && !fixed_T) throw ConfigError("need a T grid or a fixed T");
    for (double t : T_grid)
      if (!(t >= 0.0)) throw ConfigError("T grid values must be >= 0");
    if (fixed_T && !(*fixed_T >= 0.0)) throw ConfigError("fixed T must be >= 0");
    if (folds < 2 || folds > n) throw ConfigError("folds must lie in [2, n]");
    if (quad_res < 4) throw ConfigError("quadrature resolution must be >= 4");
    if (grid_size < 1) throw ConfigError("grid size must be >= 1");
    for (double l : levels)
      if (!(l > 0.0 && l < 1.0)) throw ConfigError("levels must lie in (0, 1)");
    if (!(x_kappa >= 0.0) || !(noise_sd >= 0.0)) throw ConfigError("invalid generator parameters");
  }
};

//! The three error scenarios of the regression study.
inline ErrorModel scenario_model(Scenario s) {
  switch (s) {
  case Scenario::S1: return ErrorModel::laplace(2, 0.5);
  case Scenario::S2: return ErrorModel::gaussian(2, 0.5);
  case Scenario::S3: return ErrorModel::von_mises_fisher(2, 2.0, Rotation::identity(2));
  }
  throw ConfigError("unknown scenario");
}

inline SimConfig scenario_config(Scenario s, int n, int R = 50) {
  SimConfig c;
  c.label = to_string(s);
  c.model = scenario_model(s);
  c.n = n;
  c.R = R;
  return c;
}

//! True regression function m(x) = x_1 + x_2 + x_3.
inline double true_regression(const SpherePoint& x) { return x[0] + x[1] + x[2]; }

inline SpherePoint x_mean_direction() {
  const double c = 1.0 / std::sqrt(3.0);
  return SpherePoint::from_coords({c, c, c});
}

/// Replicate r: X ~ vMF(kappa, (1,1,1)/sqrt 3), U from the error model,
/// Y = m(X) + N(0, sd^2), Z = U X. Streams are derived from (seed, r).
inline Dataset generate_replicate(const SimConfig& cfg, int r) {
  if (r < 0 || r >= cfg.R) throw DomainError("replicate index out of range");
  const std::uint64_t base = derive_seed(cfg.seed, static_cast<std::uint64_t>(r));
  Dataset ds;
  ds.d = 2;
  ds.X = sample_vmf_sphere(x_mean_direction(), cfg.x_kappa, cfg.n, derive_seed(base, 0));
  const auto U = sample_error(cfg.model, cfg.n, derive_seed(base, 1));
  Rng rng(derive_seed(base, 2));
  ds.Z.reserve(cfg.n);
  ds.Y.reserve(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    ds.Z.push_back(cfg.model.kind() == ErrorKind::ErrorFree ? ds.X[i] : apply(U[i], ds.X[i]));
    ds.Y.push_back(true_regression(ds.X[i]) + cfg.noise_sd * standard_normal(rng));
  }
  return ds;
}

struct EstimatorSummary {
  std::string estimator;
  double isb = 0.0, iv = 0.0, imse = 0.0;
  std::vector<double> T_chosen;
};

struct IntervalSummary {
  double level = 0.95;
  IntervalMethod method = IntervalMethod::AN;
  double coverage = 0.0;
  double length = 0.0;
  long degenerate = 0;
};

struct SimReport {
  std::string label;
  int n = 0;
  int R = 0;
  int failures = 0;
  std::vector<std::string> failure_messages;
  bool valid = true;
  std::vector<EstimatorSummary> estimators;
  std::vector<IntervalSummary> intervals;
};

namespace detail {

inline double choose_T(const SimConfig& cfg, const Dataset& ds, std::shared_ptr<const TransformBlocks> blocks,
                       int r) {
  if (cfg.fixed_T) return *cfg.fixed_T;
  return select_T_regression(ds, std::move(blocks), cfg.T_grid, cfg.folds,
                             derive_seed(cfg.seed ^ 0x5eedf01dULL, static_cast<std::uint64_t>(r)))
      .T;
}

inline int max_degree(const SimConfig& cfg) {
  double t = cfg.fixed_T.value_or(0.0);
  for (double v : cfg.T_grid) t = std::max(t, v);
  return static_cast<int>(std::floor(t));
}

inline void finish_validity(SimReport& rep) {
  rep.valid = rep.failures * 20 <= rep.R && rep.failures < rep.R;
}

} // namespace detail

/// Runs R replicates of m_hat and m_hat^naive, each with its own
/// cross-validated T, and integrates ISB, IV and IMSE by product quadrature.
/// Replicates that throw or produce non-finite values are excluded and counted.
inline SimReport mc_study(const SimConfig& cfg) {
  cfg.validate();
  const int Lmax = detail::max_degree(cfg);
  const auto blocks = std::make_shared<const TransformBlocks>(transform_blocks(cfg.model, Lmax));
  const auto free_blocks = std::make_shared<const TransformBlocks>(transform_blocks(ErrorModel::error_free(2), Lmax));
  const SphereQuadrature quad = product_quadrature(2, cfg.quad_res);
  const std::size_t Q = quad.nodes.size();
  std::vector<double> m_true(Q);
  for (std::size_t j = 0; j < Q; ++j) m_true[j] = true_regression(quad.nodes[j]);

  SimReport rep;
  rep.label = cfg.label;
  rep.n = cfg.n;
  rep.R = cfg.R;
  const char* names[2] = {"deconvolution", "naive"};
  std::vector<std::vector<double>> est[2];
  std::vector<double> Ts[2];
  for (int r = 0; r < cfg.R; ++r) {
    try {
      const Dataset ds = generate_replicate(cfg, r);
      std::vector<double> vals[2];
      double T[2];
      for (int e = 0; e < 2; ++e) {
        const auto& b = e == 0 ? blocks : free_blocks;
        T[e] = detail::choose_T(cfg, ds, b, r);
        vals[e] = regression_estimate(ds, DeconvKernel(b, T[e]), quad.nodes).m_hat;
        for (double v : vals[e])
          if (!std::isfinite(v)) throw InputError("non-finite regression estimate");
      }
      for (int e = 0; e < 2; ++e) {
        est[e].push_back(std::move(vals[e]));
        Ts[e].push_back(T[e]);
      }
    } catch (const std::exception& ex) {
      ++rep.failures;
      rep.failure_messages.push_back("replicate " + std::to_string(r) + ": " + ex.what());
    }
  }
  detail::finish_validity(rep);
  const std::size_t Rok = est[0].size();
  for (int e = 0; e < 2; ++e) {
    EstimatorSummary s;
    s.estimator = names[e];
    s.T_chosen = Ts[e];
    if (Rok > 0) {
      std::vector<double> mean(Q, 0.0);
      for (const auto& v : est[e])
        for (std::size_t j = 0; j < Q; ++j) mean[j] += v[j];
      for (double& v : mean) v /= static_cast<double>(Rok);
      for (std::size_t j = 0; j < Q; ++j) s.isb += quad.weights[j] * std::pow(mean[j] - m_true[j], 2);
      for (const auto& v : est[e]) {
        double iv = 0.0, ise = 0.0;
        for (std::size_t j = 0; j < Q; ++j) {
          iv += quad.weights[j] * std::pow(mean[j] - v[j], 2);
          ise += quad.weights[j] * std::pow(v[j] - m_true[j], 2);
        }
        s.iv += iv;
        s.imse += ise;
      }
      s.iv /= static_cast<double>(Rok);
      s.imse /= static_cast<double>(Rok);
    }
    rep.estimators.push_back(std::move(s));
  }
  return rep;
}

/// Coverage and length of AN and EL intervals for m on a Fibonacci grid,
/// averaged over nodes and replicates, for each level.
inline SimReport coverage_study(const SimConfig& cfg) {
  cfg.validate();
  const int Lmax = detail::max_degree(cfg);
  const auto blocks = std::make_shared<const TransformBlocks>(transform_blocks(cfg.model, Lmax));
  const std::vector<SpherePoint> grid = fibonacci_lattice(cfg.grid_size);
  std::vector<double> m_true(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) m_true[j] = true_regression(grid[j]);
  const double floor = density_floor(2);

  SimReport rep;
  rep.label = cfg.label;
  rep.n = cfg.n;
  rep.R = cfg.R;
  std::vector<IntervalSummary> acc;
  for (IntervalMethod method : {IntervalMethod::AN, IntervalMethod::EL})
    for (double level : cfg.levels) acc.push_back({level, method, 0.0, 0.0, 0});
  std::vector<double> T_chosen;
  int ok = 0;
  for (int r = 0; r < cfg.R; ++r) {
    try {
      const Dataset ds = generate_replicate(cfg, r);
      const double T = detail::choose_T(cfg, ds, blocks, r);
      const DeconvKernel k(blocks, T);
      std::vector<IntervalSummary> part = acc;
      for (auto& p : part) p.coverage = p.length = 0.0, p.degenerate = 0;
      std::vector<double> row(ds.size());
      for_each_kernel_rows(k, grid, ds.Z, [&](std::size_t g0, const Eigen::MatrixXd& rows) {
        for (Eigen::Index j = 0; j < rows.rows(); ++j) {
          for (std::size_t i = 0; i < row.size(); ++i) row[i] = rows(j, static_cast<Eigen::Index>(i));
          const double truth = m_true[g0 + static_cast<std::size_t>(j)];
          for (auto& p : part) {
            const ConfidenceInterval ci = p.method == IntervalMethod::AN
                                              ? an_interval_regression_row(row, ds.Y, p.level, floor)
                                              : el_interval_regression_row(row, ds.Y, p.level, floor);
            if (!std::isfinite(ci.low) || !std::isfinite(ci.high)) throw InputError("non-finite interval");
            p.coverage += ci.contains(truth) ? 1.0 : 0.0;
            p.length += ci.length();
            p.degenerate += ci.degenerate;
          }
        }
      });
      for (std::size_t a = 0; a < acc.size(); ++a) {
        acc[a].coverage += part[a].coverage / static_cast<double>(grid.size());
        acc[a].length += part[a].length / static_cast<double>(grid.size());
        acc[a].degenerate += part[a].degenerate;
      }
      T_chosen.push_back(T);
      ++ok;
    } catch (const std::exception& ex) {
      ++rep.failures;
      rep.failure_messages.push_back("replicate " + std::to_string(r) + ": " + ex.what());
    }
  }
  detail::finish_validity(rep);
  for (auto& a : acc) {
    if (ok > 0) {
      a.coverage /= ok;
      a.length /= ok;
    }
    rep.intervals.push_back(a);
  }
  rep.estimators.push_back({"deconvolution", 0.0, 0.0, 0.0, T_chosen});
  return rep;
}

// ---------------------------------------------------------------------------
// Output

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_report(std::ostream& os, const SimReport& rep) {
  os << "label = " << rep.label << "\n";
  os << "n = " << rep.n << "\n";
  os << "R = " << rep.R << "\n";
  os << "failures = " << rep.failures << "\n";
  os << "valid = " << (rep.valid ? "true" : "false") << "\n";
  for (const auto& e : rep.estimators) {
    if (e.isb != 0.0 || e.iv != 0.0 || e.imse != 0.0) {
      os << e.estimator << ".ISB = " << format_g17(e.isb) << "\n";
      os << e.estimator << ".IV = " << format_g17(e.iv) << "\n";
      os << e.estimator << ".IMSE = " << format_g17(e.imse) << "\n";
    }
    double mean_T = 0.0;
    for (double t : e.T_chosen) mean_T += t;
    if (!e.T_chosen.empty()) os << e.estimator << ".mean_T = " << format_g17(mean_T / e.T_chosen.size()) << "\n";
  }
  for (const auto& iv : rep.intervals) {
    const std::string key = std::string(to_string(iv.method)) + "." + format_g17(iv.level);
    os << key << ".coverage = " << format_g17(iv.coverage) << "\n";
    os << key << ".length = " << format_g17(iv.length) << "\n";
    os << key << ".degenerate = " << iv.degenerate << "\n";
  }
  for (const auto& m : rep.failure_messages) os << "# " << m << "\n";
}

inline void write_table1_header(std::ostream& os) { os << "scenario,n,estimator,ISB,IV,IMSE\n"; }

inline void write_table1_rows(std::ostream& os, const SimReport& rep) {
  for (const auto& e : rep.estimators)
    os << rep.label << ',' << rep.n << ',' << e.estimator << ',' << format_g17(e.isb) << ',' << format_g17(e.iv) << ','
       << format_g17(e.imse) << '\n';
}

inline void write_table2_header(std::ostream& os) { os << "level,n,method,coverage,length\n"; }

inline void write_table2_rows(std::ostream& os, const SimReport& rep) {
  for (const auto& iv : rep.intervals)
    os << format_g17(iv.level) << ',' << rep.n << ',' << to_string(iv.method) << ',' << format_g17(iv.coverage) << ','
       << format_g17(iv.length) << '\n';
}

} // namespace sphdeconv
