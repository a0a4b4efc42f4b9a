#pragma once

// Command-line front end: density, regress and simulate subcommands.
// Exit codes: 0 success, 2 malformed input, 3 numerical failure, 4 config error.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "error_model.hpp"
#include "errors.hpp"
#include "estimators.hpp"
#include "inference.hpp"
#include "io.hpp"
#include "simulation.hpp"

namespace sphdeconv::cli {

enum ExitCode { kOk = 0, kInputError = 2, kNumericalError = 3, kConfigError = 4 };

struct ModelOptions {
  std::string model = "laplace";
  double lambda = 0.0;
  double theta = 0.5;
  int p = 1;
  std::string orientation;
};

/// Parses "a..b" (unit steps), "a..b:step" or a comma list. A leading
/// "grid=" is accepted.
inline std::vector<double> parse_T_grid(std::string s) {
  if (s.rfind("grid=", 0) == 0) s = s.substr(5);
  std::vector<double> out;
  const auto num = [&](const std::string& t) {
    std::size_t pos = 0;
    double v;
    try {
      v = std::stod(t, &pos);
    } catch (const std::exception&) {
      throw ConfigError("bad T grid value '" + t + "'");
    }
    if (pos != t.size() || !(v >= 0.0) || !std::isfinite(v)) throw ConfigError("bad T grid value '" + t + "'");
    return v;
  };
  const auto dots = s.find("..");
  if (dots != std::string::npos) {
    std::string rest = s.substr(dots + 2);
    double step = 1.0;
    const auto colon = rest.find(':');
    if (colon != std::string::npos) {
      step = num(rest.substr(colon + 1));
      rest = rest.substr(0, colon);
    }
    const double a = num(s.substr(0, dots)), b = num(rest);
    if (!(step > 0.0) || b < a) throw ConfigError("bad T grid range '" + s + "'");
    const auto count = static_cast<long>(std::floor((b - a) / step + 1e-9));
    for (long i = 0; i <= count; ++i) out.push_back(a + static_cast<double>(i) * step);
  } else {
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(num(tok));
  }
  if (out.empty()) throw ConfigError("empty T grid");
  return out;
}

inline Rotation parse_orientation(const std::string& s) {
  if (s.empty()) return Rotation::identity(2);
  std::vector<double> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      v.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("bad orientation '" + s + "'");
    }
  }
  if (v.size() != 3) throw ConfigError("orientation needs three Euler angles 'phi,theta,psi'");
  try {
    return rotation_from_euler(v[0], v[1], v[2]);
  } catch (const DomainError& e) {
    throw ConfigError(std::string("orientation: ") + e.what());
  }
}

inline ErrorModel build_model(const ModelOptions& o) {
  try {
    if (o.model == "error-free" || o.model == "none") return ErrorModel::error_free(2);
    if (o.model == "laplace" || o.model == "gaussian") {
      if (!(o.lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
      if (o.lambda == 0.0) return ErrorModel::error_free(2);
      return o.model == "laplace" ? ErrorModel::laplace(2, o.lambda) : ErrorModel::gaussian(2, o.lambda);
    }
    if (o.model == "rosenthal") return ErrorModel::rosenthal(o.theta, o.p);
    if (o.model == "vmf") return ErrorModel::von_mises_fisher(2, o.lambda, parse_orientation(o.orientation));
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  } catch (const UnsupportedModel& e) {
    throw ConfigError(e.what());
  }
  throw ConfigError("unknown model '" + o.model + "' (error-free, laplace, gaussian, rosenthal, vmf)");
}

struct EstimateOptions {
  std::string input;
  std::string out = "-";
  ModelOptions model;
  std::optional<double> T;
  std::string T_grid;
  std::string ci = "none";
  double level = 0.95;
  int grid_res = 36;
  std::uint64_t seed = 1;
  int folds = 5;
};

struct SimulateOptions {
  std::string preset = "desk";
  std::optional<int> R;
  std::vector<int> ns;
  std::optional<double> T;
  std::uint64_t seed = 20240531;
  std::string out = "sim_out";
};

namespace detail {

inline void add_model_options(CLI::App* sub, ModelOptions& m) {
  sub->add_option("--model", m.model, "error-free | laplace | gaussian | rosenthal | vmf")->capture_default_str();
  sub->add_option("--lambda", m.lambda, "Laplace/Gaussian/vMF parameter (0 means no error)")->capture_default_str();
  sub->add_option("--theta", m.theta, "Rosenthal rotation angle (radians)")->capture_default_str();
  sub->add_option("--p", m.p, "Rosenthal number of steps")->capture_default_str();
  sub->add_option("--orientation", m.orientation, "vMF mean rotation as ZYZ Euler angles 'phi,theta,psi'");
}

inline void add_estimate_options(CLI::App* sub, EstimateOptions& o) {
  sub->add_option("input,--input", o.input, "CSV with header lon,lat[,y] in degrees");
  sub->add_option("--out", o.out, "output grid CSV ('-' for stdout)")->capture_default_str();
  add_model_options(sub, o.model);
  sub->add_option("--T", o.T, "fixed truncation level");
  sub->add_option("--T-grid,--select-T", o.T_grid, "cross-validation grid: a..b, a..b:step or a list");
  sub->add_option("--ci", o.ci, "interval method")->check(CLI::IsMember({"an", "el", "none"}))->capture_default_str();
  sub->add_option("--level", o.level, "confidence level")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  sub->add_option("--grid-res", o.grid_res, "output grid: res latitudes x 2 res longitudes")
      ->check(CLI::Range(4, 2000))
      ->capture_default_str();
  sub->add_option("--seed", o.seed, "seed for fold assignment")->capture_default_str();
  sub->add_option("--config", "key = value configuration file; command-line flags take precedence");
}

/// Applies `key = value` lines (CLI11 INI reader, # comments) to options of
/// `sub` not already given on the command line. Unknown keys are rejected.
inline void apply_config(CLI::App* sub) {
  const CLI::Option* cfg = sub->get_option_no_throw("--config");
  if (cfg == nullptr || cfg->count() == 0) return;
  const std::string path = cfg->as<std::string>();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::ParseError& e) {
    throw ConfigError(std::string("config file: ") + e.what());
  }
  for (const auto& it : items) {
    if (!it.parents.empty() && !(it.parents.size() == 1 && it.parents[0] == sub->get_name()))
      throw ConfigError("unknown config section for key '" + it.name + "'");
    CLI::Option* opt = it.name == "config" ? nullptr : sub->get_option_no_throw("--" + it.name);
    if (opt == nullptr) throw ConfigError("unknown config key '" + it.name + "'");
    if (opt->count() > 0) continue;
    try {
      for (const auto& v : it.inputs) opt->add_result(v);
      opt->run_callback();
    } catch (const CLI::ParseError& e) {
      throw ConfigError("config key '" + it.name + "': " + e.what());
    }
  }
}

inline void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write output file '" + path + "'");
  f << text;
}

inline double grid_mass(const EstimateGrid& g, const SphereQuadrature& q) {
  double s = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) s += q.weights[j] * g.f_hat[j];
  return s;
}

inline int run_estimate(const EstimateOptions& o, bool regression, std::ostream& out, std::ostream& log) {
  if (o.input.empty()) throw ConfigError("no input file given");
  const ErrorModel model = build_model(o.model);
  if (!(o.level > 0.0 && o.level < 1.0)) throw ConfigError("level must lie in (0, 1)");
  if (o.T && !(*o.T >= 0.0)) throw ConfigError("T must be >= 0");
  if (o.T && !o.T_grid.empty()) throw ConfigError("give either --T or --T-grid, not both");
  const std::vector<double> T_grid = parse_T_grid(o.T_grid.empty() ? (regression ? "1..10" : "0..30") : o.T_grid);
  const Dataset ds = read_lonlat_csv(o.input, regression);
  log << "read " << ds.size() << " observations from " << o.input << "\n";
  log << "model " << model.name() << "\n";
  if (o.ci != "none")
    if (auto w = scenario_warning(model)) log << "warning: " << *w << "\n";

  double T;
  if (o.T) {
    T = *o.T;
  } else {
    const CvResult cv = regression ? select_T_regression(ds, model, T_grid, o.folds, o.seed)
                                   : select_T_density(ds, model, T_grid);
    T = cv.T;
    log << (regression ? "5-fold" : "LSCV") << " selected T = " << format_g17(T) << "\n";
  }
  const DeconvKernel k(model, T);
  const SphereQuadrature grid = product_quadrature(2, o.grid_res);
  EstimateGrid g = regression ? regression_estimate(ds, k, grid.nodes) : density_estimate(ds, k, grid.nodes);
  log << "T = " << format_g17(T) << "\n";
  log << "mass = " << format_g17(grid_mass(g, grid)) << "\n";
  if (o.ci != "none") attach_intervals(g, ds, k, o.level, o.ci == "an" ? IntervalMethod::AN : IntervalMethod::EL);
  if (regression) {
    std::size_t unstable = 0;
    for (auto u : g.unstable) unstable += u;
    if (unstable) log << "warning: " << unstable << " nodes with unstable density denominator\n";
  }
  std::ostringstream csv;
  write_grid_csv(csv, g, ds.size());
  write_output(o.out, csv.str(), out);
  return kOk;
}

struct Preset {
  std::vector<Scenario> mc;
  std::vector<Scenario> coverage;
  std::vector<int> ns;
  int R;
};

inline Preset find_preset(const std::string& name) {
  using S = Scenario;
  if (name == "desk") return {{S::S1, S::S2, S::S3}, {S::S1}, {250, 500}, 50};
  if (name == "s1-desk") return {{S::S1}, {S::S1}, {250, 500}, 50};
  if (name == "s2-desk") return {{S::S2}, {}, {250, 500}, 50};
  if (name == "s3-desk") return {{S::S3}, {}, {250, 500}, 50};
  if (name == "table1-desk") return {{S::S1, S::S2, S::S3}, {}, {250, 500}, 50};
  if (name == "table2-desk") return {{}, {S::S1}, {250, 500}, 50};
  if (name == "full") return {{S::S1, S::S2, S::S3}, {S::S1}, {250, 500}, 200};
  throw ConfigError("unknown preset '" + name + "' (desk, s1-desk, s2-desk, s3-desk, table1-desk, table2-desk, full)");
}

inline int run_simulate(const SimulateOptions& o, std::ostream& log) {
  Preset p = find_preset(o.preset);
  if (o.R) p.R = *o.R;
  if (!o.ns.empty()) p.ns = o.ns;
  std::filesystem::create_directories(o.out);
  const auto path = [&](const char* f) { return (std::filesystem::path(o.out) / f).string(); };
  std::ostringstream t1, t2, report;
  write_table1_header(t1);
  write_table2_header(t2);
  bool valid = true;
  const auto configure = [&](Scenario s, int n) {
    SimConfig c = scenario_config(s, n, p.R);
    c.seed = o.seed;
    if (o.T) c.fixed_T = *o.T;
    c.validate();
    return c;
  };
  for (Scenario s : p.mc)
    for (int n : p.ns) {
      const SimReport rep = mc_study(configure(s, n));
      write_table1_rows(t1, rep);
      report << "[table1 " << rep.label << " n=" << n << "]\n";
      write_report(report, rep);
      log << "table1 " << rep.label << " n=" << n << " done, failures " << rep.failures << "\n";
      valid = valid && rep.valid;
    }
  for (Scenario s : p.coverage)
    for (int n : p.ns) {
      const SimReport rep = coverage_study(configure(s, n));
      write_table2_rows(t2, rep);
      report << "[table2 " << rep.label << " n=" << n << "]\n";
      write_report(report, rep);
      log << "table2 " << rep.label << " n=" << n << " done, failures " << rep.failures << "\n";
      valid = valid && rep.valid;
    }
  std::ostream& sink = log;
  write_output(path("table1.csv"), t1.str(), sink);
  write_output(path("table2.csv"), t2.str(), sink);
  write_output(path("report.txt"), report.str(), sink);
  if (!valid) {
    log << "error: more than 5% of replicates failed; see report.txt\n";
    return kNumericalError;
  }
  return kOk;
}

} // namespace detail

/// Parses arguments and runs one subcommand. Grid CSV goes to `out` when
/// --out is '-'; progress and diagnostics go to `log`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& log = std::cerr) {
  CLI::App app{"Deconvolution density and regression estimation on the sphere"};
  app.require_subcommand(1);
  EstimateOptions dens, reg;
  SimulateOptions sim;
  auto* d = app.add_subcommand("density", "deconvolution density estimate on a lon/lat grid");
  detail::add_estimate_options(d, dens);
  auto* r = app.add_subcommand("regress", "deconvolution regression estimate on a lon/lat grid");
  detail::add_estimate_options(r, reg);
  r->add_option("--folds", reg.folds, "cross-validation folds")->check(CLI::Range(2, 1000))->capture_default_str();
  auto* s = app.add_subcommand("simulate", "Monte Carlo study: writes table1.csv, table2.csv and report.txt");
  s->add_option("--preset", sim.preset, "desk | s1-desk | s2-desk | s3-desk | table1-desk | table2-desk | full")
      ->capture_default_str();
  s->add_option("--R", sim.R, "replicates per configuration")->check(CLI::Range(2, 100000));
  s->add_option("--n", sim.ns, "sample sizes")->check(CLI::Range(10, 10000000));
  s->add_option("--T", sim.T, "fixed truncation instead of per-replicate cross-validation");
  s->add_option("--seed", sim.seed, "base seed")->capture_default_str();
  s->add_option("--out", sim.out, "output directory")->capture_default_str();
  s->add_option("--config", "key = value configuration file; command-line flags take precedence");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    log << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  try {
    for (auto* sub : {d, r, s})
      if (sub->parsed()) detail::apply_config(sub);
    if (d->parsed()) return detail::run_estimate(dens, false, out, log);
    if (r->parsed()) return detail::run_estimate(reg, true, out, log);
    return detail::run_simulate(sim, log);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const InputError& e) {
    log << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const InvertibilityError& e) {
    log << "numerical failure: degree " << e.degree << ", condition " << format_g17(e.condition) << ": " << e.what()
        << "\n";
    return kNumericalError;
  } catch (const DegreeOverflow& e) {
    log << "numerical failure: degree " << e.degree << ": " << e.what() << "\n";
    return kNumericalError;
  } catch (const DomainError& e) {
    log << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::filesystem::filesystem_error& e) {
    log << "input error: " << e.what() << "\n";
    return kInputError;
  }
}

} // namespace sphdeconv::cli
