#pragma once

// CSV input/output for longitude/latitude data and estimate grids.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "estimators.hpp"
#include "simulation.hpp"
#include "sphere_geom.hpp"

namespace sphdeconv {

inline constexpr double kDeg = kPi / 180.0;

//! theta = 90 deg - latitude, phi = longitude; longitude 360 wraps to 0.
inline SpherePoint from_lonlat(double lon_deg, double lat_deg) {
  if (!(lat_deg >= -90.0 && lat_deg <= 90.0)) throw InputError("latitude outside [-90, 90]: " + format_g17(lat_deg));
  if (!(lon_deg >= 0.0 && lon_deg <= 360.0)) throw InputError("longitude outside [0, 360): " + format_g17(lon_deg));
  double phi = lon_deg * kDeg;
  if (phi >= kTwoPi) phi = 0.0;
  const double theta = std::clamp((90.0 - lat_deg) * kDeg, 0.0, kPi);
  return from_angles(2, phi, {theta});
}

struct LonLat {
  double lon, lat;
};

inline LonLat to_lonlat(const SpherePoint& x) {
  if (x.dim() != 2) throw DomainError("longitude/latitude needs a point on S^2");
  const auto a = to_angles(x);
  return {a.phi / kDeg, 90.0 - a.theta[0] / kDeg};
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

inline double parse_number(const std::string& s, std::size_t line, const std::string& col) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw InputError("line " + std::to_string(line) + ": column '" + col + "' is not a number: '" + s + "'");
  }
  if (pos != s.size() || !std::isfinite(v))
    throw InputError("line " + std::to_string(line) + ": column '" + col + "' is not a finite number: '" + s + "'");
  return v;
}

} // namespace detail

/// Reads a CSV with header containing lon and lat (degrees), and y when
/// `need_response` is set. Other columns are ignored.
inline Dataset read_lonlat_csv(std::istream& in, bool need_response) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") != std::string::npos) break;
  }
  if (in.fail() && line.empty()) throw InputError("empty input: missing header row");
  const auto header = detail::split_csv(line);
  const auto find = [&](const std::string& name) -> long {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<long>(i);
    return -1;
  };
  const long ilon = find("lon"), ilat = find("lat"), iy = find("y");
  if (ilon < 0) throw InputError("missing column 'lon'");
  if (ilat < 0) throw InputError("missing column 'lat'");
  if (need_response && iy < 0) throw InputError("missing column 'y'");
  Dataset ds;
  ds.d = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != header.size())
      throw InputError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(f.size()));
    const double lon = detail::parse_number(f[ilon], lineno, "lon");
    const double lat = detail::parse_number(f[ilat], lineno, "lat");
    try {
      ds.Z.push_back(from_lonlat(lon, lat));
    } catch (const InputError& e) {
      throw InputError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (need_response) ds.Y.push_back(detail::parse_number(f[iy], lineno, "y"));
  }
  if (ds.Z.empty()) throw InputError("no observations in input");
  return ds;
}

inline Dataset read_lonlat_csv(const std::string& path, bool need_response) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open input file '" + path + "'");
  return read_lonlat_csv(in, need_response);
}

inline void write_lonlat_csv(std::ostream& os, const Dataset& ds) {
  os << (ds.has_response() ? "lon,lat,y\n" : "lon,lat\n");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const LonLat ll = to_lonlat(ds.Z[i]);
    os << format_g17(ll.lon) << ',' << format_g17(ll.lat);
    if (ds.has_response()) os << ',' << format_g17(ds.Y[i]);
    os << '\n';
  }
}

//! Flag bits in the grid CSV.
inline constexpr int kFlagUnstable = 1;
inline constexpr int kFlagDegenerate = 2;

/// Grid CSV: lon,lat,estimate and, when intervals are present,
/// stderr,ci_low,ci_high,flag. The estimate is m_hat for regression grids.
inline void write_grid_csv(std::ostream& os, const EstimateGrid& g, std::size_t n) {
  const bool reg = !g.m_hat.empty();
  const bool ci = !g.ci_low.empty();
  os << "lon,lat,estimate";
  if (ci) os << ",stderr,ci_low,ci_high,flag";
  else if (reg) os << ",flag";
  os << '\n';
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const auto& s = reg ? g.s2 : g.s1;
  for (std::size_t j = 0; j < g.size(); ++j) {
    const LonLat ll = to_lonlat(g.nodes[j]);
    os << format_g17(ll.lon) << ',' << format_g17(ll.lat) << ',' << format_g17(reg ? g.m_hat[j] : g.f_hat[j]);
    int flag = 0;
    if (reg && g.unstable[j]) flag |= kFlagUnstable;
    if (ci && g.degenerate[j]) flag |= kFlagDegenerate;
    if (ci) os << ',' << format_g17(s[j] / sqrt_n) << ',' << format_g17(g.ci_low[j]) << ',' << format_g17(g.ci_high[j]);
    if (ci || reg) os << ',' << flag;
    os << '\n';
  }
}

} // namespace sphdeconv
