#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "sphdeconv/cli.hpp"
#include "sphdeconv/sampling.hpp"

using namespace sphdeconv;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out, log;
};

CliRun run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sphdeconv");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, log;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, log);
  return {code, out.str(), log.str()};
}

class CliTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("sphdeconv_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& f) const { return (dir_ / f).string(); }

  std::string write(const std::string& f, const std::string& text) const {
    std::ofstream(path(f)) << text;
    return path(f);
  }

  //! Uniform points on S^2 as lon/lat CSV, optionally with a response column.
  std::string uniform_csv(const std::string& f, int n, const std::string& y = "") const {
    Rng rng(3);
    Dataset ds;
    for (int i = 0; i < n; ++i) ds.Z.push_back(uniform_sphere(2, rng));
    if (!y.empty()) ds.Y.assign(n, std::stod(y));
    std::ostringstream os;
    write_lonlat_csv(os, ds);
    return write(f, os.str());
  }

  static std::vector<std::vector<double>> parse_csv(const std::string& text, std::string* header = nullptr) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    if (header) *header = line;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
      std::vector<double> r;
      std::stringstream ss(line);
      std::string tok;
      while (std::getline(ss, tok, ',')) r.push_back(std::stod(tok));
      rows.push_back(r);
    }
    return rows;
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  fs::path dir_;
};

} // namespace

TEST(LonLat, RoundTrip) {
  Rng rng(9);
  for (int i = 0; i < 500; ++i) {
    const double lon = 360.0 * uniform01(rng);
    const double lat = -89.0 + 178.0 * uniform01(rng);
    const LonLat back = to_lonlat(from_lonlat(lon, lat));
    EXPECT_NEAR(back.lon, lon, 1e-9);
    EXPECT_NEAR(back.lat, lat, 1e-9);
  }
  const SpherePoint np = from_lonlat(123.0, 90.0);
  EXPECT_NEAR(np[2], 1.0, 1e-15);
  const SpherePoint e = from_lonlat(90.0, 0.0);
  EXPECT_NEAR(e[1], 1.0, 1e-15);
  EXPECT_THROW(from_lonlat(10.0, 91.0), InputError);
  EXPECT_THROW(from_lonlat(-1.0, 0.0), InputError);
}

TEST(ReadCsv, Errors) {
  std::istringstream a("lon,lat\n10,20\n30,x\n");
  try {
    read_lonlat_csv(a, false);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  std::istringstream b("lon,lat\n10,20\n");
  try {
    read_lonlat_csv(b, true);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("'y'"), std::string::npos);
  }
  std::istringstream c("lat,y,lon\n-10, 1.5 ,350\n");
  const Dataset ds = read_lonlat_csv(c, true);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.Y[0], 1.5);
  EXPECT_NEAR(to_lonlat(ds.Z[0]).lon, 350.0, 1e-9);
  std::istringstream d("");
  EXPECT_THROW(read_lonlat_csv(d, false), InputError);
}

TEST(ParseTGrid, Forms) {
  EXPECT_EQ(cli::parse_T_grid("1..4"), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(cli::parse_T_grid("grid=1..3"), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(cli::parse_T_grid("0..1:0.5"), (std::vector<double>{0, 0.5, 1}));
  EXPECT_EQ(cli::parse_T_grid("2,5,7.5"), (std::vector<double>{2, 5, 7.5}));
  EXPECT_THROW(cli::parse_T_grid("3..1"), ConfigError);
  EXPECT_THROW(cli::parse_T_grid("a"), ConfigError);
  EXPECT_THROW(cli::parse_T_grid("-1"), ConfigError);
}

TEST_F(CliTest, DensityUniformT0) {
  const auto in = uniform_csv("u.csv", 100);
  const CliRun r = run_cli({"density", in, "--model", "error-free", "--T", "0", "--grid-res", "6"});
  ASSERT_EQ(r.code, 0) << r.log;
  std::string header;
  const auto rows = parse_csv(r.out, &header);
  EXPECT_EQ(header, "lon,lat,estimate");
  ASSERT_EQ(rows.size(), 72u);
  for (const auto& row : rows) EXPECT_NEAR(row[2], 1.0 / (4 * kPi), 1e-15);
}

TEST_F(CliTest, DensityMassAndIntervals) {
  const auto in = uniform_csv("u.csv", 300);
  const CliRun r = run_cli({"density", in, "--lambda", "0.2", "--T-grid", "0..6", "--ci", "el", "--grid-res", "8",
                         "--out", path("g.csv")});
  ASSERT_EQ(r.code, 0) << r.log;
  EXPECT_NE(r.log.find("LSCV selected T"), std::string::npos);
  std::string header;
  const auto rows = parse_csv(slurp(path("g.csv")), &header);
  EXPECT_EQ(header, "lon,lat,estimate,stderr,ci_low,ci_high,flag");
  const auto q = product_quadrature(2, 8);
  ASSERT_EQ(rows.size(), q.nodes.size());
  double mass = 0.0;
  bool asymmetric = false;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    mass += q.weights[j] * rows[j][2];
    EXPECT_LE(rows[j][4], rows[j][2]);
    EXPECT_GE(rows[j][5], rows[j][2]);
    if (std::abs((rows[j][5] - rows[j][2]) - (rows[j][2] - rows[j][4])) > 1e-6 * (rows[j][5] - rows[j][4]))
      asymmetric = true;
  }
  EXPECT_NEAR(mass, 1.0, 1e-6);
  EXPECT_TRUE(asymmetric);
}

TEST_F(CliTest, RegressConstantResponse) {
  const auto in = uniform_csv("y.csv", 200, "3.25");
  const CliRun r = run_cli({"regress", in, "--lambda", "0.3", "--select-T", "grid=1..10", "--grid-res", "6"});
  ASSERT_EQ(r.code, 0) << r.log;
  EXPECT_NE(r.log.find("5-fold selected T = 1\n"), std::string::npos) << r.log;
  for (const auto& row : parse_csv(r.out))
    if (row[3] == 0) EXPECT_NEAR(row[2], 3.25, 1e-9);
}

TEST_F(CliTest, ExitCodes) {
  const auto in = uniform_csv("u.csv", 50);
  CliRun r = run_cli({"regress", in});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.log.find("'y'"), std::string::npos);
  EXPECT_EQ(run_cli({"density", path("missing.csv")}).code, 2);
  EXPECT_EQ(run_cli({"density", write("bad.csv", "lon,lat\n1,2\n3\n")}).code, 2);
  r = run_cli({"density", in, "--model", "gaussian", "--lambda", "3", "--T", "30"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.log.find("degree"), std::string::npos);
  EXPECT_EQ(run_cli({"density", in, "--model", "cauchy"}).code, 4);
  EXPECT_EQ(run_cli({"density", in, "--ci", "maybe"}).code, 4);
  EXPECT_EQ(run_cli({"density", in, "--T", "2", "--T-grid", "1..3"}).code, 4);
  EXPECT_EQ(run_cli({"density", in, "--unknown"}).code, 4);
  EXPECT_EQ(run_cli({}).code, 4);
}

TEST_F(CliTest, ConfigFile) {
  const auto in = uniform_csv("u.csv", 80);
  const auto cfg = write("run.cfg", "# density run\ninput = " + in + "\nmodel = error-free\nT = 0\ngrid-res = 4\n");
  CliRun r = run_cli({"density", "--config", cfg});
  ASSERT_EQ(r.code, 0) << r.log;
  EXPECT_NE(r.log.find("model error-free"), std::string::npos);
  EXPECT_EQ(parse_csv(r.out).size(), 32u);
  // Command-line values take precedence over the file.
  r = run_cli({"density", "--config", cfg, "--grid-res", "6"});
  EXPECT_EQ(parse_csv(r.out).size(), 72u);
  const auto bad = write("bad.cfg", "model = laplace\nbandwidth = 3\n");
  r = run_cli({"density", in, "--config", bad});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.log.find("bandwidth"), std::string::npos);
  EXPECT_EQ(run_cli({"density", in, "--config", path("nope.cfg")}).code, 4);
}

TEST_F(CliTest, SimulateSmokeAndDeterminism) {
  const auto t0 = std::chrono::steady_clock::now();
  const CliRun a = run_cli({"simulate", "--preset", "s1-desk", "--R", "2", "--out", path("a")});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ASSERT_EQ(a.code, 0) << a.log;
  EXPECT_LT(secs, 60.0);
  const CliRun b = run_cli({"simulate", "--preset", "s1-desk", "--R", "2", "--out", path("b")});
  ASSERT_EQ(b.code, 0);
  for (const char* f : {"table1.csv", "table2.csv", "report.txt"})
    EXPECT_EQ(slurp(path("a/") + f), slurp(path("b/") + f)) << f;
  const auto lines = [](const std::string& text) {
    std::vector<std::string> v;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) v.push_back(l);
    return v;
  };
  const auto t1 = lines(slurp(path("a/table1.csv"))), t2 = lines(slurp(path("a/table2.csv")));
  ASSERT_EQ(t1.size(), 5u);
  ASSERT_EQ(t2.size(), 9u);
  EXPECT_EQ(t1[0], "scenario,n,estimator,ISB,IV,IMSE");
  EXPECT_EQ(t2[0], "level,n,method,coverage,length");
  EXPECT_EQ(t1[1].rfind("S1,250,deconvolution,", 0), 0u);
  EXPECT_EQ(run_cli({"simulate", "--preset", "nope", "--out", path("c")}).code, 4);
}
