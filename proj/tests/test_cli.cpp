#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ionkerr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  Outcome run(const std::string& args) const {
    const std::string err_file = path("stderr.txt");
    const std::string cmd = "cd '" + dir_.string() + "' && '" IONKERR_CLI_PATH "' " + args + " 2>'" + err_file + "'";
    Outcome r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err_file);
    return r;
  }

  static std::string slurp(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  }

  void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

  fs::path dir_;
};

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string l;
  while (std::getline(in, l))
    if (!l.empty()) out.push_back(l);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  return out;
}

TEST_F(Cli, SpectrumDefaults) {
  const Outcome r = run("spectrum");
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_NEAR(j["fr_hz"].get<double>() / 1e3, 3613.2, 0.1);
  EXPECT_NEAR(j["fs_hz"].get<double>() / 1e3, 1716.0 * std::sqrt(3.0), 0.01);
  EXPECT_TRUE(j["validity"]["ok"].get<bool>());
  EXPECT_EQ(j["manifest"]["command"], "spectrum");
  EXPECT_FALSE(j["manifest"].contains("timestamp_utc"));
}

TEST_F(Cli, RadialBelowAxialIsUsageError) {
  const Outcome r = run("spectrum --fz-khz 2000 --fperp-mhz 1");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("omega_perp"), std::string::npos);
}

TEST_F(Cli, UnknownOptionIsUsageError) { EXPECT_EQ(run("chi --bogus 3").code, 2); }

TEST_F(Cli, ChiPerturbativeMatchesClosedForm) {
  const Outcome r = run("chi");
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_LT(j["relative_errors"]["perturbative_vs_closed_form"].get<double>(), 1e-10);
  EXPECT_LT(j["chi_closed_form_hz"].get<double>(), 0.0);
  EXPECT_FALSE(j.contains("chi_numeric_hz"));
}

TEST_F(Cli, ChiOracleWithinFivePercent) {
  const Outcome r = run("chi --oracle --nmax 12");
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_LT(j["relative_errors"]["numeric_vs_closed_form"].get<double>(), 0.05);
  EXPECT_EQ(j["oracle_basis_dimension"].get<int>(), 169);
}

TEST_F(Cli, NearResonanceExitsWithNumericalError) {
  // omega_s = 2 omega_r when omega_perp^2 = 7/4 omega_z^2.
  const double fperp_mhz = 1.716 * std::sqrt(1.75) * (1.0 + 1e-5);
  std::ostringstream args;
  args.precision(17);
  args << "chi --fperp-mhz " << fperp_mhz;
  const Outcome r = run(args.str());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("resonance guard"), std::string::npos) << r.err;
}

TEST_F(Cli, ScanIsMonotoneWithQuarticColumnBounded) {
  const Outcome r = run("scan --fz-range 860:1720 --points 10");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 11u);
  EXPECT_EQ(ls[0], "fz_khz,omega_z_rad_s,fr_khz,shift_hz_closed,shift_hz_quartic_only,validity_ok");
  double prev = 0.0;
  for (std::size_t i = 1; i < ls.size(); ++i) {
    const auto f = fields(ls[i]);
    ASSERT_EQ(f.size(), 6u);
    const double full = std::abs(std::stod(f[3]));
    const double quartic = std::abs(std::stod(f[4]));
    EXPECT_GT(full, prev);
    EXPECT_GT(quartic, 0.0);
    EXPECT_LT(quartic, full);
    prev = full;
  }
}

TEST_F(Cli, ScanSinglePoint) {
  const Outcome r = run("scan --fz-range 1716:1716 --points 5");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(r.out).size(), 2u);
}

TEST_F(Cli, ScanOracleColumn) {
  const Outcome r = run("scan --fz-range 1200:1700 --points 2 --oracle --nmax 10");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 3u);
  for (std::size_t i = 1; i < ls.size(); ++i) {
    const auto f = fields(ls[i]);
    ASSERT_EQ(f.size(), 7u);
    EXPECT_NEAR(std::stod(f[6]) / std::stod(f[3]), 1.0, 0.05);
  }
}

TEST_F(Cli, ScanBadRange) {
  EXPECT_EQ(run("scan --fz-range 1720:860").code, 2);
  EXPECT_EQ(run("scan --fz-range abc").code, 2);
}

TEST_F(Cli, SimulateIsByteIdenticalAcrossReruns) {
  const std::string args = "simulate --tau-ms 5,10,25 --nbar-x 3 --shots 50 --seed 11 --shift-hz -20.5 --out-prefix ";
  ASSERT_EQ(run(args + "a").code, 0);
  ASSERT_EQ(run(args + "b").code, 0);
  EXPECT_EQ(slurp(path("a_shots.csv")), slurp(path("b_shots.csv")));
  EXPECT_EQ(slurp(path("a_contrast.csv")), slurp(path("b_contrast.csv")));
  const auto ma = Json::parse(slurp(path("a_manifest.json")));
  EXPECT_EQ(ma["seed"].get<unsigned long long>(), 11ull);
  EXPECT_EQ(ma["configuration"]["tau-ms"].size(), 3u);
  EXPECT_EQ(lines(slurp(path("a_shots.csv"))).size(), 1u + 3u * 8u * 50u);
  EXPECT_NE(run(args + "c --seed 12").code, -1);
  EXPECT_NE(slurp(path("a_shots.csv")), slurp(path("c_shots.csv")));
}

TEST_F(Cli, EchoContrastTracksAnalyticValue) {
  const Outcome r = run(
      "simulate --protocol echo --tau-ms 10,30 --nbar-x 2 --shots 2000 --detuning-hz 500 --shift-hz -20.5 "
      "--no-shots --out-prefix e");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_FALSE(fs::exists(path("e_shots.csv")));
  const auto ls = lines(slurp(path("e_contrast.csv")));
  ASSERT_EQ(ls.size(), 3u);
  for (std::size_t i = 1; i < ls.size(); ++i) {
    const auto f = fields(ls[i]);
    EXPECT_NEAR(std::stod(f[2]), std::stod(f[7]), 4.0 * std::stod(f[3]));
  }
}

TEST_F(Cli, FitRevivalOnSimulatedCurve) {
  ASSERT_EQ(run("simulate --tau-grid-ms 0:100:1 --nbar-x 9 --shots 400 --seed 3 --shift-hz -20.5 --no-shots "
                "--out-prefix r")
                .code,
            0);
  const Outcome r = run("fit --model revival --input r_contrast.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_NEAR(j["fit"]["tau_star_s"].get<double>(), 1.0 / 20.5, 0.5e-3);
  EXPECT_NEAR(j["fit"]["nbar"].get<double>(), 9.0, 2.0);
  EXPECT_TRUE(j["manifest"]["input_hashes"].contains("r_contrast.csv"));
  EXPECT_EQ(j["manifest"]["input_hashes"]["r_contrast.csv"].get<std::string>().rfind("sha256:", 0), 0u);
}

TEST_F(Cli, FitSlopeOnInjection) {
  ASSERT_EQ(run("simulate --protocol inject --tau-ms 10,20,30,40 --shots 2000 --shift-hz -20.5 --no-shots "
                "--out-prefix i")
                .code,
            0);
  const Outcome r = run("fit --model slope --input i_contrast.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  const double s = j["fit"]["shift_hz_per_phonon"].get<double>();
  EXPECT_NEAR(s, -20.5, 3.0 * j["fit"]["shift_err_hz_per_phonon"].get<double>() + 1e-9);
}

TEST_F(Cli, FitSinusoidOnShots) {
  ASSERT_EQ(run("simulate --tau-ms 5 --shots 400 --shift-hz -20.5 --contrast 0.8 --out-prefix s").code, 0);
  const Outcome r = run("fit --model sinusoid --input s_shots.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(Json::parse(r.out)["fit"]["contrast"].get<double>(), 0.8, 0.08);
}

TEST_F(Cli, FitPowerLawOnScan) {
  ASSERT_EQ(run("scan --fz-range 860:1720 --points 8 --out scan.csv").code, 0);
  EXPECT_TRUE(fs::exists(path("scan.csv.manifest.json")));
  const Outcome r = run("fit --model powerlaw --input scan.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  const double beta = Json::parse(r.out)["fit"]["beta"].get<double>();
  EXPECT_GT(beta, 7.0 / 3.0);
  EXPECT_LT(beta, 4.0);
  const Outcome q = run("fit --model powerlaw --input scan.csv --column shift_hz_quartic_only");
  ASSERT_EQ(q.code, 0) << q.err;
}

TEST_F(Cli, MalformedCsvReportsLine) {
  write("bad.csv", "tau_s,class,contrast,contrast_err\n0.001,all,0.9,0.01\n0.002,all,0.8\n");
  const Outcome r = run("fit --model revival --input bad.csv");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bad.csv:3"), std::string::npos) << r.err;
  write("nan.csv", "tau_s,class,contrast,contrast_err\n0.001,all,abc,0.01\n");
  const Outcome q = run("fit --model revival --input nan.csv");
  EXPECT_EQ(q.code, 2);
  EXPECT_NE(q.err.find("nan.csv:2:"), std::string::npos) << q.err;
  EXPECT_EQ(run("fit --model revival --input missing.csv").code, 2);
}

TEST_F(Cli, HelpMentionsUnits) {
  const Outcome r = run("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("kHz"), std::string::npos);
  const Outcome s = run("simulate --help");
  EXPECT_EQ(s.code, 0);
  EXPECT_NE(s.out.find("ms"), std::string::npos);
  EXPECT_NE(s.out.find("phonons/s"), std::string::npos);
}

TEST_F(Cli, ConfigFileWithCommandLineOverride) {
  write("run.cfg", "# trap\nfz-khz = 1200\nfperp-mhz = 4\noracle = false\n");
  const Outcome r = run("chi --config run.cfg");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_DOUBLE_EQ(Json::parse(r.out)["input"]["fz_hz"].get<double>(), 1.2e6);
  const Outcome o = run("chi --config run.cfg --fz-khz 1500");
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_DOUBLE_EQ(Json::parse(o.out)["input"]["fz_hz"].get<double>(), 1.5e6);
  write("broken.cfg", "fz-khz 1200\n");
  EXPECT_EQ(run("chi --config broken.cfg").code, 2);
}

TEST_F(Cli, StampAddsTimestamp) {
  const Outcome r = run("spectrum --stamp");
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(Json::parse(r.out)["manifest"].contains("timestamp_utc"));
}

}  // namespace
