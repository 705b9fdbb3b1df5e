#include "test_support.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace charstoch;
using namespace charstoch::testing;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunResult {
  int code = -1;
  std::string err;
};

const fs::path kScratch = fs::temp_directory_path() / "charstoch_cli_tests";

/// Runs the CLI with `args`, capturing stderr.
RunResult cli(const std::string& args) {
  fs::create_directories(kScratch);
  const fs::path err = kScratch / "stderr.txt";
  const std::string cmd = std::string("\"") + CHARSTOCH_CLI + "\" " + args + " 2> \"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

std::string config(const char* name) { return std::string(CHARSTOCH_CONFIG_DIR) + "/" + name; }

fs::path fresh(const std::string& name) {
  const fs::path p = kScratch / name;
  fs::remove_all(p);
  return p;
}

std::vector<std::string> csv_lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string line; std::getline(ss, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(Format, NumbersUseTwelveDigitScientific) {
  EXPECT_EQ(fmt_num(1.0), "1.000000000000e+00");
  EXPECT_EQ(fmt_num(-0.000123456789012345), "-1.234567890123e-04");
  EXPECT_EQ(fmt_num(6.02214076e23), "6.022140760000e+23");
}

TEST(Format, FieldGridCsv) {
  const ProblemSpec spec = build_problem(config_1d("u", "x1", "1", 0.1, {-2, 2}, {-1, 1}, 3));
  const FieldGrid g = eval_field_grid(spec, 0.0, FieldKind::U);
  const auto lines = csv_lines(field_grid_csv(g));
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "t,x1,value,valid");
  EXPECT_EQ(lines[1], "0.000000000000e+00,-1.000000000000e+00,-1.000000000000e+00,1");
}

TEST(Format, VectorFieldGridHasNumberedColumns) {
  ProblemConfig c;
  c.n = 2;
  c.a = {"u", "2*u"};
  c.u0 = "1";
  c.rho0 = "1";
  c.box = {{-1, 1}, {-1, 1}};
  c.space_grid = {2, 2};
  c.time_points = {0};
  const auto lines = csv_lines(field_grid_csv(eval_field_grid(build_problem(c), 0.0, FieldKind::A)));
  EXPECT_EQ(lines[0], "t,x1,x2,value1,value2,valid");
  EXPECT_EQ(lines.size(), 5u);
}

TEST(Format, ResidualCsvLeavesMissingRatioEmpty) {
  ResidualReport a{"mass_sigma", 0.1, 0.05, 2.0, 1.0, std::nullopt};
  ResidualReport b{"mass_sigma", 0.05, 0.025, 0.5, 0.25, 4.0};
  const auto lines = csv_lines(residual_csv({a, b}));
  EXPECT_EQ(lines[0], "equation,h,dt,max_residual,l1_residual,ratio");
  EXPECT_EQ(lines[1].back(), ',');
  EXPECT_NE(lines[2].find(",4.000000000000e+00"), std::string::npos);
}

TEST(Format, ITermCsvHeader) {
  const auto lines = csv_lines(iterm_csv({{0.1, 0.5, {0.25, 0.125}}}));
  EXPECT_EQ(lines[0], "sigma,I_u_sup,I_a_sup_1,I_a_sup_2");
}

TEST(Format, BlowupJsonRoundTrip) {
  const BlowupReport r = blow_up_time(burgers_sin(0.1));
  const BlowupReport back = blowup_from_json(nlohmann::json::parse(blowup_json(r).dump()));
  EXPECT_EQ(back.t_star, r.t_star);
  EXPECT_EQ(back.y_star, r.y_star);
  EXPECT_EQ(back.method, r.method);
  BlowupReport never;
  never.y_star = {0.0};
  never.method = "conway";
  EXPECT_EQ(blowup_json(never)["t_star"], "inf");
  EXPECT_FALSE(blowup_from_json(blowup_json(never)).finite);
}

TEST(Format, EnsembleCsvHeader) {
  const ProblemSpec spec = burgers_sin(0.1);
  const auto lines = csv_lines(ensemble_csv(sample_initial(spec, 3)));
  EXPECT_EQ(lines[0], "y1,U,X1,w");
  EXPECT_EQ(lines.size(), 4u);
}

TEST(Convergence, ConstantDataHasNoError) {
  for (const auto& r : convergence_table(constant_data(0.3, 0.1), {0.2, 0.1}, 0.5)) {
    EXPECT_LE(r.max_err_u, 1e-12);
    EXPECT_LE(r.max_err_a, 1e-12);
    EXPECT_LE(r.max_err_rho, 1e-10);
  }
}

TEST(Convergence, BurgersErrorStrictlyDecreases) {
  const auto rows = convergence_table(burgers_sin(0.1), {0.2, 0.1, 0.05}, 0.5);
  EXPECT_GT(rows[0].max_err_u, rows[1].max_err_u);
  EXPECT_GT(rows[1].max_err_u, rows[2].max_err_u);
}

TEST(Convergence, PastBlowupThrows) {
  EXPECT_THROW(convergence_table(burgers_sin(0.1), {0.1}, 1.5), NearBlowup);
}

TEST(Cli, BlowupReports) {
  const fs::path out = fresh("blowup_sin");
  ASSERT_EQ(cli("--config " + config("burgers_sin.json") + " --out " + out.string() + " blowup").code, 0);
  const auto j = nlohmann::json::parse(slurp(out / "blowup.json"));
  EXPECT_NEAR(j["t_star"].get<double>(), 1.0, 1e-3);

  const fs::path out2 = fresh("blowup_tanh");
  ASSERT_EQ(cli("--config " + config("tanh.json") + " --out " + out2.string() + " blowup").code, 0);
  EXPECT_EQ(nlohmann::json::parse(slurp(out2 / "blowup.json"))["t_star"], "inf");

  const fs::path out3 = fresh("blowup_gauss");
  ASSERT_EQ(cli("--config " + config("gaussian.json") + " --out " + out3.string() + " blowup").code, 0);
  EXPECT_NEAR(nlohmann::json::parse(slurp(out3 / "blowup.json"))["t_star"].get<double>(), 1.16582, 1e-3);
}

TEST(Cli, ManifestListsEveryOutput) {
  const fs::path out = fresh("manifest");
  ASSERT_EQ(cli("--config " + config("burgers_sin.json") + " --out " + out.string() + " solve --t 0,0.5").code, 0);
  const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(m["subcommand"], "solve");
  EXPECT_EQ(m["spec_digest"].get<std::string>().size(), 16u);
  std::size_t listed = 0;
  for (const auto& f : m["files"]) {
    EXPECT_TRUE(fs::exists(out / f.get<std::string>()));
    ++listed;
  }
  std::size_t on_disk = 0;
  for (const auto& e : fs::directory_iterator(out)) on_disk += e.path().filename() != "manifest.json";
  EXPECT_EQ(listed, on_disk);
  EXPECT_EQ(listed, 6u);
}

TEST(Cli, CharacteristicsAtTimeZeroEqualsInitialData) {
  const fs::path out = fresh("char_t0");
  ASSERT_EQ(cli("--config " + config("burgers_sin.json") + " --out " + out.string() +
                " solve --method characteristics --t 0")
                .code,
            0);
  const auto lines = csv_lines(slurp(out / "solve_characteristics_t0_u.csv"));
  ASSERT_EQ(lines.size(), 42u);
  for (std::size_t k = 1; k < lines.size(); ++k) {
    double t, x, v;
    int valid;
    ASSERT_EQ(std::sscanf(lines[k].c_str(), "%lf,%lf,%lf,%d", &t, &x, &v, &valid), 4);
    EXPECT_NEAR(v, std::sin(x), 1e-11);
    EXPECT_EQ(valid, 1);
  }
}

TEST(Cli, MonteCarloIsByteDeterministicAcrossThreadCounts) {
  const fs::path a = fresh("mc_a"), b = fresh("mc_b");
  const std::string common = " solve --method montecarlo --particles 20000 --t 0.5 --dump-ensemble";
  ASSERT_EQ(cli("--config " + config("burgers_sin.json") + " --threads 1 --out " + a.string() + common).code, 0);
  ASSERT_EQ(cli("--config " + config("burgers_sin.json") + " --threads 3 --out " + b.string() + common).code, 0);
  for (const char* f : {"solve_montecarlo_t0_rho.csv", "solve_montecarlo_t0_u.csv", "solve_montecarlo_t0_ensemble.csv"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  const fs::path c = fresh("mc_c");
  ASSERT_EQ(cli("--config " + config("burgers_sin.json") + " --seed 99 --out " + c.string() + common).code, 0);
  EXPECT_NE(slurp(a / "solve_montecarlo_t0_rho.csv"), slurp(c / "solve_montecarlo_t0_rho.csv"));
}

TEST(Cli, ConvergeAndResidualsAndITerms) {
  const fs::path out = fresh("constant");
  const std::string base = "--config " + config("constant.json") + " --out " + out.string();
  ASSERT_EQ(cli(base + " converge --sigmas 0.2,0.1 --t 0.5").code, 0);
  for (std::size_t k = 1; k < 3; ++k) {
    const auto line = csv_lines(slurp(out / "converge.csv"))[k];
    double s, eu, ea, er;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &s, &eu, &ea, &er), 4);
    EXPECT_LE(eu, 1e-12);
  }
  ASSERT_EQ(cli(base + " residuals --system sigma --window 0.2,0.4 --resolutions 0.1:0.05,0.05:0.025").code, 0);
  const auto lines = csv_lines(slurp(out / "residuals_sigma.csv"));
  ASSERT_EQ(lines.size(), 7u);
  for (std::size_t k = 1; k < lines.size(); ++k) {
    char eq[64];
    double h, dt, mx;
    ASSERT_EQ(std::sscanf(lines[k].c_str(), "%63[^,],%lf,%lf,%lf", eq, &h, &dt, &mx), 4);
    EXPECT_LE(mx, 1e-10);
  }
  ASSERT_EQ(cli(base + " iterms --sigmas 0.2,0.1 --t 0.5").code, 0);
  EXPECT_EQ(csv_lines(slurp(out / "iterms.csv")).size(), 3u);
}

TEST(Cli, NumericalFailuresExitThree) {
  const std::string base = "--config " + config("burgers_sin.json") + " --out " + fresh("fail").string();
  RunResult r = cli(base + " solve --method characteristics --t 1.5");
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"], "NearBlowup");
  r = cli(base + " converge --sigmas 0.1 --t 1.5");
  EXPECT_EQ(r.code, 3);
  r = cli(base + " residuals --system pressureless --window 0.5,0.95 --resolutions 0.1:0.05");
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"], "NearBlowup");
}

TEST(Cli, ConfigurationErrorsExitTwo) {
  const fs::path dir = fresh("badcfg");
  fs::create_directories(dir);
  {
    std::ofstream(dir / "unknown.json") << R"({"n": 1, "a": ["u"], "u0": "x1", "rho0": "1", "sigma": 0.1,
      "box": [[-1, 1]], "space_grid": [5], "time_points": [0], "rng_seed": 1, "bogus": 3})";
    std::ofstream(dir / "garbage.json") << "{ not json";
    std::ofstream(dir / "badexpr.json") << R"({"n": 1, "a": ["u"], "u0": "x1 +* 2", "rho0": "1", "sigma": 0.1,
      "box": [[-1, 1]], "space_grid": [5], "time_points": [0], "rng_seed": 1})";
  }
  for (const char* f : {"unknown.json", "garbage.json", "badexpr.json", "missing.json"}) {
    const RunResult r = cli("--config " + (dir / f).string() + " --out " + (dir / "o").string() + " blowup");
    EXPECT_EQ(r.code, 2) << f;
    const auto j = nlohmann::json::parse(r.err);
    EXPECT_TRUE(j.contains("error") && j.contains("message")) << f;
  }
  EXPECT_EQ(cli("--config " + config("burgers_sin.json") + " frobnicate").code, 2);
  EXPECT_EQ(cli("blowup").code, 2);
}
