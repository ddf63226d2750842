#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "tpot/cli.hpp"

using namespace tpot;
namespace fs = std::filesystem;

namespace {

const std::string kPrices = std::string(TPOT_TEST_DATA) + "/synthetic_prices.csv";

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("tpot_cli_" + std::to_string(::getpid()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
    ::unsetenv(cli::kOutputRootEnv);
  }
  void TearDown() override {
    ::unsetenv(cli::kOutputRootEnv);
    fs::remove_all(root_);
  }

  fs::path dir(const std::string& name) const { return root_ / name; }

  cli::RunConfig fit_config() const {
    cli::RunConfig c;
    c.input = kPrices;
    c.quantile = 0.1;
    c.train_end = "150";
    c.restarts = 3;
    return c;
  }

  int run(const std::string& command, const cli::RunConfig& c, const fs::path& out) {
    std::ostringstream log;
    return cli::run_command(command, c, out.string(), log);
  }

  fs::path root_;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

std::vector<std::string> listing(const fs::path& d) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(d))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), d).string());
  std::sort(out.begin(), out.end());
  return out;
}

void write_returns(const fs::path& p, const std::vector<double>& x) {
  std::ofstream f(p);
  f << "Date,Return\n";
  for (std::size_t i = 0; i < x.size(); ++i) f << "d" << 100000 + i << ',' << csv::format_double(x[i], 17) << '\n';
}

}  // namespace

TEST_F(CliTest, FitWritesOneArtifactPerKindAndComparison) {
  ASSERT_EQ(run("fit", fit_config(), dir("fit")), 0);
  for (const char* k : {"bivariate", "bivariate_decoupled", "common", "common_symmetric"}) {
    const auto j = read_json(dir("fit") / (std::string("fit_") + k + ".json"));
    EXPECT_EQ(j["train_end"], 150);
    EXPECT_EQ(j["T"], 200);
    EXPECT_TRUE(j["forecast"].is_object());
  }
  const auto table = csv::read((dir("fit") / "comparison.csv").string());
  ASSERT_EQ(table.rows.size(), 4u);
  EXPECT_EQ(table.header, cli::comparison_header());
  for (const auto& row : table.rows) {
    const std::string tag = row[1] == "bivariate-decoupled" ? "bivariate_decoupled"
                            : row[1] == "common-symmetric"  ? "common_symmetric"
                                                            : row[1];
    const auto j = read_json(dir("fit") / ("fit_" + tag + ".json"));
    const double ll = j["loglik"], n = double(j["n_events"]["left"]) + double(j["n_events"]["right"]);
    const int dim = j["dim"];
    EXPECT_NEAR(std::stod(row[5]), 2.0 * dim - 2.0 * ll, 1e-7);
    EXPECT_NEAR(std::stod(row[6]), dim * std::log(2.0 * n) - 2.0 * ll, 1e-7);
    EXPECT_EQ(std::stoi(row[2]), dim);
  }
  const auto manifest = read_json(dir("fit") / "manifest.json");
  EXPECT_EQ(manifest["command"], "fit");
  EXPECT_EQ(manifest["outputs"].size(), 8u);
  EXPECT_FALSE(fs::exists(dir("fit") / ".staging"));
  EXPECT_FALSE(fs::exists(dir("fit") / "quarantine"));
}

TEST_F(CliTest, LrTestsPairNestedModels) {
  ASSERT_EQ(run("fit", fit_config(), dir("fit")), 0);
  const auto table = csv::read((dir("fit") / "lr_tests.csv").string());
  ASSERT_EQ(table.rows.size(), 12u);
  const auto bi = read_json(dir("fit") / "fit_bivariate.json");
  const auto bid = read_json(dir("fit") / "fit_bivariate_decoupled.json");
  const auto& row = table.rows[0];
  EXPECT_EQ(row[0], "theta_bi^d");
  EXPECT_EQ(row[3], "total");
  EXPECT_EQ(row[5], "2");
  const double stat = 2.0 * (double(bi["loglik"]) - double(bid["loglik"]));
  EXPECT_NEAR(std::stod(row[4]), std::max(stat, 0.0), 1e-8);
  EXPECT_EQ(table.rows[6][5], "6");
}

TEST_F(CliTest, RunsAreByteIdentical) {
  ASSERT_EQ(run("fit", fit_config(), dir("a")), 0);
  ASSERT_EQ(run("fit", fit_config(), dir("b")), 0);
  const auto files = listing(dir("a"));
  ASSERT_EQ(files, listing(dir("b")));
  for (const auto& f : files) EXPECT_EQ(slurp(dir("a") / f), slurp(dir("b") / f)) << f;
}

TEST_F(CliTest, TrainEndBeyondDataIsAConfigError) {
  cli::RunConfig c = fit_config();
  c.train_end = "201";
  EXPECT_EQ(run("fit", c, dir("bad")), 2);
  EXPECT_FALSE(fs::exists(dir("bad")));
  c.train_end = "2100-01-01";
  EXPECT_EQ(run("fit", c, dir("bad")), 2);
  c.train_end = "200";
  EXPECT_EQ(run("fit", c, dir("ok")), 0);
}

TEST_F(CliTest, TrainEndLabelIsInclusive) {
  const ReturnSeries r = load_series(kPrices);
  cli::RunConfig c = fit_config();
  c.train_end = r.labels[99];
  EXPECT_EQ(cli::resolve_train_end(r, c.train_end), 100u);
}

TEST_F(CliTest, InvalidSettingsAreRejected) {
  cli::RunConfig c = fit_config();
  c.quantile = 0.6;
  EXPECT_EQ(run("fit", c, dir("q")), 2);
  c = fit_config();
  c.input = (root_ / "missing.csv").string();
  EXPECT_EQ(run("fit", c, dir("m")), 2);
  EXPECT_THROW(cli::parse_kinds("bi,nonsense"), cli::ConfigError);
  EXPECT_THROW(cli::config_from_json(nlohmann::json{{"quantil", 0.1}}), cli::ConfigError);
  EXPECT_EQ(cli::parse_kinds("ci,bi,ci").size(), 2u);
}

TEST_F(CliTest, DiagnoseResidualRowsMatchEvents) {
  ASSERT_EQ(run("fit", fit_config(), dir("fit")), 0);
  const auto ex = exceedances_from_json(read_json(dir("fit") / "exceedances.json"));
  for (const char* k : {"bivariate", "common_symmetric"}) {
    cli::RunConfig c;
    c.fit = (dir("fit") / (std::string("fit_") + k + ".json")).string();
    ASSERT_EQ(run("diagnose", c, dir(k)), 0) << k;
    const auto report = read_json(dir(k) / "report.json");
    std::size_t expected = ex.events.size();
    if (!report["truncated_at"].is_null()) {
      const std::size_t cut = report["truncated_at"];
      expected = std::count_if(ex.events.begin(), ex.events.end(), [&](const Event& e) { return e.t < cut; });
    }
    EXPECT_EQ(csv::read((dir(k) / "residuals.csv").string()).rows.size(), expected) << k;
    for (const char* proc : {"left", "right", "total"}) {
      EXPECT_TRUE(report["train"]["residual_time"][proc].contains("p_value")) << k << proc;
      EXPECT_TRUE(fs::exists(dir(k) / (std::string("acf_") + proc + ".csv")));
    }
    EXPECT_EQ(report["train"].contains("split_residual_time"), std::string(k) == "common_symmetric");
  }
}

TEST_F(CliTest, CompareReproducesFitTables) {
  ASSERT_EQ(run("fit", fit_config(), dir("fit")), 0);
  cli::RunConfig c;
  c.fits = {dir("fit").string()};
  ASSERT_EQ(run("compare", c, dir("cmp")), 0);
  EXPECT_EQ(slurp(dir("cmp") / "comparison.csv"), slurp(dir("fit") / "comparison.csv"));
  EXPECT_EQ(slurp(dir("cmp") / "lr_tests.csv"), slurp(dir("fit") / "lr_tests.csv"));
  c.lr_tail_dof = 1;
  ASSERT_EQ(run("compare", c, dir("cmp1")), 0);
  const auto t = csv::read((dir("cmp1") / "lr_tests.csv").string());
  EXPECT_EQ(t.rows[0][5], "2");
  EXPECT_EQ(t.rows[1][5], "1");
  c.fits = {(root_ / "none").string()};
  EXPECT_EQ(run("compare", c, dir("none")), 2);
}

TEST_F(CliTest, SimulationManifestRegeneratesSeries) {
  const fs::path params = root_ / "params.json";
  {
    HawkesParams p;
    p.kind = ModelKind::common;
    p.mu_common = 0.02;
    p.gamma_common = {0.3, 0.3};
    p.beta = {0.1, 0.1};
    p.xi = {0.1, 0.1};
    p.varsigma = {0.01, 0.01};
    std::ofstream(params) << to_json(p).dump();
  }
  cli::RunConfig c;
  c.params = params.string();
  c.replications = 10;
  c.length = 3000;
  c.seed = 11;
  ASSERT_EQ(run("simulate", c, dir("sim")), 0);
  const auto files = listing(dir("sim"));
  ASSERT_EQ(files.size(), 11u);
  EXPECT_EQ(files.front(), "manifest.json");
  EXPECT_EQ(files.back(), "series_0009.csv");
  const auto m = read_json(dir("sim") / "manifest.json");
  EXPECT_EQ(m["simulation"]["replication_seeds"].size(), 10u);
  EXPECT_NE(slurp(dir("sim") / "series_0000.csv"), slurp(dir("sim") / "series_0001.csv"));

  cli::RunConfig again;
  again.manifest = (dir("sim") / "manifest.json").string();
  ASSERT_EQ(run("simulate", again, dir("regen")), 0);
  ASSERT_EQ(listing(dir("regen")), files);
  for (const auto& f : files) EXPECT_EQ(slurp(dir("sim") / f), slurp(dir("regen") / f)) << f;
}

TEST_F(CliTest, SimulatesGarchParameterFiles) {
  GarchParams g;
  g.omega = 0.1;
  g.alpha1 = 0.1;
  g.beta1 = 0.8;
  std::ofstream(root_ / "g.json") << to_json(g).dump();
  cli::RunConfig c;
  c.params = (root_ / "g.json").string();
  c.length = 500;
  ASSERT_EQ(run("simulate", c, dir("g")), 0);
  const auto t = csv::read((dir("g") / "series_0000.csv").string());
  EXPECT_EQ(t.header, (std::vector<std::string>{"t", "x", "sigma"}));
  EXPECT_EQ(t.rows.size(), 500u);
  EXPECT_EQ(read_json(dir("g") / "manifest.json")["simulation"]["model"], "garch");
}

TEST_F(CliTest, GarchOnWhiteNoiseFindsNoExcitation) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> N(0.0, 0.01);
  std::vector<double> x(12311);
  for (double& v : x) v = N(rng);
  write_returns(root_ / "noise.csv", x);
  cli::RunConfig c;
  c.input = (root_ / "noise.csv").string();
  c.columns.value_column = "Return";
  c.columns.type = ValueType::log_return;
  c.restarts = 2;
  c.garch_restarts = 2;
  c.garch_scale = 100.0;
  ASSERT_EQ(run("garch", c, dir("garch")), 0);
  for (const char* v : {"white_noise", "g0n", "g1t"}) {
    const FitResult f = fit_from_json(read_json(dir("garch") / (std::string("hawkes_") + v + ".json")));
    for (const char* name : {"gamma_left_left", "gamma_left_right", "gamma_right_left", "gamma_right_right"}) {
      const auto se = f.se_of(name);
      ASSERT_TRUE(se.has_value()) << v << name;
      EXPECT_LE(f.estimate_of(name), 3.0 * *se) << v << name;
    }
  }
  const auto g = read_json(dir("garch") / "garch_g0n.json");
  EXPECT_LT(double(g["params"]["alpha1"]) + double(g["params"]["beta1"]), 1.0);
  const auto table = csv::read((dir("garch") / "garch_table.csv").string());
  EXPECT_EQ(table.header.size(), 9u);
  EXPECT_EQ(csv::read((dir("garch") / "filtered_g1t.csv").string()).rows.size(), 12311u);
}

TEST_F(CliTest, RuntimeFailureIsQuarantined) {
  write_returns(root_ / "flat.csv", std::vector<double>(400, 0.0));
  cli::RunConfig c;
  c.input = (root_ / "flat.csv").string();
  c.columns.value_column = "Return";
  c.columns.type = ValueType::log_return;
  EXPECT_EQ(run("garch", c, dir("flat")), 1);
  EXPECT_TRUE(fs::exists(dir("flat") / "quarantine" / "error.txt"));
  EXPECT_FALSE(fs::exists(dir("flat") / "manifest.json"));
  EXPECT_FALSE(fs::exists(dir("flat") / ".staging"));
}

TEST_F(CliTest, OutputRootPrecedence) {
  const cli::RunConfig c = fit_config();
  const auto with_env = root_ / "env";
  ::setenv(cli::kOutputRootEnv, with_env.c_str(), 1);
  const fs::path d = cli::resolve_run_dir("fit", c, std::nullopt, std::string("ignored"));
  EXPECT_EQ(d.parent_path(), with_env);
  EXPECT_EQ(d.filename().string().rfind("fit-", 0), 0u);
  EXPECT_EQ(cli::resolve_run_dir("fit", c, std::string("explicit"), std::nullopt), fs::path("explicit"));
  ::unsetenv(cli::kOutputRootEnv);
  EXPECT_EQ(cli::resolve_run_dir("fit", c, std::nullopt, std::string("cfg")), fs::path("cfg"));
  EXPECT_EQ(cli::resolve_run_dir("fit", c, std::nullopt, std::nullopt).parent_path(), fs::path("tpot-runs"));
  cli::RunConfig other = c;
  other.seed = 2;
  EXPECT_NE(cli::resolve_run_dir("fit", c, std::nullopt, std::nullopt),
            cli::resolve_run_dir("fit", other, std::nullopt, std::nullopt));
}

TEST_F(CliTest, SchemaChecksRejectMalformedFiles) {
  const auto s = cli::csv_schema({"a", "b"}, {"b"});
  std::ofstream(root_ / "ok.csv") << "a,b\nx,1.5\ny,\n";
  EXPECT_NO_THROW(cli::validate_file(root_ / "ok.csv", s));
  std::ofstream(root_ / "width.csv") << "a,b\nx,1,2\n";
  EXPECT_THROW(cli::validate_file(root_ / "width.csv", s), cli::SchemaError);
  std::ofstream(root_ / "text.csv") << "a,b\nx,abc\n";
  EXPECT_THROW(cli::validate_file(root_ / "text.csv", s), cli::SchemaError);
  std::ofstream(root_ / "head.csv") << "a,c\nx,1\n";
  EXPECT_THROW(cli::validate_file(root_ / "head.csv", s), cli::SchemaError);
  std::ofstream(root_ / "m.json") << R"({"tool": "tpot", "version": 3})";
  EXPECT_THROW(cli::validate_file(root_ / "m.json", cli::manifest_schema()), cli::SchemaError);
  std::ofstream(root_ / "broken.json") << "{";
  EXPECT_THROW(cli::validate_file(root_ / "broken.json", cli::manifest_schema()), cli::SchemaError);
}

TEST_F(CliTest, ConfigRoundTripsThroughJson) {
  cli::RunConfig c = fit_config();
  c.thresholds = std::make_pair(-0.02, 0.03);
  c.kinds = {ModelKind::common};
  c.burn_in = 40;
  c.garch_init = VarianceInit::unconditional;
  const auto back = cli::config_from_json(nlohmann::json::parse(cli::to_json(c).dump()));
  EXPECT_EQ(cli::to_json(back).dump(), cli::to_json(c).dump());
}

TEST_F(CliTest, ExecutableHonoursFlagsOverConfig) {
  std::ofstream(root_ / "cfg.json") << nlohmann::json{{"input", kPrices}, {"quantile", 0.1}, {"kinds", {"ci-s"}},
                                                      {"restarts", 2}}
                                           .dump();
  const std::string bin = TPOT_BIN;
  const std::string base = bin + " fit --config " + (root_ / "cfg.json").string() + " > /dev/null 2>&1";
  ::setenv(cli::kOutputRootEnv, (root_ / "runs").c_str(), 1);
  ASSERT_EQ(std::system(base.c_str()), 0);
  ASSERT_EQ(std::distance(fs::directory_iterator(root_ / "runs"), fs::directory_iterator{}), 1);
  const fs::path run_dir = fs::directory_iterator(root_ / "runs")->path();
  EXPECT_TRUE(fs::exists(run_dir / "fit_common_symmetric.json"));
  EXPECT_FALSE(fs::exists(run_dir / "fit_common.json"));

  const std::string over = bin + " fit --config " + (root_ / "cfg.json").string() + " --kinds bi,ci --out " +
                           (root_ / "over").string() + " > /dev/null 2>&1";
  ASSERT_EQ(std::system(over.c_str()), 0);
  EXPECT_TRUE(fs::exists(root_ / "over" / "fit_bivariate.json"));
  EXPECT_EQ(read_json(root_ / "over" / "manifest.json")["config"]["quantile"], 0.1);

  const std::string bad = bin + " fit --config " + (root_ / "cfg.json").string() + " --train-end 9999 --out " +
                          (root_ / "bad").string() + " > /dev/null 2>&1";
  EXPECT_EQ(WEXITSTATUS(std::system(bad.c_str())), 2);
}
