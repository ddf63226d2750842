// tpot: tail-process fitting, diagnostics, simulation and GARCH filtering.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tpot/cli.hpp"

namespace {

using tpot::cli::RunConfig;

struct Flags {
  std::string config;
  std::string input;
  std::string value_column;
  std::string date_column;
  std::string value_type;
  std::string train_end;
  double quantile = 0.0;
  std::vector<double> thresholds;
  std::string kinds;
  std::uint64_t seed = 0;
  int restarts = 0;
  int max_iterations = 0;
  std::string out;
  std::string fit;
  std::string events;
  std::vector<std::string> fits;
  std::size_t acf_lags = 0;
  std::size_t rolling_window = 0;
  int lr_tail_dof = 0;
  std::string params;
  std::string manifest;
  std::size_t replications = 0;
  std::size_t length = 0;
  std::size_t burn_in = 0;
  bool allow_shared_steps = false;
  double scale = 0.0;
  std::string init;
  int garch_restarts = 0;
  bool no_white_noise = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration; flags override its values");
  cmd->add_option("--seed", f.seed, "Base random seed");
  cmd->add_option("--out", f.out, "Run directory (default: $TPOT_OUTPUT_ROOT/<command>-<digest>)");
}

void add_series(CLI::App* cmd, Flags& f) {
  cmd->add_option("--input", f.input, "CSV file with a date and a price or return column");
  cmd->add_option("--value-column", f.value_column, "Value column name (default Close)");
  cmd->add_option("--date-column", f.date_column, "Date column name (default Date)");
  cmd->add_option("--value-type", f.value_type, "price or log_return")->check(CLI::IsMember({"price", "log_return"}));
  cmd->add_option("--train-end", f.train_end, "Last training date (inclusive) or number of training points");
  cmd->add_option("--quantile", f.quantile, "Tail probability for the thresholds (default 0.025)");
  cmd->add_option("--restarts", f.restarts, "Optimizer restarts per fit (default 8)");
}

bool given(const CLI::App* cmd, const char* name) { return cmd->count(name) > 0; }

RunConfig resolve(const CLI::App* cmd, const Flags& f, std::optional<std::string>& out) {
  RunConfig c = f.config.empty() ? RunConfig{} : tpot::cli::load_config(f.config);
  if (c.out) out = c.out;
  auto set = [&](const char* name, auto& field, const auto& value) {
    if (cmd->get_option_no_throw(name) && given(cmd, name)) field = value;
  };
  set("--input", c.input, f.input);
  set("--value-column", c.columns.value_column, f.value_column);
  set("--date-column", c.columns.date_column, f.date_column);
  if (cmd->get_option_no_throw("--value-type") && given(cmd, "--value-type"))
    c.columns.type = f.value_type == "price" ? tpot::ValueType::price : tpot::ValueType::log_return;
  if (cmd->get_option_no_throw("--train-end") && given(cmd, "--train-end")) c.train_end = f.train_end;
  set("--quantile", c.quantile, f.quantile);
  if (cmd->get_option_no_throw("--thresholds") && given(cmd, "--thresholds"))
    c.thresholds = std::make_pair(f.thresholds.at(0), f.thresholds.at(1));
  if (cmd->get_option_no_throw("--kinds") && given(cmd, "--kinds")) c.kinds = tpot::cli::parse_kinds(f.kinds);
  set("--seed", c.seed, f.seed);
  set("--restarts", c.restarts, f.restarts);
  set("--max-iterations", c.max_iterations, f.max_iterations);
  set("--fit", c.fit, f.fit);
  set("--events", c.events, f.events);
  set("--fits", c.fits, f.fits);
  set("--acf-lags", c.acf_lags, f.acf_lags);
  set("--rolling-window", c.rolling_window, f.rolling_window);
  if (cmd->get_option_no_throw("--lr-tail-dof") && given(cmd, "--lr-tail-dof")) c.lr_tail_dof = f.lr_tail_dof;
  set("--params", c.params, f.params);
  set("--manifest", c.manifest, f.manifest);
  set("--replications", c.replications, f.replications);
  set("--length", c.length, f.length);
  if (cmd->get_option_no_throw("--burn-in") && given(cmd, "--burn-in")) c.burn_in = f.burn_in;
  if (cmd->get_option_no_throw("--allow-shared-steps") && given(cmd, "--allow-shared-steps"))
    c.at_most_one_event_per_step = false;
  set("--scale", c.garch_scale, f.scale);
  if (cmd->get_option_no_throw("--init") && given(cmd, "--init"))
    c.garch_init = f.init == "sample" ? tpot::VarianceInit::sample : tpot::VarianceInit::unconditional;
  set("--garch-restarts", c.garch_restarts, f.garch_restarts);
  if (cmd->get_option_no_throw("--no-white-noise") && given(cmd, "--no-white-noise")) c.white_noise = false;
  if (given(cmd, "--out")) out = f.out;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-tailed peaks-over-threshold Hawkes models for return series"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tpot::cli::kVersion);
  Flags f;

  auto* fit = app.add_subcommand("fit", "Fit the Hawkes model family to threshold exceedances");
  add_common(fit, f);
  add_series(fit, f);
  fit->add_option("--kinds", f.kinds, "Comma-separated model kinds (bivariate, bivariate-decoupled, common, common-symmetric)");
  fit->add_option("--thresholds", f.thresholds, "Explicit u_left u_right instead of quantiles")->expected(2);
  fit->add_option("--max-iterations", f.max_iterations, "Optimizer iteration cap");
  fit->add_option("--lr-tail-dof", f.lr_tail_dof, "Degrees of freedom for per-tail LR tests");

  auto* diagnose = app.add_subcommand("diagnose", "Residual diagnostics for a fitted model");
  add_common(diagnose, f);
  diagnose->add_option("--fit", f.fit, "fit_<kind>.json artifact");
  diagnose->add_option("--events", f.events, "Exceedance file (default: exceedances.json beside the fit)");
  diagnose->add_option("--acf-lags", f.acf_lags, "Correlogram lags (default 20)");
  diagnose->add_option("--rolling-window", f.rolling_window, "Rolling lag-1 window (default 50)");

  auto* compare = app.add_subcommand("compare", "Information criteria and LR tests across fits");
  add_common(compare, f);
  compare->add_option("--fits", f.fits, "Fit artifacts or directories holding fit_*.json");
  compare->add_option("--lr-tail-dof", f.lr_tail_dof, "Degrees of freedom for per-tail LR tests");

  auto* simulate = app.add_subcommand("simulate", "Simulate Hawkes or GARCH paths");
  add_common(simulate, f);
  simulate->add_option("--params", f.params, "Hawkes or GARCH parameter JSON");
  simulate->add_option("--manifest", f.manifest, "Regenerate the series recorded in a simulate manifest");
  simulate->add_option("--replications", f.replications, "Number of series (default 1)");
  simulate->add_option("--length", f.length, "Series length in steps (default 12311)");
  simulate->add_option("--burn-in", f.burn_in, "Burn-in steps (default ceil(10 / min beta))");
  simulate->add_flag("--allow-shared-steps", f.allow_shared_steps, "Let both tails fire in one step (bivariate kinds)");

  auto* garch = app.add_subcommand("garch", "GARCH filtering and Hawkes fits on the residuals");
  add_common(garch, f);
  add_series(garch, f);
  garch->add_option("--scale", f.scale, "Multiply returns by this factor before fitting");
  garch->add_option("--init", f.init, "Initial variance: sample or unconditional")
      ->check(CLI::IsMember({"sample", "unconditional"}));
  garch->add_option("--garch-restarts", f.garch_restarts, "Restarts per GARCH fit (default 4)");
  garch->add_flag("--no-white-noise", f.no_white_noise, "Skip the white-noise reference fit");

  CLI11_PARSE(app, argc, argv);

  for (auto* cmd : {fit, diagnose, compare, simulate, garch}) {
    if (!cmd->parsed()) continue;
    std::optional<std::string> out;
    RunConfig c;
    try {
      c = resolve(cmd, f, out);
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 2;
    }
    return tpot::cli::run_command(cmd->get_name(), c, out);
  }
  return 2;
}
