#pragma once

// Run orchestration behind the command-line front end: configuration,
// staged output directories with schema checks, and the five commands.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tpot/tpot.hpp"

namespace tpot::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputRootEnv = "TPOT_OUTPUT_ROOT";

/// Invalid configuration; reported before any output is produced.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An output file failed its schema check.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct RunConfig {
  std::string input;
  ColumnSpec columns;
  std::optional<std::string> train_end;  // date label (inclusive) or point count
  double quantile = 0.025;
  std::optional<std::pair<double, double>> thresholds;  // explicit (u_left, u_right); frees w
  std::vector<ModelKind> kinds{kAllKinds.begin(), kAllKinds.end()};
  int restarts = 8;
  std::uint64_t seed = 1;
  int max_iterations = 400;
  std::optional<std::string> out;

  // diagnose / compare
  std::string fit;
  std::string events;
  std::vector<std::string> fits;
  std::size_t acf_lags = 20;
  std::size_t rolling_window = 50;
  std::optional<int> lr_tail_dof;

  // simulate
  std::string params;
  std::string manifest;
  std::size_t replications = 1;
  std::size_t length = 12311;
  std::optional<std::size_t> burn_in;
  bool at_most_one_event_per_step = true;

  // garch
  double garch_scale = 1.0;
  VarianceInit garch_init = VarianceInit::sample;
  int garch_restarts = 4;
  bool white_noise = true;

  void validate() const {
    if (!(quantile > 0.0 && quantile < 0.5)) throw ConfigError("quantile must lie in (0, 0.5)");
    if (thresholds && !(thresholds->first < thresholds->second))
      throw ConfigError("thresholds need u_left < u_right");
    if (kinds.empty()) throw ConfigError("no model kinds selected");
    if (restarts < 1) throw ConfigError("restarts must be >= 1");
    if (max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (replications < 1) throw ConfigError("replications must be >= 1");
    if (length < 1) throw ConfigError("length must be >= 1");
    if (acf_lags < 1) throw ConfigError("acf_lags must be >= 1");
    if (rolling_window < 3) throw ConfigError("rolling_window must be >= 3");
    if (lr_tail_dof && *lr_tail_dof < 1) throw ConfigError("lr_tail_dof must be >= 1");
    if (!(garch_scale > 0.0)) throw ConfigError("garch scale must be > 0");
    if (garch_restarts < 1) throw ConfigError("garch restarts must be >= 1");
  }
};

inline std::vector<std::string> kind_names(const std::vector<ModelKind>& kinds) {
  std::vector<std::string> out;
  for (ModelKind k : kinds) out.emplace_back(to_string(k));
  return out;
}

inline std::vector<ModelKind> parse_kinds(const std::string& list) {
  std::vector<ModelKind> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (item.empty()) continue;
    if (item == "all") return {kAllKinds.begin(), kAllKinds.end()};
    try {
      const ModelKind k = parse_kind(item);
      if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  return out;
}

inline ojson to_json(const RunConfig& c) {
  ojson j;
  j["input"] = c.input;
  j["columns"] = {{"value", c.columns.value_column},
                  {"date", c.columns.date_column},
                  {"type", c.columns.type == ValueType::price ? "price" : "log_return"}};
  j["train_end"] = c.train_end ? ojson(*c.train_end) : ojson(nullptr);
  j["quantile"] = c.quantile;
  j["thresholds"] = c.thresholds ? ojson::array({c.thresholds->first, c.thresholds->second}) : ojson(nullptr);
  j["kinds"] = kind_names(c.kinds);
  j["restarts"] = c.restarts;
  j["seed"] = c.seed;
  j["max_iterations"] = c.max_iterations;
  j["fit"] = c.fit;
  j["events"] = c.events;
  j["fits"] = c.fits;
  j["acf_lags"] = c.acf_lags;
  j["rolling_window"] = c.rolling_window;
  j["lr_tail_dof"] = c.lr_tail_dof ? ojson(*c.lr_tail_dof) : ojson(nullptr);
  j["params"] = c.params;
  j["replications"] = c.replications;
  j["length"] = c.length;
  j["burn_in"] = c.burn_in ? ojson(*c.burn_in) : ojson(nullptr);
  j["at_most_one_event_per_step"] = c.at_most_one_event_per_step;
  j["garch"] = {{"scale", c.garch_scale},
                {"init", c.garch_init == VarianceInit::sample ? "sample" : "unconditional"},
                {"restarts", c.garch_restarts},
                {"white_noise", c.white_noise}};
  return j;
}

/// Reads a JSON config file. Unknown keys are rejected.
inline RunConfig config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{
      "input", "columns", "train_end", "quantile", "thresholds", "kinds", "restarts", "seed",
      "max_iterations", "out", "fit", "events", "fits", "acf_lags", "rolling_window", "lr_tail_dof",
      "params", "manifest", "replications", "length", "burn_in", "at_most_one_event_per_step", "garch"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");
  RunConfig c;
  try {
    c.input = j.value("input", c.input);
    if (j.contains("columns")) {
      const auto& col = j["columns"];
      c.columns.value_column = col.value("value", c.columns.value_column);
      c.columns.date_column = col.value("date", c.columns.date_column);
      const std::string type = col.value("type", std::string("price"));
      if (type == "price") c.columns.type = ValueType::price;
      else if (type == "log_return") c.columns.type = ValueType::log_return;
      else throw ConfigError("columns.type must be 'price' or 'log_return'");
    }
    if (j.contains("train_end") && !j["train_end"].is_null())
      c.train_end = j["train_end"].is_string() ? j["train_end"].get<std::string>()
                                               : std::to_string(j["train_end"].get<std::size_t>());
    c.quantile = j.value("quantile", c.quantile);
    if (j.contains("thresholds") && !j["thresholds"].is_null()) {
      const auto t = j["thresholds"].get<std::vector<double>>();
      if (t.size() != 2) throw ConfigError("thresholds must be [u_left, u_right]");
      c.thresholds = std::make_pair(t[0], t[1]);
    }
    if (j.contains("kinds")) {
      std::string list;
      for (const auto& k : j["kinds"]) list += k.get<std::string>() + ",";
      c.kinds = parse_kinds(list);
    }
    c.restarts = j.value("restarts", c.restarts);
    c.seed = j.value("seed", c.seed);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    if (j.contains("out") && !j["out"].is_null()) c.out = j["out"].get<std::string>();
    c.fit = j.value("fit", c.fit);
    c.events = j.value("events", c.events);
    if (j.contains("fits")) c.fits = j["fits"].get<std::vector<std::string>>();
    c.acf_lags = j.value("acf_lags", c.acf_lags);
    c.rolling_window = j.value("rolling_window", c.rolling_window);
    if (j.contains("lr_tail_dof") && !j["lr_tail_dof"].is_null()) c.lr_tail_dof = j["lr_tail_dof"].get<int>();
    c.params = j.value("params", c.params);
    c.manifest = j.value("manifest", c.manifest);
    c.replications = j.value("replications", c.replications);
    c.length = j.value("length", c.length);
    if (j.contains("burn_in") && !j["burn_in"].is_null()) c.burn_in = j["burn_in"].get<std::size_t>();
    c.at_most_one_event_per_step = j.value("at_most_one_event_per_step", c.at_most_one_event_per_step);
    if (j.contains("garch")) {
      const auto& g = j["garch"];
      c.garch_scale = g.value("scale", c.garch_scale);
      const std::string init = g.value("init", std::string("sample"));
      if (init == "sample") c.garch_init = VarianceInit::sample;
      else if (init == "unconditional") c.garch_init = VarianceInit::unconditional;
      else throw ConfigError("garch.init must be 'sample' or 'unconditional'");
      c.garch_restarts = g.value("restarts", c.garch_restarts);
      c.white_noise = g.value("white_noise", c.white_noise);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  try {
    return config_from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

/// Stable 64-bit FNV-1a digest, used for run directory names.
inline std::string digest(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 8);
}

/// --out names the run directory itself; otherwise runs go to
/// <root>/<command>-<config digest> with the root taken from the environment,
/// the config file, or the default, in that order.
inline fs::path resolve_run_dir(const std::string& command, const RunConfig& c,
                                const std::optional<std::string>& flag_out,
                                const std::optional<std::string>& config_out) {
  if (flag_out && !flag_out->empty()) return *flag_out;
  const std::string name = command + "-" + digest(command + to_json(c).dump());
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return fs::path(env) / name;
  if (config_out && !config_out->empty()) return *config_out;
  return fs::path("tpot-runs") / name;
}

// ---------------------------------------------------------------------------
// Output schemas and staged run directories
// ---------------------------------------------------------------------------

enum class FieldType { number, number_or_null, integer, string, boolean, object, object_or_null, array };

struct Schema {
  bool csv = false;
  std::vector<std::pair<std::string, FieldType>> fields;  // JSON: required top-level keys
  std::vector<std::string> header;                        // CSV: exact header
  std::set<std::string> numeric;                          // CSV: numeric or empty cells
};

inline Schema json_schema(std::vector<std::pair<std::string, FieldType>> fields) {
  Schema s;
  s.fields = std::move(fields);
  return s;
}

inline Schema csv_schema(std::vector<std::string> header, std::set<std::string> numeric) {
  Schema s;
  s.csv = true;
  s.header = std::move(header);
  s.numeric = std::move(numeric);
  return s;
}

inline bool has_type(const nlohmann::json& v, FieldType t) {
  switch (t) {
    case FieldType::number: return v.is_number();
    case FieldType::number_or_null: return v.is_number() || v.is_null();
    case FieldType::integer: return v.is_number_integer();
    case FieldType::string: return v.is_string();
    case FieldType::boolean: return v.is_boolean();
    case FieldType::object: return v.is_object();
    case FieldType::object_or_null: return v.is_object() || v.is_null();
    case FieldType::array: return v.is_array();
  }
  return false;
}

inline void validate_file(const fs::path& path, const Schema& s) {
  const std::string name = path.filename().string();
  std::ifstream f(path, std::ios::binary);
  if (!f) throw SchemaError(name + ": missing");
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string text = ss.str();
  if (!s.csv) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(name + ": invalid JSON: " + e.what());
    }
    for (const auto& [key, type] : s.fields) {
      if (!j.contains(key)) throw SchemaError(name + ": missing key '" + key + "'");
      if (!has_type(j[key], type)) throw SchemaError(name + ": key '" + key + "' has the wrong type");
    }
    return;
  }
  const auto records = csv::parse_records(text);
  if (records.empty() || records[0] != s.header) throw SchemaError(name + ": unexpected CSV header");
  std::vector<bool> num(s.header.size());
  for (std::size_t i = 0; i < s.header.size(); ++i) num[i] = s.numeric.count(s.header[i]) > 0;
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != s.header.size())
      throw SchemaError(name + ": row " + std::to_string(r) + " has " + std::to_string(records[r].size()) + " fields");
    for (std::size_t i = 0; i < num.size(); ++i)
      if (num[i] && !records[r][i].empty() && !detail::parse_decimal(records[r][i]) && records[r][i] != "inf" &&
          records[r][i] != "-inf" && records[r][i] != "nan")
        throw SchemaError(name + ": non-numeric '" + s.header[i] + "' at row " + std::to_string(r));
  }
}

/// Files are written to a staging area, checked against their schemas, and
/// moved into the run directory only when the whole command succeeded.
class RunDir {
 public:
  explicit RunDir(fs::path dir) : dir_(std::move(dir)), staging_(dir_ / ".staging") {
    fs::create_directories(dir_);
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }

  const fs::path& dir() const { return dir_; }

  void write_json(const std::string& name, const ojson& j, Schema schema) {
    std::ofstream f(staging_ / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + name + "'");
    f << j.dump(2) << '\n';
    add(name, std::move(schema));
  }

  void write_csv(const std::string& name, const csv::Writer& w, Schema schema) {
    w.save((staging_ / name).string());
    add(name, std::move(schema));
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [n, s] : files_) out.push_back(n);
    return out;
  }

  /// Validates every staged file and publishes them.
  void commit() {
    for (const auto& [name, schema] : files_) validate_file(staging_ / name, schema);
    for (const auto& [name, schema] : files_) fs::rename(staging_ / name, dir_ / name);
    fs::remove_all(staging_);
    fs::remove_all(dir_ / "quarantine");
  }

  /// Drops the staging area and the run directory if it is left empty.
  void discard() {
    fs::remove_all(staging_);
    std::error_code ec;
    if (fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
  }

  /// Moves whatever was staged to <dir>/quarantine together with the error.
  void quarantine(const std::string& error) {
    const fs::path q = dir_ / "quarantine";
    fs::remove_all(q);
    std::error_code ec;
    fs::rename(staging_, q, ec);
    if (ec) fs::create_directories(q);
    std::ofstream(q / "error.txt", std::ios::binary) << error << '\n';
  }

 private:
  void add(const std::string& name, Schema schema) {
    for (auto& [n, s] : files_)
      if (n == name) {
        s = std::move(schema);
        return;
      }
    files_.emplace_back(name, std::move(schema));
  }

  fs::path dir_;
  fs::path staging_;
  std::vector<std::pair<std::string, Schema>> files_;
};

inline const Schema& fit_schema() {
  static const Schema s = json_schema({{"kind", FieldType::string},
                                       {"params", FieldType::object},
                                       {"se", FieldType::object},
                                       {"loglik", FieldType::number},
                                       {"deviance", FieldType::number},
                                       {"n_events", FieldType::object},
                                       {"converged", FieldType::boolean},
                                       {"dim", FieldType::integer},
                                       {"thresholds", FieldType::object},
                                       {"train_end", FieldType::integer},
                                       {"T", FieldType::integer},
                                       {"forecast", FieldType::object_or_null}});
  return s;
}

inline const Schema& manifest_schema() {
  static const Schema s = json_schema({{"tool", FieldType::string},
                                       {"version", FieldType::string},
                                       {"command", FieldType::string},
                                       {"config", FieldType::object},
                                       {"seed", FieldType::integer},
                                       {"outputs", FieldType::array}});
  return s;
}

inline const std::vector<std::string>& comparison_header() {
  static const std::vector<std::string> h{"model",        "kind",          "dim",
                                          "n_events_train", "deviance_train", "aic_train",
                                          "bic_train",    "n_events_forecast", "deviance_forecast",
                                          "aic_forecast", "bic_forecast"};
  return h;
}

inline const std::vector<std::string>& lr_header() {
  static const std::vector<std::string> h{"null",    "alternative", "period",    "process",  "statistic",
                                          "dof",     "p_value",     "reject_05", "reject_01"};
  return h;
}

// ---------------------------------------------------------------------------
// Shared steps
// ---------------------------------------------------------------------------

inline std::string model_symbol(ModelKind k) {
  switch (k) {
    case ModelKind::bivariate: return "theta_bi";
    case ModelKind::bivariate_decoupled: return "theta_bi^d";
    case ModelKind::common: return "theta_ci";
    case ModelKind::common_symmetric: return "theta_ci^s";
  }
  return "?";
}

inline std::string file_tag(ModelKind k) {
  std::string s(to_string(k));
  std::replace(s.begin(), s.end(), '-', '_');
  return s;
}

/// Training length from a point count or an inclusive date label.
inline std::size_t resolve_train_end(const ReturnSeries& r, const std::optional<std::string>& spec) {
  if (!spec) return r.size();
  const std::string& s = *spec;
  if (!s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char ch) { return std::isdigit(ch); })) {
    const auto n = std::stoull(s);
    if (n == 0 || n > r.size())
      throw ConfigError("train_end " + s + " lies outside the series of length " + std::to_string(r.size()));
    return static_cast<std::size_t>(n);
  }
  if (r.labels.empty()) throw ConfigError("train_end given as a label but the series has no date column");
  if (s < r.labels.front() || s > r.labels.back())
    throw ConfigError("train_end '" + s + "' lies outside the series dates");
  const auto n = static_cast<std::size_t>(std::upper_bound(r.labels.begin(), r.labels.end(), s) - r.labels.begin());
  if (n == 0) throw ConfigError("train_end '" + s + "' leaves no training data");
  return n;
}

inline ReturnSeries load_input(const RunConfig& c) {
  if (c.input.empty()) throw ConfigError("no input series given");
  if (!fs::exists(c.input)) throw ConfigError("input '" + c.input + "' does not exist");
  ReturnSeries r = load_series(c.input, c.columns);
  r.train_end = resolve_train_end(r, c.train_end);
  return r;
}

/// Fit artifact: the FitResult plus thresholds, window and forecast scores.
struct FitArtifact {
  FitResult fit;
  double u_left = 0.0, u_right = 0.0;
  std::size_t train_end = 0, T = 0;
  std::optional<LogLikelihood> forecast;
};

inline ojson to_json(const FitArtifact& a) {
  ojson j = to_json(a.fit);
  j["thresholds"] = {{"left", a.u_left}, {"right", a.u_right}};
  j["train_end"] = a.train_end;
  j["T"] = a.T;
  if (a.forecast) {
    const auto& f = *a.forecast;
    auto finite = [](double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); };
    j["forecast"] = {{"loglik", finite(f.total)},
                     {"deviance", finite(f.deviance())},
                     {"loglik_per_tail", {{"left", finite(f.per_tail.left)}, {"right", finite(f.per_tail.right)}}},
                     {"n_events", {{"left", f.n_events.left}, {"right", f.n_events.right},
                                   {"total", f.n_events.left + f.n_events.right}}}};
  } else {
    j["forecast"] = nullptr;
  }
  return j;
}

inline FitArtifact artifact_from_json(const nlohmann::json& j) {
  FitArtifact a;
  a.fit = fit_from_json(j);
  a.u_left = j.at("thresholds").at("left").get<double>();
  a.u_right = j.at("thresholds").at("right").get<double>();
  a.train_end = j.at("train_end").get<std::size_t>();
  a.T = j.at("T").get<std::size_t>();
  if (j.contains("forecast") && !j["forecast"].is_null()) {
    const auto& f = j["forecast"];
    auto num = [](const nlohmann::json& v) {
      return v.is_null() ? -std::numeric_limits<double>::infinity() : v.get<double>();
    };
    LogLikelihood ll;
    ll.total = num(f.at("loglik"));
    ll.per_tail = {num(f.at("loglik_per_tail").at("left")), num(f.at("loglik_per_tail").at("right"))};
    ll.n_events = {f.at("n_events").at("left").get<double>(), f.at("n_events").at("right").get<double>()};
    a.forecast = ll;
  }
  return a;
}

inline FitArtifact read_artifact(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("fit artifact '" + path + "' does not exist");
  try {
    return artifact_from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("fit artifact '" + path + "': " + e.what());
  }
}

inline csv::Writer comparison_table(const std::vector<FitArtifact>& arts) {
  csv::Writer w(comparison_header());
  auto num = [](double v) { return csv::format_double(v, 10); };
  for (const auto& a : arts) {
    const double n_train = a.fit.n_events.left + a.fit.n_events.right;
    std::vector<std::string> row{model_symbol(a.fit.kind), std::string(to_string(a.fit.kind)),
                                 std::to_string(a.fit.dim), num(n_train), num(a.fit.deviance),
                                 num(aic(a.fit.loglik, a.fit.dim)),
                                 num(bic(a.fit.loglik, a.fit.dim, bic_observations(n_train)))};
    if (a.forecast) {
      const double n_f = a.forecast->n_events.left + a.forecast->n_events.right;
      row.push_back(num(n_f));
      row.push_back(num(a.forecast->deviance()));
      row.push_back(num(forecast_aic(a.forecast->total)));
      row.push_back(num(forecast_bic(a.forecast->total, a.fit.dim, bic_observations(n_train),
                                     bic_observations(n_train + n_f))));
    } else {
      row.insert(row.end(), 4, "");
    }
    w.add(row);
  }
  return w;
}

struct LrRow {
  ModelKind null_kind, alt_kind;
  std::string period, process;
  TestReport report;
};

/// Nested pairs: decoupled within bivariate, symmetric within common. The
/// whole-model dof is the dimension difference; per-tail tests use
/// `tail_dof` when given.
inline std::vector<LrRow> lr_tests(const std::vector<FitArtifact>& arts, std::optional<int> tail_dof) {
  auto find = [&](ModelKind k) -> const FitArtifact* {
    for (const auto& a : arts)
      if (a.fit.kind == k) return &a;
    return nullptr;
  };
  std::vector<LrRow> out;
  const std::pair<ModelKind, ModelKind> pairs[] = {{ModelKind::bivariate_decoupled, ModelKind::bivariate},
                                                  {ModelKind::common_symmetric, ModelKind::common}};
  for (const auto& [k0, k1] : pairs) {
    const FitArtifact* a0 = find(k0);
    const FitArtifact* a1 = find(k1);
    if (!a0 || !a1) continue;
    const int dof = a1->fit.dim - a0->fit.dim;
    auto test = [](double l0, double l1, int d, const char* name) {
      if (std::isfinite(l0) && std::isfinite(l1)) return lr_test(l0, l1, d, name);
      TestReport r;  // undefined when either score is -inf
      r.name = name;
      r.statistic = r.p_value = std::numeric_limits<double>::quiet_NaN();
      r.dof = d;
      return r;
    };
    auto add = [&](const std::string& period, double l0, double l1, TailPair t0, TailPair t1) {
      out.push_back({k0, k1, period, "total", test(l0, l1, dof, "N<->")});
      const int td = tail_dof.value_or(dof);
      out.push_back({k0, k1, period, "left", test(t0.left, t1.left, td, "N<-")});
      out.push_back({k0, k1, period, "right", test(t0.right, t1.right, td, "N->")});
    };
    add("train", a0->fit.loglik, a1->fit.loglik, a0->fit.loglik_per_tail, a1->fit.loglik_per_tail);
    if (a0->forecast && a1->forecast)
      add("forecast", a0->forecast->total, a1->forecast->total, a0->forecast->per_tail, a1->forecast->per_tail);
  }
  return out;
}

inline void write_comparison(RunDir& run, const std::vector<FitArtifact>& arts, std::optional<int> tail_dof) {
  run.write_csv("comparison.csv", comparison_table(arts),
                csv_schema(comparison_header(),
                           {"dim", "n_events_train", "deviance_train", "aic_train", "bic_train", "n_events_forecast",
                            "deviance_forecast", "aic_forecast", "bic_forecast"}));
  const auto rows = lr_tests(arts, tail_dof);
  csv::Writer w(lr_header());
  ojson tests = ojson::array();
  for (const auto& r : rows) {
    const bool defined = std::isfinite(r.report.statistic);
    w.add({model_symbol(r.null_kind), model_symbol(r.alt_kind), r.period, r.process,
           defined ? csv::format_double(r.report.statistic) : "", std::to_string(*r.report.dof),
           defined ? csv::format_double(r.report.p_value) : "", defined ? (r.report.reject_05 ? "1" : "0") : "",
           defined ? (r.report.reject_01 ? "1" : "0") : ""});
    ojson t = to_json(r.report);
    t["null"] = model_symbol(r.null_kind);
    t["alternative"] = model_symbol(r.alt_kind);
    t["period"] = r.period;
    t["process"] = r.process;
    tests.push_back(std::move(t));
  }
  run.write_csv("lr_tests.csv", w, csv_schema(lr_header(), {"statistic", "dof", "p_value", "reject_05", "reject_01"}));
  run.write_json("lr_tests.json", ojson{{"tests", tests}}, json_schema({{"tests", FieldType::array}}));
}

inline ojson manifest(const std::string& command, const RunConfig& c, const std::vector<std::string>& outputs) {
  ojson m;
  m["tool"] = "tpot";
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = to_json(c);
  m["seed"] = c.seed;
  std::vector<std::string> sorted = outputs;
  std::sort(sorted.begin(), sorted.end());
  m["outputs"] = sorted;
  return m;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline FitOptions fit_options(const RunConfig& c) {
  FitOptions o;
  o.restarts = c.restarts;
  o.seed = c.seed;
  o.optimizer.max_iterations = c.max_iterations;
  o.free_w = c.thresholds.has_value();
  return o;
}

inline void cmd_fit(const RunConfig& c, RunDir& run) {
  const ReturnSeries series = load_input(c);
  const auto [ul, ur] = c.thresholds ? *c.thresholds : select_thresholds(series, c.quantile);
  const ExceedanceSeries ex = extract_exceedances(series, ul, ur);
  run.write_json("exceedances.json", to_json(ex),
                 json_schema({{"u_left", FieldType::number},
                              {"u_right", FieldType::number},
                              {"T", FieldType::integer},
                              {"train_end", FieldType::integer},
                              {"events", FieldType::array}}));
  std::vector<FitArtifact> arts;
  for (ModelKind kind : c.kinds) {
    FitOptions o = fit_options(c);
    o.free_w = o.free_w && kind == ModelKind::common;
    FitArtifact a;
    a.fit = fit_ml(kind, ex, o);
    a.u_left = ul;
    a.u_right = ur;
    a.train_end = ex.train_end;
    a.T = ex.T;
    // an excess outside the fitted GPD support leaves the forecast score at -inf
    if (ex.train_end < ex.T) {
      a.forecast = detail::log_likelihood_unchecked(a.fit.params, ex.events, ex.train_end, ex.T);
      a.forecast->n_events = ex.count(ex.train_end, ex.T);
    }
    run.write_json("fit_" + file_tag(kind) + ".json", to_json(a), fit_schema());
    arts.push_back(std::move(a));
  }
  write_comparison(run, arts, c.lr_tail_dof);
}

inline void cmd_compare(const RunConfig& c, RunDir& run) {
  std::vector<std::string> paths;
  for (const auto& p : c.fits) {
    if (fs::is_directory(p)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(p)) {
        const std::string n = e.path().filename().string();
        if (n.rfind("fit_", 0) == 0 && e.path().extension() == ".json") found.push_back(e.path().string());
      }
      std::sort(found.begin(), found.end());
      paths.insert(paths.end(), found.begin(), found.end());
    } else {
      paths.push_back(p);
    }
  }
  if (paths.empty()) throw ConfigError("no fit artifacts to compare");
  std::vector<FitArtifact> arts;
  for (const auto& p : paths) arts.push_back(read_artifact(p));
  std::stable_sort(arts.begin(), arts.end(), [](const FitArtifact& a, const FitArtifact& b) {
    return static_cast<int>(a.fit.kind) < static_cast<int>(b.fit.kind);
  });
  write_comparison(run, arts, c.lr_tail_dof);
}

inline ojson ks_entry(std::span<const double> sample, Reference ref, const std::string& name) {
  if (sample.size() < 5) return ojson{{"name", name}, {"n", sample.size()}, {"skipped", "fewer than 5 points"}};
  return to_json(ks_test(sample, ref, name));
}

inline ojson period_report(const HawkesParams& p, const ExceedanceSeries& ex, std::size_t a, std::size_t b) {
  const ResidualSeries r = residuals(p, ex, a, b);
  ojson j;
  j["window"] = {a, b};
  j["n_events"] = r.size();
  ojson time;
  time["left"] = ks_entry(r.dtau[Tail::left], Reference::exponential, "N<-");
  time["right"] = ks_entry(r.dtau[Tail::right], Reference::exponential, "N->");
  time["total"] = ks_entry(r.dtau_total, Reference::exponential, "N<->");
  j["residual_time"] = std::move(time);
  if (is_common(p.kind)) {
    ojson split;
    for (Tail t : kTails)
      split[std::string(to_string(t))] = ks_entry(split_interarrivals(r.dtau_total_same[t], t, p.w),
                                                  Reference::exponential, t == Tail::left ? "N<- split" : "N-> split");
    j["split_residual_time"] = std::move(split);
  }
  ojson mags;
  for (Tail t : kTails) {
    std::vector<double> e;
    for (std::size_t k = 0; k < r.size(); ++k)
      if (r.tail[k] == t) e.push_back(r.resid_m[k]);
    mags[std::string(to_string(t))] = ks_entry(e, Reference::exponential, t == Tail::left ? "E<-" : "E->");
  }
  j["residual_magnitude"] = std::move(mags);
  ojson z;
  z["left"] = ks_entry(r.z[Tail::left], Reference::normal, "Z<-");
  z["right"] = ks_entry(r.z[Tail::right], Reference::normal, "Z->");
  z["total"] = ks_entry(r.z_total, Reference::normal, "Z<->");
  j["normal_transform"] = std::move(z);
  j["first_bin_excess_total"] = r.dtau_total.empty() ? ojson(nullptr) : ojson(first_bin_excess(r.dtau_total, 0.1));
  return j;
}

/// Time of the first excess outside the GPD support implied by `p`, if any.
inline std::optional<std::size_t> first_unsupported(const HawkesParams& p, const ExceedanceSeries& ex) {
  HawkesRecursion rec(p);
  for (const Event& e : ex.events) {
    rec.advance(static_cast<double>(e.t));
    if (!std::isfinite(rec.absorb(e.tail, std::abs(e.m)).hazard)) return e.t;
  }
  return std::nullopt;
}

inline void cmd_diagnose(const RunConfig& c, RunDir& run) {
  if (c.fit.empty()) throw ConfigError("diagnose needs a fit artifact (--fit)");
  const FitArtifact art = read_artifact(c.fit);
  const std::string events = c.events.empty() ? (fs::path(c.fit).parent_path() / "exceedances.json").string() : c.events;
  std::ifstream f(events);
  if (!f) throw ConfigError("exceedance file '" + events + "' does not exist");
  ExceedanceSeries ex = exceedances_from_json(nlohmann::json::parse(f));
  const HawkesParams& p = art.fit.params;
  // the analysis stops at an excess the fitted scale cannot produce
  const auto cut = first_unsupported(p, ex);
  if (cut) {
    std::erase_if(ex.events, [&](const Event& e) { return e.t >= *cut; });
    ex.T = *cut;
    ex.train_end = std::min(ex.train_end, ex.T);
  }

  const ResidualSeries all = residuals(p, ex);
  run.write_csv("residuals.csv", residuals_csv(all),
                csv_schema({"t", "tail", "tau_total", "tau_own", "count_total", "count_own", "dtau_total", "dtau_own",
                            "z_total", "z_own", "sigma", "resid_m"},
                           {"t", "tau_total", "tau_own", "count_total", "count_own", "dtau_total", "dtau_own",
                            "z_total", "z_own", "sigma", "resid_m"}));

  ojson report;
  report["kind"] = std::string(to_string(p.kind));
  report["truncated_at"] = cut ? ojson(*cut) : ojson(nullptr);
  report["train"] = ex.train_end > 0 ? period_report(p, ex, 0, ex.train_end) : ojson(nullptr);
  report["forecast"] = ex.train_end < ex.T ? period_report(p, ex, ex.train_end, ex.T) : ojson(nullptr);

  const ResidualSeries train = residuals(p, ex, 0, ex.train_end);
  ojson acf_files = ojson::object();
  auto correlograms = [&](const std::string& proc, const std::vector<double>& z) {
    std::vector<double> finite;
    for (double v : z)
      if (std::isfinite(v)) finite.push_back(v);
    const std::size_t lags = std::min(c.acf_lags, finite.size() > 1 ? finite.size() - 1 : 0);
    ojson entry;
    if (lags >= 1) {
      try {
        run.write_csv("acf_" + proc + ".csv", acf_csv(acf(finite, lags)),
                      csv_schema({"lag", "acf", "band_95", "band_99"}, {"lag", "acf", "band_95", "band_99"}));
        entry["acf"] = "acf_" + proc + ".csv";
      } catch (const std::domain_error& e) {
        entry["acf"] = e.what();
      }
    } else {
      entry["acf"] = "too few points";
    }
    if (finite.size() >= c.rolling_window) {
      run.write_csv("rolling_acf_" + proc + ".csv", rolling_acf_csv(rolling_acf1(finite, c.rolling_window)),
                    csv_schema({"end", "acf1", "band_95", "band_99", "gap"}, {"end", "acf1", "band_95", "band_99", "gap"}));
      entry["rolling_acf"] = "rolling_acf_" + proc + ".csv";
    } else {
      entry["rolling_acf"] = "series shorter than the rolling window";
    }
    acf_files[proc] = std::move(entry);
  };
  correlograms("left", train.z[Tail::left]);
  correlograms("right", train.z[Tail::right]);
  correlograms("total", train.z_total);
  report["correlograms"] = std::move(acf_files);
  run.write_json("report.json", report,
                 json_schema({{"kind", FieldType::string},
                              {"truncated_at", FieldType::number_or_null},
                              {"train", FieldType::object_or_null},
                              {"forecast", FieldType::object_or_null},
                              {"correlograms", FieldType::object}}));
}

struct SimulationPlan {
  bool garch = false;
  nlohmann::json params;
  SimConfig config;
  std::uint64_t seed = 1;
  std::size_t replications = 1;
};

inline ojson to_json(const SimulationPlan& s) {
  ojson j;
  j["model"] = s.garch ? "garch" : "hawkes";
  j["params"] = s.params;
  j["config"] = to_json(s.config);
  j["base_seed"] = s.seed;
  j["replications"] = s.replications;
  ojson seeds = ojson::array();
  for (std::size_t i = 0; i < s.replications; ++i) seeds.push_back(replication_seed(s.seed, i));
  j["replication_seeds"] = std::move(seeds);
  return j;
}

inline SimulationPlan plan_from_json(const nlohmann::json& j) {
  SimulationPlan s;
  s.garch = j.at("model").get<std::string>() == "garch";
  s.params = j.at("params");
  s.config = sim_config_from_json(j.at("config"));
  s.seed = j.at("base_seed").get<std::uint64_t>();
  s.replications = j.at("replications").get<std::size_t>();
  return s;
}

inline std::string series_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "series_%04zu.csv", i);
  return buf;
}

/// Regeneration from a manifest adopts the recorded configuration, so the
/// new manifest matches the old one.
inline void cmd_simulate(RunConfig& c, RunDir& run, ojson& manifest_extra) {
  SimulationPlan plan;
  if (!c.manifest.empty()) {
    std::ifstream f(c.manifest);
    if (!f) throw ConfigError("manifest '" + c.manifest + "' does not exist");
    const auto m = nlohmann::json::parse(f);
    if (!m.contains("simulation") || !m.contains("config"))
      throw ConfigError("manifest '" + c.manifest + "' has no simulation section");
    plan = plan_from_json(m["simulation"]);
    c = config_from_json(m["config"]);
  } else {
    if (c.params.empty()) throw ConfigError("simulate needs a parameter file (--params) or a manifest");
    std::ifstream f(c.params);
    if (!f) throw ConfigError("parameter file '" + c.params + "' does not exist");
    plan.params = nlohmann::json::parse(f);
    plan.garch = plan.params.contains("omega");
    plan.config.T = c.length;
    plan.config.burn_in = c.burn_in;
    plan.config.at_most_one_event_per_step = c.at_most_one_event_per_step;
    plan.seed = c.seed;
    plan.replications = c.replications;
  }
  try {
    if (plan.garch) garch_params_from_json(plan.params);
    else params_from_json(plan.params);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("simulation parameters: ") + e.what());
  }
  for (std::size_t i = 0; i < plan.replications; ++i) {
    const std::uint64_t seed = replication_seed(plan.seed, i);
    if (plan.garch) {
      const auto path = simulate_garch_path(garch_params_from_json(plan.params), plan.config.T, seed);
      csv::Writer w({"t", "x", "sigma"});
      for (std::size_t t = 0; t < path.sigma.size(); ++t)
        w.add({std::to_string(t), csv::format_double(path.series.x[t], 17), csv::format_double(path.sigma[t], 17)});
      run.write_csv(series_name(i), w, csv_schema({"t", "x", "sigma"}, {"t", "x", "sigma"}));
    } else {
      SimConfig sc = plan.config;
      sc.seed = seed;
      const auto ex = simulate_hawkes(params_from_json(plan.params), sc);
      csv::Writer w({"t", "tail", "m"});
      for (const auto& e : ex.events)
        w.add({std::to_string(e.t), std::string(to_string(e.tail)), csv::format_double(e.m, 17)});
      run.write_csv(series_name(i), w, csv_schema({"t", "tail", "m"}, {"t", "m"}));
    }
  }
  manifest_extra["simulation"] = to_json(plan);
}

struct GarchVariant {
  const char* tag;
  const char* label;
  int o;
  ErrorDist dist;
};

inline constexpr GarchVariant kGarchVariants[] = {{"g0n", "G(0,N)", 0, ErrorDist::normal},
                                                  {"g0t", "G(0,t)", 0, ErrorDist::student_t},
                                                  {"g1n", "G(1,N)", 1, ErrorDist::normal},
                                                  {"g1t", "G(1,t)", 1, ErrorDist::student_t}};

inline void cmd_garch(const RunConfig& c, RunDir& run) {
  const ReturnSeries series = load_input(c);
  const std::size_t te = series.train_end;
  std::vector<GarchFitResult> fits;
  std::vector<std::pair<std::string, ResidualHawkesFit>> hawkes;
  FitOptions ho = fit_options(c);
  ho.free_w = false;

  for (const auto& v : kGarchVariants) {
    GarchFitOptions go;
    go.train_end = te;
    go.scale = c.garch_scale;
    go.init = c.garch_init;
    go.restarts = c.garch_restarts;
    go.seed = c.seed;
    GarchFitResult fr = garch_fit(series.x, v.o, v.dist, go);
    const GarchParams g = fr.unscaled();
    const GarchFilter flt = garch_filter(g, series.x, c.garch_init, te);
    csv::Writer w({"t", "x", "sigma", "z"});
    for (std::size_t t = 0; t < series.size(); ++t)
      w.add({std::to_string(t), csv::format_double(series.x[t], 17), csv::format_double(flt.sigma[t], 17),
             csv::format_double(flt.z[t], 17)});
    run.write_csv(std::string("filtered_") + v.tag + ".csv", w, csv_schema({"t", "x", "sigma", "z"}, {"t", "x", "sigma", "z"}));
    ojson gj = to_json(fr);
    gj["variant"] = v.label;
    gj["params_unscaled"] = to_json(g);
    run.write_json(std::string("garch_") + v.tag + ".json", gj,
                   json_schema({{"params", FieldType::object}, {"se", FieldType::object}, {"loglik", FieldType::number},
                                {"aic", FieldType::number}, {"converged", FieldType::boolean}}));
    auto res = hawkes_on_residuals(series.x, g, ho, c.quantile, te, c.garch_init);
    run.write_json(std::string("hawkes_") + v.tag + ".json", to_json(res.fit),
                   json_schema({{"kind", FieldType::string}, {"params", FieldType::object}, {"se", FieldType::object}}));
    fits.push_back(std::move(fr));
    hawkes.emplace_back(v.label, std::move(res));
  }
  if (c.white_noise) {
    const GarchParams unit;
    const auto noise = simulate_garch(unit, series.size(), replication_seed(c.seed, 0)).x;
    auto res = hawkes_on_residuals(noise, unit, ho, c.quantile, te);
    run.write_json("hawkes_white_noise.json", to_json(res.fit),
                   json_schema({{"kind", FieldType::string}, {"params", FieldType::object}, {"se", FieldType::object}}));
    hawkes.insert(hawkes.begin(), {"z|N(0,1)", std::move(res)});
  }

  auto num = [](std::optional<double> v) { return v ? csv::format_double(*v, 10) : std::string(); };
  std::vector<std::string> header{"parameter"};
  for (const auto& v : kGarchVariants) {
    header.push_back(std::string(v.label) + " est");
    header.push_back(std::string(v.label) + " se");
  }
  std::set<std::string> numeric(header.begin() + 1, header.end());
  csv::Writer gt(header);
  for (const char* name : {"mu", "omega", "alpha1", "gamma1", "beta1", "nu"}) {
    std::vector<std::string> row{name};
    for (const auto& f : fits) {
      std::optional<double> est;
      for (std::size_t i = 0; i < f.names.size(); ++i)
        if (f.names[i] == name) est = f.estimates[i];
      row.push_back(num(est));
      row.push_back(num(est ? f.se_of(name) : std::nullopt));
    }
    gt.add(row);
  }
  for (const char* name : {"loglik", "aic", "scale"}) {
    std::vector<std::string> row{name};
    for (const auto& f : fits) {
      const double v = std::string(name) == "loglik" ? f.loglik : std::string(name) == "aic" ? f.aic : f.scale;
      row.push_back(num(v));
      row.push_back("");
    }
    gt.add(row);
  }
  run.write_csv("garch_table.csv", gt, csv_schema(header, numeric));

  std::vector<std::string> hh{"parameter"};
  for (const auto& [label, r] : hawkes) {
    hh.push_back(label + " est");
    hh.push_back(label + " se");
  }
  std::set<std::string> hnum(hh.begin() + 1, hh.end());
  csv::Writer ht(hh);
  for (const char* name : {"u_left", "u_right"}) {
    std::vector<std::string> row{name};
    for (const auto& [label, r] : hawkes) {
      row.push_back(num(std::string(name) == "u_left" ? r.exceedances.u_left : r.exceedances.u_right));
      row.push_back("");
    }
    ht.add(row);
  }
  for (const auto& spec : param_specs(ModelKind::bivariate)) {
    if (spec.name.rfind("eta", 0) == 0 || spec.name.rfind("alpha", 0) == 0) continue;
    std::vector<std::string> row{spec.name};
    for (const auto& [label, r] : hawkes) {
      row.push_back(num(spec.get(r.fit.params)));
      row.push_back(num(r.fit.se_of(spec.name)));
    }
    ht.add(row);
  }
  run.write_csv("hawkes_residuals_table.csv", ht, csv_schema(hh, hnum));
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

/// Runs one command; returns the process exit code (0 success, 1 failed stage,
/// 2 invalid configuration).
inline int run_command(const std::string& command, RunConfig c, std::optional<std::string> flag_out,
                       std::ostream& log = std::cerr) {
  try {
    c.validate();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return 2;
  }
  const fs::path dir = resolve_run_dir(command, c, flag_out, c.out);
  std::optional<RunDir> run;
  try {
    run.emplace(dir);
    ojson extra = ojson::object();
    if (command == "fit") cmd_fit(c, *run);
    else if (command == "diagnose") cmd_diagnose(c, *run);
    else if (command == "compare") cmd_compare(c, *run);
    else if (command == "simulate") cmd_simulate(c, *run, extra);
    else if (command == "garch") cmd_garch(c, *run);
    else throw ConfigError("unknown command '" + command + "'");
    ojson m = manifest(command, c, run->names());
    for (auto& [k, v] : extra.items()) m[k] = v;
    run->write_json("manifest.json", m, manifest_schema());
    run->commit();
    std::cout << dir.string() << '\n';
    return 0;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    if (run) run->discard();
    return 2;
  } catch (const std::exception& e) {
    log << command << " failed: " << e.what() << '\n';
    if (run) run->quarantine(e.what());
    return 1;
  }
}

}  // namespace tpot::cli
