#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tpot/csv.hpp"
#include "tpot/tail.hpp"

namespace tpot {

/// Daily series on a unit-step trading-day index 0..n-1.
struct ReturnSeries {
  std::vector<double> x;
  std::vector<std::string> labels;  // optional, empty or one per point
  std::size_t train_end = 0;

  std::size_t size() const { return x.size(); }

  void validate() const {
    if (x.empty()) throw std::invalid_argument("empty return series");
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!std::isfinite(x[i]))
        throw std::invalid_argument("non-finite return at index " + std::to_string(i));
    if (!labels.empty() && labels.size() != x.size())
      throw std::invalid_argument("label count does not match series length");
    if (train_end == 0 || train_end > x.size())
      throw std::invalid_argument("train_end must lie in (0, length]");
  }

  /// First index whose label is >= `label` (ISO dates compare lexicographically).
  std::size_t index_of_label(const std::string& label) const {
    if (labels.empty()) throw std::invalid_argument("series has no labels");
    auto it = std::lower_bound(labels.begin(), labels.end(), label);
    return static_cast<std::size_t>(it - labels.begin());
  }
};

struct Event {
  std::size_t t;  // trading-day index
  Tail tail;
  double m;       // signed excess: < 0 left, > 0 right

  friend bool operator==(const Event&, const Event&) = default;
};

/// Two-tailed exceedance history over [0, T).
struct ExceedanceSeries {
  double u_left = 0.0;
  double u_right = 0.0;
  std::vector<Event> events;
  std::size_t T = 0;
  std::size_t train_end = 0;

  /// Events with t in [a, b).
  TailPair count(std::size_t a, std::size_t b) const {
    TailPair n{};
    for (const auto& e : events)
      if (e.t >= a && e.t < b) n[e.tail] += 1.0;
    return n;
  }

  std::vector<Event> of_tail(Tail tail) const {
    std::vector<Event> out;
    for (const auto& e : events)
      if (e.tail == tail) out.push_back(e);
    return out;
  }

  /// Checks ordering and sign conventions. Coincident times are tolerated only
  /// for opposite tails (independent bivariate simulation); extracted series
  /// always have strictly increasing times.
  void validate() const {
    if (!(u_left < u_right)) throw std::invalid_argument("thresholds need u_left < u_right");
    if (train_end > T) throw std::invalid_argument("train_end beyond horizon");
    for (std::size_t k = 0; k < events.size(); ++k) {
      const Event& e = events[k];
      if (e.t >= T) throw std::invalid_argument("event time beyond horizon");
      if (!std::isfinite(e.m) || e.m * sign(e.tail) <= 0.0)
        throw std::invalid_argument("event " + std::to_string(k) + " has an excess of the wrong sign");
      if (k > 0) {
        const Event& p = events[k - 1];
        if (e.t < p.t || (e.t == p.t && !(p.tail == Tail::left && e.tail == Tail::right)))
          throw std::invalid_argument("events are not sorted in time");
      }
    }
  }
};

// ---------------------------------------------------------------------------

enum class ValueType { price, log_return };

struct ColumnSpec {
  std::string value_column = "Close";
  std::string date_column = "Date";  // empty: no labels
  ValueType type = ValueType::price;
};

/// x_t = ln(P_t / P_{t-1}); drops the first point.
inline std::vector<double> log_returns(const std::vector<double>& prices) {
  if (prices.size() < 2) throw std::invalid_argument("need at least two prices");
  std::vector<double> x;
  x.reserve(prices.size() - 1);
  for (std::size_t i = 0; i < prices.size(); ++i) {
    if (!(prices[i] > 0.0) || !std::isfinite(prices[i]))
      throw std::invalid_argument("non-positive price at index " + std::to_string(i));
    if (i > 0) x.push_back(std::log(prices[i] / prices[i - 1]));
  }
  return x;
}

namespace detail {

inline std::optional<double> parse_decimal(std::string s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return std::nullopt;
  auto e = s.find_last_not_of(" \t");
  s = s.substr(b, e - b + 1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Reads one column of a headed CSV file. Rows are numbered from 1 after the
/// header in error messages. train_end defaults to the full length.
inline ReturnSeries load_series(const std::string& path, const ColumnSpec& spec = {}) {
  const csv::Table table = csv::read(path);
  const std::size_t vcol = table.column(spec.value_column);
  std::optional<std::size_t> dcol;
  if (!spec.date_column.empty()) dcol = table.column(spec.date_column);
  if (table.rows.size() < 3)
    throw std::invalid_argument("'" + path + "' has fewer than 3 data rows");

  std::vector<double> values;
  std::vector<std::string> labels;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string cell = vcol < row.size() ? row[vcol] : std::string();
    auto v = detail::parse_decimal(cell);
    if (!v) throw std::invalid_argument("non-numeric value at row " + std::to_string(r + 1));
    if (spec.type == ValueType::price && !(*v > 0.0))
      throw std::invalid_argument("non-positive price at row " + std::to_string(r + 1));
    values.push_back(*v);
    if (dcol) labels.push_back(*dcol < row.size() ? row[*dcol] : std::string());
  }

  ReturnSeries out;
  if (spec.type == ValueType::price) {
    out.x = log_returns(values);
    if (!labels.empty()) out.labels.assign(labels.begin() + 1, labels.end());
  } else {
    out.x = std::move(values);
    out.labels = std::move(labels);
  }
  out.train_end = out.x.size();
  out.validate();
  return out;
}

/// Symmetric order-statistic thresholds on the training window: with
/// k = ceil(q n) over the sorted sample, u_left = x_(k) and u_right =
/// x_(n+1-k). Both tails then hold k-1 strict exceedances absent ties.
inline std::pair<double, double> select_thresholds(const ReturnSeries& r, double q) {
  if (!(q > 0.0 && q < 0.5)) throw std::invalid_argument("tail probability must lie in (0, 0.5)");
  const std::size_t n = std::min(r.train_end, r.size());
  if (static_cast<double>(n) * q < 1.0 - 1e-9)
    throw std::invalid_argument("training window shorter than 1/q points");
  std::vector<double> s(r.x.begin(), r.x.begin() + static_cast<std::ptrdiff_t>(n));
  std::sort(s.begin(), s.end());
  auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, n);
  return {s[k - 1], s[n - k]};
}

/// Points strictly below u_left (above u_right) become left (right) events.
inline ExceedanceSeries extract_exceedances(const ReturnSeries& r, double u_left, double u_right) {
  if (!(u_left < u_right)) throw std::invalid_argument("thresholds need u_left < u_right");
  ExceedanceSeries ex;
  ex.u_left = u_left;
  ex.u_right = u_right;
  ex.T = r.size();
  ex.train_end = r.train_end;
  for (std::size_t t = 0; t < r.size(); ++t) {
    if (r.x[t] < u_left) ex.events.push_back({t, Tail::left, r.x[t] - u_left});
    else if (r.x[t] > u_right) ex.events.push_back({t, Tail::right, r.x[t] - u_right});
  }
  return ex;
}

// ---------------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const ExceedanceSeries& ex) {
  nlohmann::ordered_json j;
  j["u_left"] = ex.u_left;
  j["u_right"] = ex.u_right;
  j["T"] = ex.T;
  j["train_end"] = ex.train_end;
  auto events = nlohmann::ordered_json::array();
  for (const auto& e : ex.events)
    events.push_back({{"t", e.t}, {"tail", std::string(to_string(e.tail))}, {"m", e.m}});
  j["events"] = std::move(events);
  return j;
}

inline ExceedanceSeries exceedances_from_json(const nlohmann::json& j) {
  ExceedanceSeries ex;
  ex.u_left = j.at("u_left").get<double>();
  ex.u_right = j.at("u_right").get<double>();
  ex.T = j.at("T").get<std::size_t>();
  ex.train_end = j.at("train_end").get<std::size_t>();
  for (const auto& e : j.at("events"))
    ex.events.push_back({e.at("t").get<std::size_t>(), parse_tail(e.at("tail").get<std::string>()),
                         e.at("m").get<double>()});
  ex.validate();
  return ex;
}

}  // namespace tpot
