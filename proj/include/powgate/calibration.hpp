#pragma once

// Difficulty calibration: an OLS model of legitimate cumulative cost vs query
// count, an OLS model mapping ln(solve seconds) to bits, and the exponential
// cost-to-time mapping f(x) = a^x that ties the two together. Also the
// stateless per-query variant used against Sybil account splitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "powgate/errors.hpp"
#include "powgate/hashcash.hpp"
#include "powgate/util.hpp"

namespace powgate {

struct LinearModel {
  double slope = 0.0;
  double intercept = 0.0;
  double operator()(double x) const { return slope * x + intercept; }
};

// Ordinary least squares. Compensated accumulation keeps the fit stable for
// long traces; inputs with fewer than two distinct abscissae are degenerate.
inline LinearModel ols_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorKind::rejected_input, "x/y length mismatch");
  const double n = static_cast<double>(x.size());
  if (x.size() < 2) throw Error(ErrorKind::fit_degenerate, "need >= 2 points");
  CompensatedSum sx, sy, sxx, sxy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw Error(ErrorKind::rejected_input, "non-finite input to OLS");
    }
    sx.add(x[i]);
    sy.add(y[i]);
    sxx.add(x[i] * x[i]);
    sxy.add(x[i] * y[i]);
  }
  const double mean_x = sx.value() / n;
  const double mean_y = sy.value() / n;
  // Centered second pass: avoids catastrophic cancellation of n*sxx - sx^2.
  CompensatedSum cxx, cxy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cxx.add((x[i] - mean_x) * (x[i] - mean_x));
    cxy.add((x[i] - mean_x) * (y[i] - mean_y));
  }
  if (cxx.value() <= 0) throw Error(ErrorKind::fit_degenerate, "need >= 2 distinct abscissae");
  LinearModel m;
  m.slope = cxy.value() / cxx.value();
  m.intercept = mean_y - m.slope * mean_x;
  if (!std::isfinite(m.slope) || !std::isfinite(m.intercept)) {
    throw Error(ErrorKind::fit_degenerate, "non-finite fit");
  }
  return m;
}

struct TracePoint {
  std::int64_t query_count = 0;
  double cumulative_cost = 0.0;
};

using Trace = std::vector<TracePoint>;

// Legit-cost model: pooled OLS of cumulative cost against query count over
// all trace points. Extrapolates to any query count; callers clamp
// predictions below at zero.
inline LinearModel fit_legit_model(const std::vector<Trace>& traces) {
  std::vector<double> x, y;
  for (const auto& t : traces) {
    for (const auto& p : t) {
      x.push_back(static_cast<double>(p.query_count));
      y.push_back(p.cumulative_cost);
    }
  }
  return ols_fit(x, y);
}

// Bits model: OLS of bits against ln(mean solve seconds). On ideal data the
// slope is 1/ln 2 (solve time doubles per bit).
inline LinearModel fit_bits_model(const BenchTable& bench) {
  std::vector<double> x, y;
  for (const auto& r : bench.rows) {
    if (r.mean_solve_seconds <= 0) {
      throw Error(ErrorKind::rejected_input, "bench rows need positive timings");
    }
    x.push_back(std::log(r.mean_solve_seconds));
    y.push_back(static_cast<double>(r.bits));
  }
  return ols_fit(x, y);
}

struct UserLedger {
  std::string user_id;
  std::int64_t query_count = 0;
  double cumulative_cost = 0.0;
};

// Optional band mode: deviation is measured from an offset band around the
// legit prediction instead of the line itself (zero inside the band).
struct CostBand {
  double lower_offset = 0.0;  // <= 0
  double upper_offset = 0.0;  // >= 0
};

struct Calibrator {
  LinearModel legit_model;
  LinearModel bits_model;
  double a = 1.0075;
  double a_q = 1.0075;
  double time_unit_seconds = 1.0;
  int k_min = 0;
  int k_max = 50;
  std::optional<CostBand> band;

  void validate() const {
    if (!(a > 1)) throw Error(ErrorKind::config_error, "a must be > 1");
    if (!(a_q > 1)) throw Error(ErrorKind::config_error, "a_q must be > 1");
    if (!(time_unit_seconds > 0)) throw Error(ErrorKind::config_error, "time_unit_seconds must be > 0");
    if (k_min > k_max) throw Error(ErrorKind::config_error, "k_min must be <= k_max");
    if (!(bits_model.slope > 0)) throw Error(ErrorKind::config_error, "bits model slope must be > 0");
  }

  // |actual cumulative cost - max(0, predicted legit cost)|, or the distance
  // outside the band when band mode is active.
  double cost_difference(const UserLedger& ledger) const {
    const double predicted = std::max(0.0, legit_model(static_cast<double>(ledger.query_count)));
    if (band) {
      const double lower = std::max(0.0, predicted + band->lower_offset);
      const double upper = predicted + band->upper_offset;
      if (ledger.cumulative_cost < lower) return lower - ledger.cumulative_cost;
      if (ledger.cumulative_cost > upper) return ledger.cumulative_cost - upper;
      return 0.0;
    }
    return std::abs(ledger.cumulative_cost - predicted);
  }

  // ln(time_unit * a^x) without overflow; both difficulty paths share it.
  double ln_target_time(double x, double base) const {
    return std::log(time_unit_seconds) + x * std::log(base);
  }

  // Desired PoW seconds for deviation x; saturates at the k_max-equivalent
  // time instead of overflowing.
  double target_time(double x) const {
    if (x < 0) throw Error(ErrorKind::rejected_input, "x must be >= 0");
    const double ln_t = ln_target_time(x, a);
    const double ln_saturation = (static_cast<double>(k_max) - bits_model.intercept) / bits_model.slope;
    return std::exp(std::min(ln_t, ln_saturation));
  }

  int bits_for_ln_time(double ln_seconds) const {
    const double raw = std::round(bits_model(ln_seconds));
    const double clamped = std::clamp(raw, static_cast<double>(k_min), static_cast<double>(k_max));
    return static_cast<int>(clamped);
  }

  // Stateful difficulty: k = clamp(round(bits_model(ln(target_time(x))))).
  int difficulty(const UserLedger& ledger) const {
    return bits_for_ln_time(ln_target_time(cost_difference(ledger), a));
  }

  // Stateless difficulty from one query's own cost, using the separate base
  // a_q (per-query costs live on a much smaller scale than ledger sums).
  int stateless_difficulty(double per_query_cost) const {
    if (per_query_cost < 0) throw Error(ErrorKind::rejected_input, "cost must be >= 0");
    return bits_for_ln_time(ln_target_time(per_query_cost, a_q));
  }

  std::string to_json() const {
    nlohmann::json j;
    j["legit_slope"] = legit_model.slope;
    j["legit_intercept"] = legit_model.intercept;
    j["bits_slope"] = bits_model.slope;
    j["bits_intercept"] = bits_model.intercept;
    j["a"] = a;
    j["a_q"] = a_q;
    j["time_unit_seconds"] = time_unit_seconds;
    j["k_min"] = k_min;
    j["k_max"] = k_max;
    return j.dump(2);
  }

  static Calibrator from_json(const std::string& text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
      throw Error(ErrorKind::parse_error, std::string("calibrator JSON: ") + e.what());
    }
    Calibrator c;
    try {
      c.legit_model.slope = j.at("legit_slope").get<double>();
      c.legit_model.intercept = j.at("legit_intercept").get<double>();
      c.bits_model.slope = j.at("bits_slope").get<double>();
      c.bits_model.intercept = j.at("bits_intercept").get<double>();
      c.a = j.at("a").get<double>();
      c.a_q = j.at("a_q").get<double>();
      c.time_unit_seconds = j.at("time_unit_seconds").get<double>();
      c.k_min = j.at("k_min").get<int>();
      c.k_max = j.at("k_max").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::parse_error, std::string("calibrator JSON fields: ") + e.what());
    }
    c.validate();
    return c;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io_error, "cannot write " + path);
    out << to_json() << '\n';
  }

  static Calibrator load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io_error, "cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
  }
};

// Fit a band from trace residual quantiles around the legit model (the
// optional "expected band" variant of cost_difference).
inline CostBand fit_band(const std::vector<Trace>& traces, const LinearModel& legit,
                         double quantile = 0.05) {
  std::vector<double> residuals;
  for (const auto& t : traces) {
    for (const auto& p : t) {
      residuals.push_back(p.cumulative_cost -
                          std::max(0.0, legit(static_cast<double>(p.query_count))));
    }
  }
  if (residuals.empty()) throw Error(ErrorKind::fit_degenerate, "no trace points");
  std::sort(residuals.begin(), residuals.end());
  const auto at = [&](double q) {
    const double pos = q * (static_cast<double>(residuals.size()) - 1);
    return residuals[static_cast<std::size_t>(std::llround(pos))];
  };
  CostBand band;
  band.lower_offset = std::min(0.0, at(quantile));
  band.upper_offset = std::max(0.0, at(1.0 - quantile));
  return band;
}

// Trace CSV: header `query_count,cumulative_cost`, one file per trace.
inline void save_trace_csv(const Trace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io_error, "cannot write " + path);
  out << "query_count,cumulative_cost\n";
  out.precision(17);
  for (const auto& p : trace) out << p.query_count << ',' << p.cumulative_cost << '\n';
}

inline Trace load_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io_error, "cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "query_count,cumulative_cost") {
    throw Error(ErrorKind::parse_error, path + ": bad or missing trace header");
  }
  Trace trace;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto parts = split(trim(line), ',');
    if (parts.size() != 2) {
      throw Error(ErrorKind::parse_error, path + " line " + std::to_string(lineno) + ": want 2 fields");
    }
    try {
      trace.push_back({std::stoll(std::string(parts[0])), std::stod(std::string(parts[1]))});
    } catch (const std::exception&) {
      throw Error(ErrorKind::parse_error, path + " line " + std::to_string(lineno) + ": bad number");
    }
  }
  return trace;
}

}  // namespace powgate
