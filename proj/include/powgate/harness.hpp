#pragma once

// Attack-simulation harness: drives a Gateway in process with scripted query
// strategies, records per-batch cost/difficulty traces, and converts puzzle
// difficulty into expected solving time. Puzzles at or below a threshold are
// actually solved end to end; harder ones are abandoned after issuance (the
// cost is already on the ledger) and accounted analytically at 2^bits hashes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "powgate/calibration.hpp"
#include "powgate/dataset.hpp"
#include "powgate/errors.hpp"
#include "powgate/hashcash.hpp"
#include "powgate/server.hpp"

namespace powgate {

enum class StrategyKind {
  standard,     // legit-like: in-distribution queries without replacement
  ood_random,   // uniform over the widened bounding box, with replacement
  entropy_al,   // pick box candidates maximizing substitute-model entropy
  gap_al,       // pick box candidates minimizing the substitute's top-2 gap
  entropy_rev,  // pick box candidates minimizing substitute-model entropy
  worst_case,   // in-distribution pool sorted ascending by exact meter cost
  in_out,       // out-of-distribution with periodic in-distribution batches
};

inline const char* to_string(StrategyKind s) {
  switch (s) {
    case StrategyKind::standard: return "standard";
    case StrategyKind::ood_random: return "ood_random";
    case StrategyKind::entropy_al: return "entropy_al";
    case StrategyKind::gap_al: return "gap_al";
    case StrategyKind::entropy_rev: return "entropy_rev";
    case StrategyKind::worst_case: return "worst_case";
    case StrategyKind::in_out: return "in_out";
  }
  return "?";
}

inline std::vector<StrategyKind> all_strategies() {
  return {StrategyKind::standard,  StrategyKind::ood_random, StrategyKind::entropy_al,
          StrategyKind::gap_al,    StrategyKind::entropy_rev, StrategyKind::worst_case,
          StrategyKind::in_out};
}

inline StrategyKind strategy_from_string(const std::string& name) {
  for (StrategyKind s : all_strategies()) {
    if (name == to_string(s)) return s;
  }
  throw Error(ErrorKind::config_error, "unknown strategy: " + name);
}

// Expected wall time to solve a k-bit puzzle: 2^k hashes at t_hash seconds each.
inline double expected_pow_seconds(int bits, double t_hash) {
  return std::ldexp(t_hash, bits);
}

struct BatchRow {
  std::int64_t query_count = 0;  // cumulative queries after this batch
  double batch_cost = 0.0;
  double cumulative_cost = 0.0;
  int bits = 0;
  double expected_pow_seconds = 0.0;
};

struct TraceReport {
  StrategyKind strategy = StrategyKind::standard;
  std::vector<BatchRow> rows;
  double baseline_seconds = 0.0;   // batches x the calibrator's time unit
  double pow_seconds = 0.0;        // sum of expected solve times
  double overhead_factor = 0.0;    // 1 + pow/baseline
  double t_hash = 0.0;
  bool truncated = false;          // the strategy ran out of fresh queries

  Trace cost_trace() const {
    Trace t;
    t.reserve(rows.size());
    for (const BatchRow& r : rows) t.push_back({r.query_count, r.cumulative_cost});
    return t;
  }

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "query_count,batch_cost,cumulative_cost,bits,expected_pow_seconds\n";
    for (const BatchRow& r : rows) {
      out << r.query_count << ',' << r.batch_cost << ',' << r.cumulative_cost << ',' << r.bits
          << ',' << r.expected_pow_seconds << '\n';
    }
    out << "# strategy," << to_string(strategy) << '\n';
    out << "# baseline_seconds," << baseline_seconds << '\n';
    out << "# pow_seconds," << pow_seconds << '\n';
    out << "# overhead_factor," << overhead_factor << '\n';
    out << "# t_hash," << t_hash << '\n';
    out << "# truncated," << (truncated ? 1 : 0) << '\n';
    return out.str();
  }

  static TraceReport from_csv(std::istream& in) {
    TraceReport rep;
    std::string line;
    if (!std::getline(in, line) ||
        trim(line) != "query_count,batch_cost,cumulative_cost,bits,expected_pow_seconds") {
      throw Error(ErrorKind::parse_error, "trace report CSV: bad or missing header");
    }
    int lineno = 1;
    bool saw_strategy = false;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = std::string(trim(line));
      if (t.empty()) continue;
      if (t[0] == '#') {
        const std::string body = std::string(trim(std::string_view(t).substr(1)));
        const auto comma = body.find(',');
        if (comma == std::string::npos) {
          throw Error(ErrorKind::parse_error,
                      "trace report CSV line " + std::to_string(lineno) + ": bad footer");
        }
        const std::string key = body.substr(0, comma);
        const std::string value = body.substr(comma + 1);
        try {
          if (key == "strategy") {
            try {
              rep.strategy = strategy_from_string(value);
            } catch (const Error&) {
              throw Error(ErrorKind::parse_error,
                          "trace report CSV line " + std::to_string(lineno) +
                              ": unknown strategy: " + value);
            }
            saw_strategy = true;
          } else if (key == "baseline_seconds") {
            rep.baseline_seconds = std::stod(value);
          } else if (key == "pow_seconds") {
            rep.pow_seconds = std::stod(value);
          } else if (key == "overhead_factor") {
            rep.overhead_factor = std::stod(value);
          } else if (key == "t_hash") {
            rep.t_hash = std::stod(value);
          } else if (key == "truncated") {
            rep.truncated = std::stoi(value) != 0;
          } else {
            throw Error(ErrorKind::parse_error, "unknown footer key: " + key);
          }
        } catch (const Error&) {
          throw;
        } catch (const std::exception&) {
          throw Error(ErrorKind::parse_error,
                      "trace report CSV line " + std::to_string(lineno) + ": bad footer value");
        }
        continue;
      }
      const auto parts = split(t, ',');
      if (parts.size() != 5) {
        throw Error(ErrorKind::parse_error,
                    "trace report CSV line " + std::to_string(lineno) + ": want 5 fields");
      }
      BatchRow r;
      try {
        r.query_count = std::stoll(std::string(parts[0]));
        r.batch_cost = std::stod(std::string(parts[1]));
        r.cumulative_cost = std::stod(std::string(parts[2]));
        r.bits = std::stoi(std::string(parts[3]));
        r.expected_pow_seconds = std::stod(std::string(parts[4]));
      } catch (const std::exception&) {
        throw Error(ErrorKind::parse_error,
                    "trace report CSV line " + std::to_string(lineno) + ": bad number");
      }
      rep.rows.push_back(r);
    }
    if (!saw_strategy) {
      throw Error(ErrorKind::parse_error, "trace report CSV: missing strategy footer");
    }
    return rep;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io_error, "cannot write " + path);
    out << to_csv();
    if (!out) throw Error(ErrorKind::io_error, "failed writing " + path);
  }

  static TraceReport load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io_error, "cannot read " + path);
    return from_csv(in);
  }
};

// Attacker-side surrogate trained on answered (query, label) pairs: per-class
// running means scored exactly like the deployed centroid model.
class SubstituteModel {
 public:
  SubstituteModel(std::size_t dim, std::size_t class_count)
      : dim_(dim), counts_(class_count, 0), sums_(class_count, std::vector<double>(dim, 0.0)) {}

  void observe(std::span<const double> query, int label) {
    if (query.size() != dim_) throw Error(ErrorKind::rejected_input, "query width mismatch");
    if (label < 0 || static_cast<std::size_t>(label) >= counts_.size()) {
      throw Error(ErrorKind::rejected_input, "label out of range");
    }
    ++counts_[static_cast<std::size_t>(label)];
    auto& sum = sums_[static_cast<std::size_t>(label)];
    for (std::size_t d = 0; d < dim_; ++d) sum[d] += query[d];
  }

  std::size_t classes_seen() const {
    return static_cast<std::size_t>(std::count_if(counts_.begin(), counts_.end(),
                                                  [](std::int64_t c) { return c > 0; }));
  }

  bool ready() const { return classes_seen() >= 2; }

  // Stable softmax over -distance for seen classes; unseen classes get 0.
  std::vector<double> probs(std::span<const double> query) const {
    std::vector<double> scores(counts_.size(), -std::numeric_limits<double>::infinity());
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < counts_.size(); ++c) {
      if (counts_[c] == 0) continue;
      double d2 = 0;
      for (std::size_t d = 0; d < dim_; ++d) {
        const double diff = query[d] - sums_[c][d] / static_cast<double>(counts_[c]);
        d2 += diff * diff;
      }
      scores[c] = -std::sqrt(d2);
      best = std::max(best, scores[c]);
    }
    std::vector<double> p(counts_.size(), 0.0);
    double total = 0;
    for (std::size_t c = 0; c < counts_.size(); ++c) {
      if (counts_[c] == 0) continue;
      p[c] = std::exp(scores[c] - best);
      total += p[c];
    }
    for (double& v : p) v /= total;
    return p;
  }

  double entropy(std::span<const double> query) const {
    if (!ready()) return 0.0;
    double h = 0;
    for (double p : probs(query)) {
      if (p > 0) h -= p * std::log(p);
    }
    return h;
  }

  // Raw gap between the two largest class probabilities (0 when fewer than
  // two classes have been observed).
  double gap(std::span<const double> query) const {
    if (!ready()) return 0.0;
    const std::vector<double> p = probs(query);
    double top1 = 0, top2 = 0;
    for (double v : p) {
      if (v > top1) {
        top2 = top1;
        top1 = v;
      } else if (v > top2) {
        top2 = v;
      }
    }
    return top1 - top2;
  }

 private:
  std::size_t dim_;
  std::vector<std::int64_t> counts_;
  std::vector<std::vector<double>> sums_;
};

struct Pools {
  Matrix ind;  // in-distribution candidates (legit-like traffic)
  Matrix box;  // widened-bounding-box candidates (attack surface)
};

struct SimOptions {
  std::size_t n_queries = 1000;
  std::size_t batch = 10;
  std::uint64_t seed = 1;
  int solve_threshold_bits = 20;  // real solving at or below; analytic above
  double t_hash = 0.0;            // seconds per hash; <= 0 means measure
  double in_out_p = 0.1;          // fraction of in-distribution batches
  std::string user_id = "attacker";
};

namespace detail {

inline std::vector<double> row_copy(const Matrix& m, std::size_t i) {
  const auto s = m.row_span(i);
  return std::vector<double>(s.begin(), s.end());
}

// Strategy-specific query source; feed() reports answered labels back so the
// active-learning strategies can refine their substitute model.
class QuerySource {
 public:
  QuerySource(StrategyKind strategy, const Pools& pools, const Gateway& gw,
              const SimOptions& opts, std::mt19937_64& rng)
      : strategy_(strategy), pools_(pools), rng_(rng),
        substitute_(gw.meter().bundle->dim, gw.meter().bundle->class_count) {
    const std::size_t dim = gw.meter().bundle->dim;
    const bool needs_ind = strategy == StrategyKind::standard ||
                           strategy == StrategyKind::worst_case ||
                           strategy == StrategyKind::in_out;
    const bool needs_box = !(strategy == StrategyKind::standard ||
                             strategy == StrategyKind::worst_case);
    if (needs_ind) {
      if (pools.ind.rows == 0) throw Error(ErrorKind::rejected_input, "empty in-distribution pool");
      if (pools.ind.cols != dim) throw Error(ErrorKind::rejected_input, "in-distribution pool width mismatch");
    }
    if (needs_box) {
      if (pools.box.rows == 0) throw Error(ErrorKind::rejected_input, "empty box pool");
      if (pools.box.cols != dim) throw Error(ErrorKind::rejected_input, "box pool width mismatch");
    }

    if (needs_ind) {
      ind_order_.resize(pools.ind.rows);
      std::iota(ind_order_.begin(), ind_order_.end(), std::size_t{0});
      if (strategy == StrategyKind::worst_case) {
        // The cheapest possible adversary: ask the meter's cheapest queries
        // first. Stable sort keeps ties deterministic.
        std::vector<double> cost(pools.ind.rows);
        for (std::size_t i = 0; i < pools.ind.rows; ++i) {
          cost[i] = gw.meter().per_query_cost(pools.ind.row_span(i));
        }
        std::stable_sort(ind_order_.begin(), ind_order_.end(),
                         [&cost](std::size_t a, std::size_t b) { return cost[a] < cost[b]; });
      } else {
        std::shuffle(ind_order_.begin(), ind_order_.end(), rng_);
      }
    }
    if (strategy == StrategyKind::entropy_al || strategy == StrategyKind::gap_al ||
        strategy == StrategyKind::entropy_rev) {
      candidates_.resize(pools.box.rows);
      std::iota(candidates_.begin(), candidates_.end(), std::size_t{0});
      std::shuffle(candidates_.begin(), candidates_.end(), rng_);
    }
    if (strategy == StrategyKind::in_out) {
      period_ = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(1.0 / opts.in_out_p)));
    }
  }

  // Up to `want` fresh queries; fewer (or none) when a without-replacement
  // pool runs dry, which the caller reports as a truncated run.
  std::vector<std::vector<double>> next_batch(std::size_t want, std::size_t batch_index) {
    switch (strategy_) {
      case StrategyKind::standard:
      case StrategyKind::worst_case:
        return take_ind(want);
      case StrategyKind::ood_random:
        return sample_box(want);
      case StrategyKind::in_out:
        if (batch_index % period_ == period_ - 1) return take_ind(want);
        return sample_box(want);
      case StrategyKind::entropy_al:
      case StrategyKind::gap_al:
      case StrategyKind::entropy_rev:
        return take_scored(want);
    }
    return {};
  }

  void feed(const std::vector<std::vector<double>>& batch, const std::vector<int>& labels) {
    if (strategy_ != StrategyKind::entropy_al && strategy_ != StrategyKind::gap_al &&
        strategy_ != StrategyKind::entropy_rev) {
      return;
    }
    for (std::size_t i = 0; i < batch.size(); ++i) substitute_.observe(batch[i], labels[i]);
  }

  bool wants_labels() const {
    return strategy_ == StrategyKind::entropy_al || strategy_ == StrategyKind::gap_al ||
           strategy_ == StrategyKind::entropy_rev;
  }

  const SubstituteModel& substitute() const { return substitute_; }

 private:
  std::vector<std::vector<double>> take_ind(std::size_t want) {
    std::vector<std::vector<double>> out;
    while (out.size() < want && ind_cursor_ < ind_order_.size()) {
      out.push_back(row_copy(pools_.ind, ind_order_[ind_cursor_++]));
    }
    return out;
  }

  std::vector<std::vector<double>> sample_box(std::size_t want) {
    std::uniform_int_distribution<std::size_t> pick(0, pools_.box.rows - 1);
    std::vector<std::vector<double>> out;
    out.reserve(want);
    for (std::size_t i = 0; i < want; ++i) out.push_back(row_copy(pools_.box, pick(rng_)));
    return out;
  }

  std::vector<std::vector<double>> take_scored(std::size_t want) {
    std::vector<std::vector<double>> out;
    if (candidates_.empty()) return out;
    if (!substitute_.ready()) {
      // Cold start: the pre-shuffled order serves as a random first batch.
      const std::size_t n = std::min(want, candidates_.size());
      for (std::size_t i = 0; i < n; ++i) out.push_back(row_copy(pools_.box, candidates_[i]));
      candidates_.erase(candidates_.begin(), candidates_.begin() + static_cast<std::ptrdiff_t>(n));
      return out;
    }
    std::vector<std::pair<double, std::size_t>> scored;  // (score, position)
    scored.reserve(candidates_.size());
    for (std::size_t pos = 0; pos < candidates_.size(); ++pos) {
      const auto row = pools_.box.row_span(candidates_[pos]);
      double score = 0;
      switch (strategy_) {
        case StrategyKind::entropy_al: score = -substitute_.entropy(row); break;  // max entropy
        case StrategyKind::entropy_rev: score = substitute_.entropy(row); break;  // min entropy
        case StrategyKind::gap_al: score = substitute_.gap(row); break;           // min gap
        default: break;
      }
      scored.emplace_back(score, pos);
    }
    const std::size_t n = std::min(want, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n),
                      scored.end());
    std::vector<std::size_t> chosen;
    chosen.reserve(n);
    for (std::size_t i = 0; i < n; ++i) chosen.push_back(scored[i].second);
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t pos : chosen) out.push_back(row_copy(pools_.box, candidates_[pos]));
    for (auto it = chosen.rbegin(); it != chosen.rend(); ++it) {
      candidates_.erase(candidates_.begin() + static_cast<std::ptrdiff_t>(*it));
    }
    return out;
  }

  StrategyKind strategy_;
  const Pools& pools_;
  std::mt19937_64& rng_;
  SubstituteModel substitute_;
  std::vector<std::size_t> ind_order_;
  std::size_t ind_cursor_ = 0;
  std::vector<std::size_t> candidates_;
  std::size_t period_ = 10;
};

}  // namespace detail

inline TraceReport simulate(Gateway& gw, StrategyKind strategy, const Pools& pools,
                            const SimOptions& opts) {
  if (opts.n_queries == 0) throw Error(ErrorKind::rejected_input, "n_queries must be >= 1");
  if (opts.batch == 0) throw Error(ErrorKind::rejected_input, "batch must be >= 1");
  if (!(opts.in_out_p > 0.0 && opts.in_out_p <= 1.0)) {
    throw Error(ErrorKind::rejected_input, "in_out_p must be in (0, 1]");
  }

  std::mt19937_64 rng(opts.seed);
  detail::QuerySource source(strategy, pools, gw, opts, rng);
  const DigestFn digest = make_digest(gw.options().hash_alg);
  const double t_hash = opts.t_hash > 0 ? opts.t_hash : measure_hash_seconds(digest, 200'000);

  TraceReport report;
  report.strategy = strategy;
  report.t_hash = t_hash;

  std::size_t issued = 0;
  double prev_cum = gw.ledger(opts.user_id).cumulative_cost;
  for (std::size_t batch_index = 0; issued < opts.n_queries; ++batch_index) {
    const std::size_t want = std::min(opts.batch, opts.n_queries - issued);
    const auto batch = source.next_batch(want, batch_index);
    if (batch.empty()) {
      report.truncated = true;
      break;
    }
    if (batch.size() < want) report.truncated = true;

    const PuzzleOffer offer = gw.handle_query(opts.user_id, batch);
    issued += batch.size();
    const UserLedger ledger = gw.ledger(opts.user_id);

    BatchRow row;
    row.query_count = ledger.query_count;
    row.batch_cost = ledger.cumulative_cost - prev_cum;
    row.cumulative_cost = ledger.cumulative_cost;
    row.bits = offer.bits;
    row.expected_pow_seconds = expected_pow_seconds(offer.bits, t_hash);
    report.rows.push_back(row);
    prev_cum = ledger.cumulative_cost;

    if (offer.bits <= opts.solve_threshold_bits) {
      // Cheap enough to actually grind through the protocol.
      const Challenge challenge = Challenge::parse(offer.challenge);
      const SolveResult solved = solve(challenge, digest);
      const Predictions pred = gw.handle_solution(offer.puzzle_id, solved.solution.counter);
      source.feed(batch, pred.labels);
    } else if (source.wants_labels()) {
      // Too expensive to solve inside a simulation: the offer is abandoned
      // (its cost is already on the ledger) and the answers the attacker
      // would eventually have received come straight from the victim.
      std::vector<int> labels;
      labels.reserve(batch.size());
      for (const auto& q : batch) {
        const ProbVector p = gw.options().victim(q);
        labels.push_back(static_cast<int>(
            std::max_element(p.probs.begin(), p.probs.end()) - p.probs.begin()));
      }
      source.feed(batch, labels);
    }
  }

  report.baseline_seconds =
      static_cast<double>(report.rows.size()) * gw.calibrator().time_unit_seconds;
  CompensatedSum pow;
  for (const BatchRow& r : report.rows) pow.add(r.expected_pow_seconds);
  report.pow_seconds = pow.value();
  report.overhead_factor =
      report.baseline_seconds > 0 ? 1.0 + report.pow_seconds / report.baseline_seconds : 0.0;
  return report;
}

// --- SVG overlay plots ------------------------------------------------------

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fmt_tick(double v) {
  std::ostringstream out;
  out.precision(3);
  out << v;
  return out.str();
}

}  // namespace detail

// Writes an overlaid line plot of the given series. Intended for trace
// comparisons (cumulative cost or bits versus query count).
inline void write_overlay_svg(const std::string& path, const std::string& title,
                              const std::string& x_label, const std::string& y_label,
                              const std::vector<Series>& series) {
  if (series.empty()) throw Error(ErrorKind::rejected_input, "no series to plot");
  for (const Series& s : series) {
    if (s.points.empty()) {
      throw Error(ErrorKind::rejected_input, "series '" + s.name + "' has no points");
    }
  }
  double xmin = series[0].points[0].first, xmax = xmin;
  double ymin = series[0].points[0].second, ymax = ymin;
  for (const Series& s : series) {
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (xmax == xmin) {
    xmin -= 1;
    xmax += 1;
  }
  const double ypad = (ymax == ymin) ? std::max(1.0, std::abs(ymax)) * 0.05
                                     : (ymax - ymin) * 0.05;
  ymin -= ypad;
  ymax += ypad;

  constexpr double W = 960, H = 540, ml = 80, mr = 170, mt = 50, mb = 60;
  const auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
  const auto sy = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf"};
  constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

  std::ostringstream svg;
  svg.precision(10);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << W << ' ' << H
      << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
  svg << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"17\">"
      << detail::svg_escape(title) << "</text>\n";

  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0;
    const double fy = ymin + (ymax - ymin) * i / 4.0;
    svg << "<line x1=\"" << sx(fx) << "\" y1=\"" << (H - mb) << "\" x2=\"" << sx(fx) << "\" y2=\""
        << mt << "\" stroke=\"#e0e0e0\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << sy(fy) << "\" x2=\"" << (W - mr) << "\" y2=\""
        << sy(fy) << "\" stroke=\"#e0e0e0\"/>\n";
    svg << "<text x=\"" << sx(fx) << "\" y=\"" << (H - mb + 18)
        << "\" text-anchor=\"middle\">" << detail::fmt_tick(fx) << "</text>\n";
    svg << "<text x=\"" << (ml - 8) << "\" y=\"" << (sy(fy) + 4)
        << "\" text-anchor=\"end\">" << detail::fmt_tick(fy) << "</text>\n";
  }
  svg << "<line x1=\"" << ml << "\" y1=\"" << (H - mb) << "\" x2=\"" << (W - mr) << "\" y2=\""
      << (H - mb) << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << (H - mb) << "\" x2=\"" << ml << "\" y2=\"" << mt
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << (ml + (W - ml - mr) / 2) << "\" y=\"" << (H - 16)
      << "\" text-anchor=\"middle\">" << detail::svg_escape(x_label) << "</text>\n";
  svg << "<text x=\"22\" y=\"" << (mt + (H - mt - mb) / 2)
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 22 " << (mt + (H - mt - mb) / 2)
      << ")\">" << detail::svg_escape(y_label) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % kPaletteSize];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
    for (const auto& [x, y] : series[i].points) svg << sx(x) << ',' << sy(y) << ' ';
    svg << "\"/>\n";
    const double ly = mt + 20 + 22 * static_cast<double>(i);
    svg << "<line x1=\"" << (W - mr + 12) << "\" y1=\"" << ly << "\" x2=\"" << (W - mr + 40)
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"3\"/>\n";
    svg << "<text x=\"" << (W - mr + 46) << "\" y=\"" << (ly + 4) << "\">"
        << detail::svg_escape(series[i].name) << "</text>\n";
  }
  svg << "</svg>\n";

  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io_error, "cannot write " + path);
  out << svg.str();
  if (!out) throw Error(ErrorKind::io_error, "failed writing " + path);
}

}  // namespace powgate
