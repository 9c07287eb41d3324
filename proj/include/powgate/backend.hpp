#pragma once

// Prediction backends: a nearest-centroid victim with softmax probabilities,
// a teacher ensemble producing vote histograms, a table-backed variant that
// replays recorded histograms, and the per-query cost meter that ties the
// accountant metrics to a backend.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "powgate/dataset.hpp"
#include "powgate/errors.hpp"
#include "powgate/privacy.hpp"

namespace powgate {

struct CentroidModel {
  Matrix centroids;  // C x D
  std::vector<bool> class_present;

  static CentroidModel train(const Dataset& ds, std::span<const std::size_t> indices) {
    if (indices.empty()) throw Error(ErrorKind::rejected_input, "empty training partition");
    CentroidModel m;
    const std::size_t c_count = static_cast<std::size_t>(ds.class_count);
    m.centroids.rows = c_count;
    m.centroids.cols = ds.dim();
    m.centroids.data.assign(c_count * ds.dim(), 0.0);
    m.class_present.assign(c_count, false);
    std::vector<std::size_t> rows_per_class(c_count, 0);
    for (std::size_t i : indices) {
      if (i >= ds.size()) throw Error(ErrorKind::rejected_input, "partition index out of range");
      const std::size_t cls = static_cast<std::size_t>(ds.labels[i]);
      ++rows_per_class[cls];
      const double* row = ds.features.row(i);
      double* cent = m.centroids.row(cls);
      for (std::size_t c = 0; c < ds.dim(); ++c) cent[c] += row[c];
    }
    for (std::size_t cls = 0; cls < c_count; ++cls) {
      if (rows_per_class[cls] == 0) continue;
      m.class_present[cls] = true;
      double* cent = m.centroids.row(cls);
      for (std::size_t c = 0; c < ds.dim(); ++c) cent[c] /= static_cast<double>(rows_per_class[cls]);
    }
    return m;
  }

  std::size_t dim() const { return centroids.cols; }
  std::size_t class_count() const { return centroids.rows; }

  double squared_distance(std::span<const double> query, std::size_t cls) const {
    const double* cent = centroids.row(cls);
    double acc = 0.0;
    for (std::size_t c = 0; c < query.size(); ++c) {
      const double d = query[c] - cent[c];
      acc += d * d;
    }
    return acc;
  }

  // Nearest present centroid; exact distance ties go to the smaller class.
  int vote(std::span<const double> query) const {
    if (query.size() != dim()) throw Error(ErrorKind::rejected_input, "query width mismatch");
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t cls = 0; cls < class_count(); ++cls) {
      if (!class_present[cls]) continue;
      const double d = squared_distance(query, cls);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(cls);
      }
    }
    if (best < 0) throw Error(ErrorKind::internal_bug, "model with no present class");
    return best;
  }

  // Softmax over negative Euclidean distances of present classes (unit
  // temperature); absent classes get probability 0.
  ProbVector softmax_probs(std::span<const double> query) const {
    if (query.size() != dim()) throw Error(ErrorKind::rejected_input, "query width mismatch");
    std::vector<double> neg_dist(class_count(), -std::numeric_limits<double>::infinity());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t cls = 0; cls < class_count(); ++cls) {
      if (!class_present[cls]) continue;
      neg_dist[cls] = -std::sqrt(squared_distance(query, cls));
      top = std::max(top, neg_dist[cls]);
    }
    ProbVector p;
    p.probs.assign(class_count(), 0.0);
    CompensatedSum z;
    for (std::size_t cls = 0; cls < class_count(); ++cls) {
      if (!class_present[cls]) continue;
      p.probs[cls] = std::exp(neg_dist[cls] - top);
      z.add(p.probs[cls]);
    }
    for (auto& v : p.probs) v /= z.value();
    return p;
  }
};

enum class BackendMode { model, table };

struct BackendBundle {
  BackendMode mode = BackendMode::model;
  std::size_t dim = 0;
  int class_count = 0;
  std::vector<CentroidModel> teachers;
  CentroidModel victim_model;
  std::function<std::vector<double>(std::span<const double>)> embedder;  // identity by default
  std::shared_ptr<const Dataset> train;  // kept for pkNN distance queries
  std::map<std::int64_t, VoteHistogram> table;
};

inline BackendBundle make_backend(const Dataset& ds, std::size_t n_teachers,
                                  std::uint64_t partition_seed) {
  ds.validate();
  BackendBundle b;
  b.mode = BackendMode::model;
  b.dim = ds.dim();
  b.class_count = ds.class_count;
  const auto parts = partition(ds.size(), n_teachers, partition_seed);
  b.teachers.reserve(parts.size());
  for (const auto& part : parts) b.teachers.push_back(CentroidModel::train(ds, part));
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  b.victim_model = CentroidModel::train(ds, all);
  b.embedder = [](std::span<const double> q) { return std::vector<double>(q.begin(), q.end()); };
  b.train = std::make_shared<Dataset>(ds);
  return b;
}

// Table backend CSV: header `query_id,count_0,...,count_{C-1}`; queries are
// one-dimensional [query_id] vectors replayed against recorded histograms.
inline BackendBundle make_table_backend(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io_error, "cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::parse_error, path + ": empty table");
  const auto header = split(trim(line), ',');
  if (header.size() < 2 || trim(header[0]) != "query_id") {
    throw Error(ErrorKind::parse_error, path + ": bad table header");
  }
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string want = "count_" + std::to_string(c - 1);
    if (trim(header[c]) != want) {
      throw Error(ErrorKind::parse_error, path + ": expected column " + want);
    }
  }
  const int class_count = static_cast<int>(header.size()) - 1;

  BackendBundle b;
  b.mode = BackendMode::table;
  b.dim = 1;
  b.class_count = class_count;
  int lineno = 1;
  std::int64_t n_teachers = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    const std::string where = path + " line " + std::to_string(lineno);
    if (cells.size() != header.size()) {
      throw Error(ErrorKind::parse_error, where + ": wrong field count");
    }
    std::int64_t id = 0;
    std::vector<std::int64_t> counts(static_cast<std::size_t>(class_count), 0);
    try {
      id = std::stoll(std::string(trim(cells[0])));
      for (int c = 0; c < class_count; ++c) {
        const long long v = std::stoll(std::string(trim(cells[static_cast<std::size_t>(c) + 1])));
        if (v < 0) throw std::invalid_argument("negative count");
        counts[static_cast<std::size_t>(c)] = v;
      }
    } catch (const std::exception&) {
      throw Error(ErrorKind::parse_error, where + ": bad numeric field");
    }
    if (b.table.count(id)) throw Error(ErrorKind::parse_error, where + ": duplicate query_id");
    const VoteHistogram h = VoteHistogram::from_counts(counts);
    if (n_teachers == 0) {
      n_teachers = h.n_teachers;
    } else if (h.n_teachers != n_teachers) {
      throw Error(ErrorKind::parse_error, where + ": inconsistent teacher total");
    }
    b.table.emplace(id, h);
  }
  if (b.table.empty()) throw Error(ErrorKind::parse_error, path + ": no table rows");
  return b;
}

inline const VoteHistogram& table_lookup(const BackendBundle& b, std::span<const double> query) {
  if (query.size() != 1) throw Error(ErrorKind::rejected_input, "table queries are [query_id]");
  const double raw = query[0];
  const std::int64_t id = static_cast<std::int64_t>(std::llround(raw));
  if (std::abs(raw - static_cast<double>(id)) > 1e-9) {
    throw Error(ErrorKind::rejected_input, "query_id must be an integer");
  }
  const auto it = b.table.find(id);
  if (it == b.table.end()) {
    throw Error(ErrorKind::rejected_input, "unknown query_id " + std::to_string(id));
  }
  return it->second;
}

inline VoteHistogram teacher_votes(const BackendBundle& b, std::span<const double> query) {
  if (b.mode == BackendMode::table) return table_lookup(b, query);
  if (query.size() != b.dim) throw Error(ErrorKind::rejected_input, "query width mismatch");
  std::vector<std::int64_t> counts(static_cast<std::size_t>(b.class_count), 0);
  for (const auto& t : b.teachers) ++counts[static_cast<std::size_t>(t.vote(query))];
  return VoteHistogram::from_counts(counts);
}

inline ProbVector victim_predict(const BackendBundle& b, std::span<const double> query) {
  if (b.mode == BackendMode::table) {
    const VoteHistogram& h = table_lookup(b, query);
    ProbVector p;
    p.probs.resize(h.counts.size());
    for (std::size_t c = 0; c < h.counts.size(); ++c) {
      p.probs[c] = static_cast<double>(h.counts[c]) / static_cast<double>(h.n_teachers);
    }
    return p;
  }
  return b.victim_model.softmax_probs(query);
}

// Maps one query to its privacy cost under the configured metric.
struct CostMeter {
  AccountantConfig cfg;
  const BackendBundle* bundle = nullptr;
  int pknn_k = 5;

  double per_query_cost(std::span<const double> query) const {
    switch (cfg.metric_kind) {
      case MetricKind::pate_q:
        return consensus_cost(teacher_votes(*bundle, query), cfg.sigma);
      case MetricKind::rdp:
        return gaussian_rdp(cfg).epsilon;
      case MetricKind::entropy:
        return entropy_cost(victim_predict(*bundle, query));
      case MetricKind::gap:
        return gap_cost(victim_predict(*bundle, query));
      case MetricKind::pknn_q: {
        if (bundle->mode != BackendMode::model || !bundle->train) {
          throw Error(ErrorKind::config_error, "pknn metric needs a model backend");
        }
        const auto emb = bundle->embedder(query);
        const VoteHistogram h =
            pknn_histogram(emb, bundle->train->features.data, bundle->train->features.cols,
                           bundle->train->labels, pknn_k,
                           static_cast<std::size_t>(bundle->class_count));
        return consensus_cost(h, cfg.sigma);
      }
    }
    throw Error(ErrorKind::internal_bug, "unhandled metric kind");
  }
};

}  // namespace powgate
