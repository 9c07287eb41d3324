#pragma once

// Dataset plumbing: CSV load/save, synthetic Gaussian-blob generation, and
// the seeded disjoint partitioning used to train teacher ensembles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "powgate/errors.hpp"
#include "powgate/util.hpp"

namespace powgate {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  std::span<const double> row_span(std::size_t r) const { return {row(r), cols}; }
};

struct Dataset {
  Matrix features;
  std::vector<int> labels;
  int class_count = 0;

  std::size_t size() const { return features.rows; }
  std::size_t dim() const { return features.cols; }

  void validate() const {
    if (features.rows != labels.size()) {
      throw Error(ErrorKind::rejected_input, "feature/label row mismatch");
    }
    if (class_count < 1) throw Error(ErrorKind::rejected_input, "class_count must be >= 1");
    if (features.rows < static_cast<std::size_t>(class_count)) {
      throw Error(ErrorKind::rejected_input, "need at least one row per class");
    }
    for (int l : labels) {
      if (l < 0 || l >= class_count) throw Error(ErrorKind::rejected_input, "label out of range");
    }
    for (double v : features.data) {
      if (!std::isfinite(v)) throw Error(ErrorKind::rejected_input, "non-finite feature");
    }
  }
};

// CSV layout: header row, then D feature columns followed by one integer
// label column. `expected_class_count` 0 means infer C = max(label) + 1.
inline Dataset load_dataset(const std::string& path, int expected_class_count = 0) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io_error, "cannot read " + path);
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) {
    throw Error(ErrorKind::parse_error, path + ": empty file or missing header");
  }
  const std::size_t n_cols = split(trim(line), ',').size();
  if (n_cols < 2) {
    throw Error(ErrorKind::parse_error, path + ": header needs >= 1 feature column plus a label");
  }
  const std::size_t dim = n_cols - 1;

  Dataset ds;
  ds.features.cols = dim;
  int lineno = 1;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view body = trim(line);
    if (body.empty()) continue;
    const auto cells = split(body, ',');
    const std::string where = path + " line " + std::to_string(lineno);
    if (cells.size() != n_cols) {
      throw Error(ErrorKind::parse_error,
                  where + ": expected " + std::to_string(n_cols) + " fields, got " +
                      std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < dim; ++c) {
      double v = 0;
      try {
        std::size_t used = 0;
        v = std::stod(std::string(trim(cells[c])), &used);
        if (used != trim(cells[c]).size()) throw std::invalid_argument("trailing junk");
      } catch (const std::exception&) {
        throw Error(ErrorKind::parse_error, where + ": non-numeric feature in column " +
                                                std::to_string(c));
      }
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::parse_error, where + ": non-finite feature in column " +
                                                std::to_string(c));
      }
      ds.features.data.push_back(v);
    }
    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(std::string(trim(cells[dim])), &used);
      if (used != trim(cells[dim]).size()) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
      throw Error(ErrorKind::parse_error, where + ": non-integer label");
    }
    if (label < 0) throw Error(ErrorKind::parse_error, where + ": negative label");
    if (expected_class_count > 0 && label >= expected_class_count) {
      throw Error(ErrorKind::parse_error,
                  where + ": label " + std::to_string(label) + " >= class_count " +
                      std::to_string(expected_class_count));
    }
    max_label = std::max(max_label, label);
    ds.labels.push_back(label);
    ++ds.features.rows;
  }
  if (ds.features.rows == 0) {
    throw Error(ErrorKind::parse_error, path + ": no data rows");
  }
  ds.class_count = expected_class_count > 0 ? expected_class_count : max_label + 1;
  ds.validate();
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io_error, "cannot write " + path);
  out.precision(17);
  for (std::size_t c = 0; c < ds.dim(); ++c) out << 'f' << c << ',';
  out << "label\n";
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const double* row = ds.features.row(r);
    for (std::size_t c = 0; c < ds.dim(); ++c) out << row[c] << ',';
    out << ds.labels[r] << '\n';
  }
}

struct BlobConfig {
  int classes = 2;
  int dim = 16;
  double mu = 6.0;          // distance of each class mean from the origin
  double sigma_data = 1.0;  // isotropic within-class standard deviation
  int n_train = 600;
  std::uint64_t seed = 0;
};

// Class mean layout: 2 classes sit at ±mu on axis 0; otherwise class c sits
// at +mu on axis (c mod D).
inline std::vector<double> blob_mean(const BlobConfig& cfg, int cls) {
  std::vector<double> mean(static_cast<std::size_t>(cfg.dim), 0.0);
  if (cfg.classes == 2) {
    mean[0] = (cls == 0) ? -cfg.mu : cfg.mu;
  } else {
    mean[static_cast<std::size_t>(cls % cfg.dim)] = cfg.mu;
  }
  return mean;
}

inline Dataset make_blobs(const BlobConfig& cfg) {
  if (cfg.classes < 2) throw Error(ErrorKind::rejected_input, "need >= 2 classes");
  if (cfg.dim < 1) throw Error(ErrorKind::rejected_input, "need >= 1 dimension");
  if (cfg.n_train < cfg.classes) throw Error(ErrorKind::rejected_input, "need >= 1 row per class");
  if (!(cfg.sigma_data > 0) || !(cfg.mu >= 0)) {
    throw Error(ErrorKind::rejected_input, "bad blob scale parameters");
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> pick_class(0, cfg.classes - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<std::vector<double>> means;
  means.reserve(static_cast<std::size_t>(cfg.classes));
  for (int c = 0; c < cfg.classes; ++c) means.push_back(blob_mean(cfg, c));

  Dataset ds;
  ds.class_count = cfg.classes;
  ds.features.cols = static_cast<std::size_t>(cfg.dim);
  ds.features.rows = static_cast<std::size_t>(cfg.n_train);
  ds.features.data.resize(ds.features.rows * ds.features.cols);
  ds.labels.resize(ds.features.rows);
  for (std::size_t r = 0; r < ds.features.rows; ++r) {
    const int cls = pick_class(rng);
    ds.labels[r] = cls;
    double* row = ds.features.row(r);
    for (std::size_t c = 0; c < ds.features.cols; ++c) {
      row[c] = means[static_cast<std::size_t>(cls)][c] + cfg.sigma_data * gauss(rng);
    }
  }
  return ds;
}

// Seeded permutation cut into n_teachers contiguous chunks; the first
// N mod n chunks take the extra row.
inline std::vector<std::vector<std::size_t>> partition(std::size_t n, std::size_t n_teachers,
                                                       std::uint64_t seed) {
  if (n_teachers == 0) throw Error(ErrorKind::rejected_input, "need >= 1 teacher");
  if (n_teachers > n) throw Error(ErrorKind::rejected_input, "more teachers than rows");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<std::vector<std::size_t>> parts(n_teachers);
  const std::size_t base = n / n_teachers;
  const std::size_t extra = n % n_teachers;
  std::size_t next = 0;
  for (std::size_t t = 0; t < n_teachers; ++t) {
    const std::size_t take = base + (t < extra ? 1 : 0);
    parts[t].assign(perm.begin() + static_cast<std::ptrdiff_t>(next),
                    perm.begin() + static_cast<std::ptrdiff_t>(next + take));
    next += take;
  }
  return parts;
}

struct FeatureRange {
  std::vector<double> lo;
  std::vector<double> hi;
};

inline FeatureRange feature_range(const Dataset& ds) {
  FeatureRange r;
  r.lo.assign(ds.dim(), std::numeric_limits<double>::infinity());
  r.hi.assign(ds.dim(), -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double* row = ds.features.row(i);
    for (std::size_t c = 0; c < ds.dim(); ++c) {
      r.lo[c] = std::min(r.lo[c], row[c]);
      r.hi[c] = std::max(r.hi[c], row[c]);
    }
  }
  return r;
}

// Uniform random queries over the scale-widened global feature box of a
// training set.  The box is scalar: one [lo, hi] over every feature value,
// widened around its center by `scale`.  Used to probe a model far outside
// the data distribution.
inline Matrix make_box_pool(const Dataset& train, std::size_t m, std::uint64_t seed,
                            double scale = 3.0) {
  if (train.size() == 0 || train.dim() == 0) {
    throw Error(ErrorKind::rejected_input, "make_box_pool: empty training set");
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorKind::rejected_input, "make_box_pool: scale must be positive and finite");
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : train.features.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double center = (lo + hi) / 2, half = (hi - lo) / 2, span = half * scale;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(center - span, center + span);
  Matrix q;
  q.rows = m;
  q.cols = train.dim();
  q.data.resize(m * q.cols);
  for (auto& v : q.data) v = u(rng);
  return q;
}

}  // namespace powgate
