#pragma once

// Shared test fixtures and independent oracles. The oracles deliberately
// re-derive results through a different code path than the library (long
// double accumulation, full sorts, direct formulas) so agreement is evidence,
// not tautology.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "powgate/hashcash.hpp"

namespace testutil {

// Digest wrapper that counts invocations (for "verify is one hash" checks).
inline powgate::DigestFn counting_digest(powgate::DigestFn inner, std::uint64_t* counter) {
  return [inner = std::move(inner), counter](std::string_view data) {
    ++*counter;
    return inner(data);
  };
}

class TempDir {
 public:
  TempDir() {
    auto base = std::filesystem::temp_directory_path();
    std::mt19937_64 rng(std::random_device{}());
    path_ = base / ("powgate_test_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::filesystem::path path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

// Closed-form OLS in long double; independent of the library's fit.
struct OlsOracle {
  long double slope = 0, intercept = 0;
};

inline OlsOracle ols_oracle(std::span<const double> x, std::span<const double> y) {
  long double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const long double n = static_cast<long double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    sxy += static_cast<long double>(x[i]) * y[i];
  }
  const long double denom = n * sxx - sx * sx;
  OlsOracle o;
  o.slope = (n * sxy - sx * sy) / denom;
  o.intercept = (sy - o.slope * sx) / n;
  return o;
}

// Brute-force k-nearest-neighbour vote histogram: full sort by (distance,
// index), count the ground-truth labels of the first k rows.
inline std::vector<std::int64_t> knn_oracle(std::span<const double> query,
                                            const std::vector<std::vector<double>>& rows,
                                            const std::vector<int>& labels, int k,
                                            int class_count) {
  std::vector<std::pair<long double, std::size_t>> dist;
  dist.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    long double d = 0;
    for (std::size_t j = 0; j < query.size(); ++j) {
      const long double diff = rows[i][j] - query[j];
      d += diff * diff;
    }
    dist.emplace_back(d, i);
  }
  std::sort(dist.begin(), dist.end());
  std::vector<std::int64_t> counts(class_count, 0);
  for (int i = 0; i < k; ++i) counts[labels[dist[i].second]]++;
  return counts;
}

// Brute-force teacher vote histogram: recompute every centroid directly from
// the training rows of the partition, then nearest-present-centroid per
// teacher (ties to the smallest class index).
inline std::vector<std::int64_t> votes_oracle(std::span<const double> query,
                                              const std::vector<std::vector<double>>& rows,
                                              const std::vector<int>& labels,
                                              const std::vector<std::vector<std::uint32_t>>& parts,
                                              int class_count) {
  std::vector<std::int64_t> hist(class_count, 0);
  const std::size_t dim = query.size();
  for (const auto& part : parts) {
    std::vector<std::vector<long double>> sums(class_count, std::vector<long double>(dim, 0));
    std::vector<int> counts(class_count, 0);
    for (auto idx : part) {
      counts[labels[idx]]++;
      for (std::size_t j = 0; j < dim; ++j) sums[labels[idx]][j] += rows[idx][j];
    }
    int best = -1;
    long double best_d = 0;
    for (int c = 0; c < class_count; ++c) {
      if (counts[c] == 0) continue;
      long double d = 0;
      for (std::size_t j = 0; j < dim; ++j) {
        const long double diff = sums[c][j] / counts[c] - query[j];
        d += diff * diff;
      }
      if (best < 0 || d < best_d) {
        best = c;
        best_d = d;
      }
    }
    hist[best]++;
  }
  return hist;
}

}  // namespace testutil
