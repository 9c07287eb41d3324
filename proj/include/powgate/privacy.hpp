#pragma once

// Per-query information-leakage metrics: PATE consensus probability from
// teacher vote histograms, Gaussian-mechanism RDP with additive composition,
// noisy argmax release, pkNN voting, and the entropy/gap alternatives.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "powgate/errors.hpp"
#include "powgate/util.hpp"

namespace powgate {

enum class MetricKind { pate_q, rdp, entropy, gap, pknn_q };

inline MetricKind parse_metric_kind(std::string_view s) {
  if (s == "pate_q") return MetricKind::pate_q;
  if (s == "rdp") return MetricKind::rdp;
  if (s == "entropy") return MetricKind::entropy;
  if (s == "gap") return MetricKind::gap;
  if (s == "pknn_q") return MetricKind::pknn_q;
  throw Error(ErrorKind::config_error,
              "unknown metric_kind '" + std::string(s) + "' (expected pate_q|rdp|entropy|gap|pknn_q)");
}

inline const char* to_string(MetricKind k) {
  switch (k) {
    case MetricKind::pate_q: return "pate_q";
    case MetricKind::rdp: return "rdp";
    case MetricKind::entropy: return "entropy";
    case MetricKind::gap: return "gap";
    case MetricKind::pknn_q: return "pknn_q";
  }
  return "unknown";
}

// Teacher vote counts n_i, one entry per class.
struct VoteHistogram {
  std::vector<std::int64_t> counts;
  std::int64_t n_teachers = 0;

  static VoteHistogram from_counts(std::vector<std::int64_t> counts) {
    VoteHistogram h;
    h.counts = std::move(counts);
    h.n_teachers = 0;
    for (auto c : h.counts) h.n_teachers += c;
    h.validate();
    return h;
  }

  void validate() const {
    if (counts.size() < 2) throw Error(ErrorKind::rejected_input, "histogram needs >= 2 classes");
    std::int64_t total = 0;
    for (auto c : counts) {
      if (c < 0) throw Error(ErrorKind::rejected_input, "negative vote count");
      total += c;
    }
    if (total != n_teachers || n_teachers <= 0) {
      throw Error(ErrorKind::rejected_input, "vote counts must sum to n_teachers > 0");
    }
  }

  // Smallest index attaining the maximum (the tie rule used everywhere).
  std::size_t argmax() const {
    return static_cast<std::size_t>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
};

struct ProbVector {
  std::vector<double> probs;

  void validate() const {
    double total = 0;
    for (double p : probs) {
      if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::rejected_input, "probability outside [0,1]");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-6) {
      throw Error(ErrorKind::rejected_input, "probabilities must sum to 1 within 1e-6");
    }
  }
};

struct RdpCost {
  double lambda = 2.0;
  double epsilon = 0.0;
};

struct AccountantConfig {
  double sigma = 2.0;      // PATE aggregation noise
  double sigma_g = 0.0;    // noisy-argmax release noise
  double lambda = 2.0;     // RDP order
  double delta2_sq = 2.0;  // squared l2 sensitivity of the vote histogram
  MetricKind metric_kind = MetricKind::pate_q;

  void validate() const {
    if (!(sigma > 0)) throw Error(ErrorKind::config_error, "sigma must be > 0");
    if (!(sigma_g >= 0)) throw Error(ErrorKind::config_error, "sigma_g must be >= 0");
    if (!(lambda > 1)) throw Error(ErrorKind::config_error, "lambda must be > 1");
    if (!(delta2_sq > 0)) throw Error(ErrorKind::config_error, "delta2_sq must be > 0");
  }
};

// Probability that Gaussian noise of scale sigma flips the plurality vote:
// q = 1/2 * sum_{i != i*} erfc((n_{i*} - n_i) / (2 sigma)), i* = argmax.
// Low when teachers agree, approaching (C-1)/2 for flat histograms.
inline double consensus_cost(const VoteHistogram& hist, double sigma) {
  hist.validate();
  if (!(sigma > 0)) throw Error(ErrorKind::rejected_input, "sigma must be > 0");
  const std::size_t star = hist.argmax();
  const double top = static_cast<double>(hist.counts[star]);
  CompensatedSum q;
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    if (i == star) continue;
    q.add(std::erfc((top - static_cast<double>(hist.counts[i])) / (2.0 * sigma)));
  }
  return 0.5 * q.value();
}

// Data-independent per-query RDP of the Gaussian mechanism:
// epsilon(lambda) = lambda * delta2_sq / (2 sigma^2).
inline RdpCost gaussian_rdp(const AccountantConfig& cfg) {
  cfg.validate();
  return {cfg.lambda, cfg.lambda * cfg.delta2_sq / (2.0 * cfg.sigma * cfg.sigma)};
}

// Additive composition across queries. Applies identically to RDP epsilons
// and to cumulative q/entropy/gap totals. Compensated so that any permutation
// of the same costs lands within 1e-12.
inline double compose(std::span<const double> costs) {
  for (double c : costs) {
    if (!(c >= 0)) throw Error(ErrorKind::rejected_input, "costs must be >= 0");
  }
  return compensated_total(costs);
}

// Shannon entropy in nats; 0*log 0 == 0.
inline double entropy_cost(const ProbVector& p) {
  p.validate();
  double h = 0;
  for (double x : p.probs) {
    if (x > 0) h -= x * std::log(x);
  }
  return h;
}

// Top-two probability gap, recorded as 1 - (p1 - p2) so that, like entropy,
// higher means more leakage. raw_gap exposes p1 - p2 for attackers that
// minimize it.
inline double raw_gap(const ProbVector& p) {
  p.validate();
  if (p.probs.size() < 2) throw Error(ErrorKind::rejected_input, "gap needs >= 2 classes");
  double top1 = -1, top2 = -1;
  for (double x : p.probs) {
    if (x > top1) {
      top2 = top1;
      top1 = x;
    } else if (x > top2) {
      top2 = x;
    }
  }
  return top1 - top2;
}

inline double gap_cost(const ProbVector& p) { return 1.0 - raw_gap(p); }

// argmax_i { n_i + N(0, sigma_g^2) }; ties (exact equality, relevant only for
// sigma_g = 0) go to the smallest index.
inline std::size_t noisy_argmax(const VoteHistogram& hist, double sigma_g, std::mt19937_64& rng) {
  hist.validate();
  if (sigma_g < 0) throw Error(ErrorKind::rejected_input, "sigma_g must be >= 0");
  if (sigma_g == 0) return hist.argmax();
  std::normal_distribution<double> noise(0.0, sigma_g);
  std::size_t best = 0;
  double best_v = 0;
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    const double v = static_cast<double>(hist.counts[i]) + noise(rng);
    if (i == 0 || v > best_v) {
      best = i;
      best_v = v;
    }
  }
  return best;
}

// Histogram of the ground-truth labels of the k nearest training rows under
// Euclidean distance (ties by lowest row index). Feeds consensus_cost like a
// teacher histogram.
inline VoteHistogram pknn_histogram(std::span<const double> query,
                                    const std::vector<double>& train_features, std::size_t dim,
                                    const std::vector<int>& train_labels, int k, int class_count) {
  const std::size_t n = train_labels.size();
  if (k <= 0 || static_cast<std::size_t>(k) > n) {
    throw Error(ErrorKind::rejected_input, "pknn k must be in [1, n_train]");
  }
  if (query.size() != dim) throw Error(ErrorKind::rejected_input, "query width mismatch");
  if (class_count < 2) throw Error(ErrorKind::rejected_input, "need >= 2 classes");
  std::vector<std::pair<double, std::uint32_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = train_features.data() + i * dim;
    double d = 0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double diff = row[j] - query[j];
      d += diff * diff;
    }
    dist[i] = {d, static_cast<std::uint32_t>(i)};
  }
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
  VoteHistogram h;
  h.counts.assign(class_count, 0);
  for (int i = 0; i < k; ++i) {
    const int label = train_labels[dist[i].second];
    if (label < 0 || label >= class_count) {
      throw Error(ErrorKind::rejected_input, "training label out of range");
    }
    h.counts[label]++;
  }
  h.n_teachers = k;
  return h;
}

}  // namespace powgate
