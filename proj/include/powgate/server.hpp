#pragma once

// Gateway core: accounts per-user cost at issuance, issues calibrated
// puzzles, verifies solutions exactly once, and releases predictions only
// after a successful verify. Transport-agnostic; the HTTP layer adapts it.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "powgate/backend.hpp"
#include "powgate/calibration.hpp"
#include "powgate/config.hpp"
#include "powgate/errors.hpp"
#include "powgate/hashcash.hpp"
#include "powgate/privacy.hpp"
#include "powgate/util.hpp"

namespace powgate {

struct PuzzleOffer {
  std::string puzzle_id;
  std::string challenge;  // serialized, as the client must hash it
  int bits = 0;
  std::int64_t expires_at = 0;
};

struct Predictions {
  std::vector<int> labels;
  std::optional<std::vector<std::vector<double>>> probs;  // present in logits mode
};

struct Puzzle {
  Challenge challenge;
  int bits = 0;
  std::int64_t issued_at = 0;
  std::int64_t expires_at = 0;
  std::vector<std::vector<double>> pending_batch;
  bool consumed = false;
};

using VictimFn = std::function<ProbVector(std::span<const double>)>;
using ClockFn = std::function<std::int64_t()>;

struct GatewayOptions {
  DifficultyMode mode = DifficultyMode::stateful;
  ReturnKind return_kind = ReturnKind::labels;
  HashAlg hash_alg = HashAlg::sha1;
  std::int64_t puzzle_ttl_seconds = 600;
  std::int64_t max_batch = 64;
  std::uint64_t rng_seed = std::random_device{}();
  ClockFn clock;      // unix seconds; defaults to the system clock
  VictimFn victim;    // defaults to the bundle's victim model
};

class Gateway {
 public:
  Gateway(Calibrator calibrator, CostMeter meter, GatewayOptions opts = {})
      : calibrator_(std::move(calibrator)),
        meter_(meter),
        opts_(std::move(opts)),
        digest_(make_digest(opts_.hash_alg)),
        rng_(opts_.rng_seed) {
    calibrator_.validate();
    if (meter_.bundle == nullptr) throw Error(ErrorKind::config_error, "meter needs a backend");
    if (!opts_.clock) {
      opts_.clock = [] { return unix_now_seconds(); };
    }
    if (!opts_.victim) {
      const BackendBundle* bundle = meter_.bundle;
      opts_.victim = [bundle](std::span<const double> q) { return victim_predict(*bundle, q); };
    }
  }

  PuzzleOffer handle_query(const std::string& user_id,
                           const std::vector<std::vector<double>>& batch) {
    if (user_id.empty() || user_id.find(':') != std::string::npos) {
      throw Error(ErrorKind::rejected_input, "user_id must be non-empty without ':'");
    }
    if (batch.empty()) throw Error(ErrorKind::rejected_input, "empty batch");
    if (batch.size() > static_cast<std::size_t>(opts_.max_batch)) {
      throw Error(ErrorKind::oversized_batch,
                  "batch of " + std::to_string(batch.size()) + " exceeds max " +
                      std::to_string(opts_.max_batch));
    }
    const std::size_t want_dim = meter_.bundle->dim;
    for (const auto& q : batch) {
      if (q.size() != want_dim) {
        throw Error(ErrorKind::rejected_input, "query width " + std::to_string(q.size()) +
                                                   " != backend dim " + std::to_string(want_dim));
      }
      for (double v : q) {
        if (!std::isfinite(v)) throw Error(ErrorKind::rejected_input, "non-finite query value");
      }
    }

    // Per-query costs are pure backend work; keep them outside the lock.
    std::vector<double> costs;
    costs.reserve(batch.size());
    for (const auto& q : batch) costs.push_back(meter_.per_query_cost(q));

    std::lock_guard<std::mutex> lock(mu_);
    UserLedger& ledger = ledgers_[user_id];
    ledger.user_id = user_id;
    // Cost accrues here, at issuance, before the puzzle exists: abandoning
    // the puzzle cannot roll it back.
    ledger.query_count += static_cast<std::int64_t>(batch.size());
    CompensatedSum sum;
    sum.add(ledger.cumulative_cost);
    for (double c : costs) sum.add(c);
    ledger.cumulative_cost = sum.value();

    int bits = 0;
    if (opts_.mode == DifficultyMode::stateful) {
      bits = calibrator_.difficulty(ledger);
    } else {
      bits = combine_stateless_bits(costs);
    }

    const std::int64_t now = opts_.clock();
    Puzzle puzzle;
    puzzle.challenge = generate_challenge(user_id, bits, now, rng_);
    puzzle.bits = bits;
    puzzle.issued_at = now;
    puzzle.expires_at = now + opts_.puzzle_ttl_seconds;
    puzzle.pending_batch = batch;

    std::string id = random_hex(rng_, 32);
    while (puzzles_.count(id) != 0) id = random_hex(rng_, 32);

    PuzzleOffer offer;
    offer.puzzle_id = id;
    offer.challenge = puzzle.challenge.serialize();
    offer.bits = bits;
    offer.expires_at = puzzle.expires_at;
    puzzles_.emplace(std::move(id), std::move(puzzle));
    return offer;
  }

  Predictions handle_solution(const std::string& puzzle_id, const std::string& solution) {
    std::vector<std::vector<double>> batch;
    {
      std::lock_guard<std::mutex> lock(mu_);
      const auto it = puzzles_.find(puzzle_id);
      if (it == puzzles_.end()) {
        throw Error(ErrorKind::not_found, "unknown puzzle_id");
      }
      Puzzle& p = it->second;
      if (p.consumed) {
        throw Error(ErrorKind::replay_rejected, "puzzle already consumed");
      }
      if (opts_.clock() >= p.expires_at) {
        throw Error(ErrorKind::puzzle_expired, "puzzle expired; accrued cost is retained");
      }
      if (!verify(p.challenge, Solution{solution}, digest_)) {
        // Stays open: the client may retry until the TTL runs out.
        throw Error(ErrorKind::solution_invalid, "solution does not meet the difficulty");
      }
      p.consumed = true;
      batch = std::move(p.pending_batch);
      p.pending_batch.clear();
    }

    // Verified and consumed: release predictions.
    Predictions out;
    out.labels.reserve(batch.size());
    if (opts_.return_kind == ReturnKind::logits) out.probs.emplace();
    for (const auto& q : batch) {
      const ProbVector p = opts_.victim(q);
      out.labels.push_back(static_cast<int>(
          std::max_element(p.probs.begin(), p.probs.end()) - p.probs.begin()));
      if (out.probs) out.probs->push_back(p.probs);
    }
    return out;
  }

  UserLedger ledger(const std::string& user_id) const {
    std::lock_guard<std::mutex> lock(mu_);
    const auto it = ledgers_.find(user_id);
    if (it == ledgers_.end()) return UserLedger{user_id, 0, 0.0};
    return it->second;
  }

  std::map<std::string, UserLedger> ledgers() const {
    std::lock_guard<std::mutex> lock(mu_);
    return ledgers_;
  }

  std::optional<Puzzle> peek_puzzle(const std::string& puzzle_id) const {
    std::lock_guard<std::mutex> lock(mu_);
    const auto it = puzzles_.find(puzzle_id);
    if (it == puzzles_.end()) return std::nullopt;
    return it->second;
  }

  // Atomically replaces the snapshot file (write to temp, then rename).
  void snapshot(const std::string& path) const {
    nlohmann::json j = nlohmann::json::object();
    {
      std::lock_guard<std::mutex> lock(mu_);
      for (const auto& [user, ledger] : ledgers_) {
        j[user] = {{"query_count", ledger.query_count},
                   {"cumulative_cost", ledger.cumulative_cost}};
      }
    }
    const std::string tmp = path + ".tmp";
    {
      std::ofstream out(tmp);
      if (!out) throw Error(ErrorKind::io_error, "cannot write " + tmp);
      out << j.dump(2) << '\n';
      if (!out.good()) throw Error(ErrorKind::io_error, "short write to " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::io_error, "cannot rename " + tmp + " to " + path);
  }

  void restore(const std::string& path, bool empty_ok) {
    std::ifstream in(path);
    if (!in) {
      if (empty_ok) return;
      throw Error(ErrorKind::io_error, "cannot read snapshot " + path);
    }
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
      if (!j.is_object()) throw std::runtime_error("top level must be an object");
    } catch (const std::exception& e) {
      throw Error(ErrorKind::parse_error, "corrupt snapshot " + path + ": " + e.what());
    }
    std::map<std::string, UserLedger> restored;
    try {
      for (auto it = j.begin(); it != j.end(); ++it) {
        UserLedger ledger;
        ledger.user_id = it.key();
        ledger.query_count = it.value().at("query_count").get<std::int64_t>();
        ledger.cumulative_cost = it.value().at("cumulative_cost").get<double>();
        if (ledger.query_count < 0 || ledger.cumulative_cost < 0) {
          throw std::runtime_error("negative ledger fields");
        }
        restored.emplace(it.key(), std::move(ledger));
      }
    } catch (const std::exception& e) {
      throw Error(ErrorKind::parse_error, "corrupt snapshot " + path + ": " + e.what());
    }
    std::lock_guard<std::mutex> lock(mu_);
    ledgers_ = std::move(restored);
  }

  const Calibrator& calibrator() const { return calibrator_; }
  const GatewayOptions& options() const { return opts_; }
  const CostMeter& meter() const { return meter_; }

  // Drops consumed or expired puzzles; returns how many were removed.
  std::size_t collect_garbage() {
    std::lock_guard<std::mutex> lock(mu_);
    const std::int64_t now = opts_.clock();
    std::size_t removed = 0;
    for (auto it = puzzles_.begin(); it != puzzles_.end();) {
      if (it->second.consumed || now >= it->second.expires_at + opts_.puzzle_ttl_seconds) {
        it = puzzles_.erase(it);
        ++removed;
      } else {
        ++it;
      }
    }
    return removed;
  }

 private:
  // Stateless batch: one puzzle whose expected work matches the per-query
  // sum, k = round(log2(sum_j 2^{k_j})), clamped to the calibrator's range.
  int combine_stateless_bits(const std::vector<double>& costs) const {
    CompensatedSum work;
    for (double c : costs) {
      work.add(std::ldexp(1.0, calibrator_.stateless_difficulty(c)));
    }
    const double k = std::log2(work.value());
    const double clamped = std::clamp(std::round(k), static_cast<double>(calibrator_.k_min),
                                      static_cast<double>(calibrator_.k_max));
    return static_cast<int>(clamped);
  }

  Calibrator calibrator_;
  CostMeter meter_;
  GatewayOptions opts_;
  DigestFn digest_;
  mutable std::mutex mu_;
  std::mt19937_64 rng_;
  std::map<std::string, UserLedger> ledgers_;
  std::map<std::string, Puzzle> puzzles_;
};

}  // namespace powgate
