#pragma once

// Interactive proof-of-work client: posts a query batch, solves the returned
// challenge, self-verifies, and submits the solution for predictions. An
// expired puzzle is resubmitted once (the server keeps the accrued cost of
// the abandoned offer); a server rejection of a self-verified solution is an
// internal bug, not a recoverable condition.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "powgate/errors.hpp"
#include "powgate/hashcash.hpp"
#include "powgate/server.hpp"
#include "powgate/util.hpp"

namespace powgate {

struct ClientConfig {
  std::string endpoint = "http://127.0.0.1:8080";
  std::string user_id;
  HashAlg hash_alg = HashAlg::sha1;
  int max_attempts = 3;  // transport attempts per request
  int backoff_ms = 100;  // doubles after each failed attempt
  std::optional<std::uint64_t> max_solve_trials;
  std::function<void(const PuzzleOffer&)> on_offer;  // instrumentation hook

  void validate() const {
    if (endpoint.empty()) throw Error(ErrorKind::config_error, "endpoint must be non-empty");
    if (user_id.empty() || user_id.find(':') != std::string::npos) {
      throw Error(ErrorKind::config_error, "user_id must be non-empty without ':'");
    }
    if (max_attempts < 1) throw Error(ErrorKind::config_error, "max_attempts must be >= 1");
    if (backoff_ms < 0) throw Error(ErrorKind::config_error, "backoff_ms must be >= 0");
  }
};

struct CallReport {
  int bits = 0;
  std::uint64_t trials = 0;
  double solve_seconds = 0.0;
  double server_roundtrip_seconds = 0.0;
  bool resubmitted = false;  // this call replaced an expired offer
};

struct QueryResult {
  Predictions predictions;
  CallReport report;
};

namespace detail {

inline ErrorKind kind_from_string(const std::string& name, ErrorKind fallback) {
  for (int i = 0; i <= static_cast<int>(ErrorKind::internal_bug); ++i) {
    const auto kind = static_cast<ErrorKind>(i);
    if (name == to_string(kind)) return kind;
  }
  return fallback;
}

inline ErrorKind kind_for_status(int status) {
  switch (status) {
    case 400: return ErrorKind::rejected_input;
    case 404: return ErrorKind::not_found;
    case 409: return ErrorKind::replay_rejected;
    case 410: return ErrorKind::puzzle_expired;
    case 413: return ErrorKind::oversized_batch;
    case 422: return ErrorKind::solution_invalid;
    default: return ErrorKind::transport_error;
  }
}

}  // namespace detail

class ClientSession {
 public:
  explicit ClientSession(ClientConfig cfg)
      : cfg_(std::move(cfg)), digest_(make_digest(cfg_.hash_alg)), http_(cfg_.endpoint) {
    cfg_.validate();
    http_.set_connection_timeout(5, 0);
    http_.set_read_timeout(30, 0);
  }

  QueryResult query(const std::vector<std::vector<double>>& batch) {
    nlohmann::json body;
    body["user_id"] = cfg_.user_id;
    body["queries"] = batch;

    for (bool resubmitted = false;; resubmitted = true) {
      CallReport report;
      report.resubmitted = resubmitted;

      Stopwatch rt;
      const nlohmann::json offer_json = post_json("/v1/query", body);
      report.server_roundtrip_seconds += rt.seconds();
      const PuzzleOffer offer = parse_offer(offer_json);
      if (cfg_.on_offer) cfg_.on_offer(offer);

      const Challenge challenge = Challenge::parse(offer.challenge);
      if (challenge.bits != offer.bits) {
        throw Error(ErrorKind::parse_error, "offer bits disagree with the challenge token");
      }
      const SolveResult solved = solve(challenge, digest_, cfg_.max_solve_trials);
      if (!verify(challenge, solved.solution, digest_)) {
        throw Error(ErrorKind::internal_bug, "solver produced a counter that fails self-verify");
      }
      report.bits = offer.bits;
      report.trials = solved.trials;
      report.solve_seconds = solved.seconds;

      try {
        Stopwatch rt2;
        const nlohmann::json pred_json = post_json(
            "/v1/solution",
            {{"puzzle_id", offer.puzzle_id}, {"solution", solved.solution.counter}});
        report.server_roundtrip_seconds += rt2.seconds();

        QueryResult result;
        result.predictions = parse_predictions(pred_json, batch.size());
        result.report = report;
        calls_.push_back(report);
        if (resubmitted) ++resubmissions_;
        return result;
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::puzzle_expired && !resubmitted) {
          continue;  // one fresh attempt; the server keeps the first cost
        }
        if (e.kind() == ErrorKind::solution_invalid) {
          throw Error(ErrorKind::internal_bug,
                      std::string("server rejected a self-verified solution: ") + e.what());
        }
        throw;
      }
    }
  }

  const std::vector<CallReport>& calls() const { return calls_; }
  int resubmissions() const { return resubmissions_; }

  nlohmann::json report_json() const {
    nlohmann::json calls = nlohmann::json::array();
    for (const CallReport& r : calls_) {
      calls.push_back({{"bits", r.bits},
                       {"trials", r.trials},
                       {"solve_seconds", r.solve_seconds},
                       {"server_roundtrip_seconds", r.server_roundtrip_seconds},
                       {"resubmitted", r.resubmitted}});
    }
    return {{"calls", std::move(calls)}, {"resubmissions", resubmissions_}};
  }

 private:
  nlohmann::json post_json(const std::string& path, const nlohmann::json& body) {
    httplib::Result res;
    int backoff = cfg_.backoff_ms;
    for (int attempt = 1;; ++attempt) {
      res = http_.Post(path, body.dump(), "application/json");
      if (res) break;
      if (attempt >= cfg_.max_attempts) {
        throw Error(ErrorKind::transport_error,
                    "POST " + path + " failed after " + std::to_string(attempt) +
                        " attempts: " + httplib::to_string(res.error()));
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::parse_error,
                  "unparseable response from " + path + ": " + e.what());
    }
    if (res->status != 200) {
      ErrorKind kind = detail::kind_for_status(res->status);
      std::string message = "HTTP " + std::to_string(res->status) + " from " + path;
      if (parsed.is_object() && parsed.contains("error") && parsed["error"].is_string()) {
        kind = detail::kind_from_string(parsed["error"].get<std::string>(), kind);
      }
      if (parsed.is_object() && parsed.contains("message") && parsed["message"].is_string()) {
        message += ": " + parsed["message"].get<std::string>();
      }
      throw Error(kind, message);
    }
    return parsed;
  }

  static PuzzleOffer parse_offer(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("puzzle_id") || !j["puzzle_id"].is_string() ||
        !j.contains("challenge") || !j["challenge"].is_string() || !j.contains("bits") ||
        !j["bits"].is_number_integer() || !j.contains("expires_at") ||
        !j["expires_at"].is_number_integer()) {
      throw Error(ErrorKind::parse_error, "offer is missing puzzle_id/challenge/bits/expires_at");
    }
    PuzzleOffer offer;
    offer.puzzle_id = j["puzzle_id"].get<std::string>();
    offer.challenge = j["challenge"].get<std::string>();
    offer.bits = j["bits"].get<int>();
    offer.expires_at = j["expires_at"].get<std::int64_t>();
    return offer;
  }

  static Predictions parse_predictions(const nlohmann::json& j, std::size_t want) {
    if (!j.is_object() || !j.contains("labels") || !j["labels"].is_array()) {
      throw Error(ErrorKind::parse_error, "prediction response has no labels array");
    }
    Predictions out;
    for (const auto& v : j["labels"]) {
      if (!v.is_number_integer()) throw Error(ErrorKind::parse_error, "labels must be integers");
      out.labels.push_back(v.get<int>());
    }
    if (out.labels.size() != want) {
      throw Error(ErrorKind::parse_error, "label count " + std::to_string(out.labels.size()) +
                                              " != batch size " + std::to_string(want));
    }
    if (j.contains("probs")) {
      if (!j["probs"].is_array() || j["probs"].size() != want) {
        throw Error(ErrorKind::parse_error, "probs must have one row per query");
      }
      out.probs.emplace();
      for (const auto& row : j["probs"]) {
        if (!row.is_array()) throw Error(ErrorKind::parse_error, "probs rows must be arrays");
        out.probs->push_back(row.get<std::vector<double>>());
      }
    }
    return out;
  }

  ClientConfig cfg_;
  DigestFn digest_;
  httplib::Client http_;
  std::vector<CallReport> calls_;
  int resubmissions_ = 0;
};

// Query CSV: header f0,...,f{D-1}, one feature row per line (no labels).
inline std::vector<std::vector<double>> load_query_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io_error, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::parse_error, path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::size_t dim = 0;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (cell != "f" + std::to_string(dim)) {
        throw Error(ErrorKind::parse_error,
                    path + ":1: expected header column f" + std::to_string(dim));
      }
      ++dim;
    }
    if (dim == 0) throw Error(ErrorKind::parse_error, path + ":1: empty header");
  }

  std::vector<std::vector<double>> rows;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(dim);
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw Error(ErrorKind::parse_error,
                    path + ":" + std::to_string(lineno) + ": not a number: " + cell);
      }
      if (used != cell.size()) {
        throw Error(ErrorKind::parse_error,
                    path + ":" + std::to_string(lineno) + ": trailing junk in: " + cell);
      }
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::parse_error,
                    path + ":" + std::to_string(lineno) + ": non-finite value");
      }
      row.push_back(v);
    }
    if (row.size() != dim) {
      throw Error(ErrorKind::parse_error, path + ":" + std::to_string(lineno) + ": expected " +
                                              std::to_string(dim) + " columns, got " +
                                              std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorKind::parse_error, path + ": no query rows");
  return rows;
}

// Prediction CSV: label[,p0,...,p{C-1}] — probabilities only when present.
inline void save_predictions_csv(const std::string& path, const Predictions& pred) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io_error, "cannot write " + path);
  out << "label";
  if (pred.probs && !pred.probs->empty()) {
    for (std::size_t c = 0; c < pred.probs->front().size(); ++c) out << ",p" << c;
  }
  out << "\n";
  out.precision(17);
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    out << pred.labels[i];
    if (pred.probs) {
      for (double p : (*pred.probs)[i]) out << "," << p;
    }
    out << "\n";
  }
  if (!out) throw Error(ErrorKind::io_error, "failed writing " + path);
}

}  // namespace powgate
