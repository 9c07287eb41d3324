#pragma once

// Error taxonomy shared by all powgate components. Each failure mode the
// protocol distinguishes (and each HTTP status the gateway returns) maps to
// one ErrorKind, so tests and the HTTP layer can dispatch on kind instead of
// parsing message strings.

#include <cstdint>
#include <stdexcept>
#include <string>

namespace powgate {

enum class ErrorKind {
  rejected_input,    // malformed argument (bad user id, bad batch, bad CSV cell)
  oversized_batch,   // batch larger than the configured maximum
  solve_timeout,     // solver exhausted max_trials
  fit_degenerate,    // regression input has < 2 distinct abscissae
  parse_error,       // config/CSV/JSON parse failure (message carries location)
  config_error,      // semantically invalid configuration at startup
  not_found,         // unknown puzzle id
  replay_rejected,   // puzzle already consumed
  puzzle_expired,    // puzzle past its TTL
  solution_invalid,  // verification failed (puzzle stays open)
  transport_error,   // client could not reach the server
  io_error,          // filesystem failure
  internal_bug,      // invariant the code itself must uphold was violated
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::rejected_input: return "rejected_input";
    case ErrorKind::oversized_batch: return "oversized_batch";
    case ErrorKind::solve_timeout: return "solve_timeout";
    case ErrorKind::fit_degenerate: return "fit_degenerate";
    case ErrorKind::parse_error: return "parse_error";
    case ErrorKind::config_error: return "config_error";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::replay_rejected: return "replay_rejected";
    case ErrorKind::puzzle_expired: return "puzzle_expired";
    case ErrorKind::solution_invalid: return "solution_invalid";
    case ErrorKind::transport_error: return "transport_error";
    case ErrorKind::io_error: return "io_error";
    case ErrorKind::internal_bug: return "internal_bug";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Solver timeout carries how many counters were tried before giving up.
class SolveTimeout : public Error {
 public:
  SolveTimeout(std::uint64_t trials, const std::string& message)
      : Error(ErrorKind::solve_timeout, message), trials_(trials) {}
  std::uint64_t trials() const { return trials_; }

 private:
  std::uint64_t trials_;
};

}  // namespace powgate
