#pragma once

// Binary HashCash: challenges whose solutions are ASCII-decimal counters such
// that H(challenge + ":" + counter) has at least `bits` leading zero bits.
// Interactive use (the server mints the challenge) is the primary mode; a
// non-interactive mint_stamp() is provided for completeness.

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "powgate/errors.hpp"
#include "powgate/util.hpp"

namespace powgate {

enum class HashAlg { sha1, sha256 };

inline HashAlg parse_hash_alg(std::string_view s) {
  if (s == "sha1") return HashAlg::sha1;
  if (s == "sha256") return HashAlg::sha256;
  throw Error(ErrorKind::config_error, "unknown hash_alg '" + std::string(s) + "' (expected sha1|sha256)");
}

inline const char* to_string(HashAlg a) { return a == HashAlg::sha1 ? "sha1" : "sha256"; }

struct DigestValue {
  std::array<std::uint8_t, EVP_MAX_MD_SIZE> bytes{};
  unsigned len = 0;
};

// Injectable digest so tests can count invocations or swap algorithms.
using DigestFn = std::function<DigestValue(std::string_view)>;

inline DigestFn make_digest(HashAlg alg) {
  const EVP_MD* md = alg == HashAlg::sha1 ? EVP_sha1() : EVP_sha256();
  return [md](std::string_view data) {
    DigestValue out;
    if (EVP_Digest(data.data(), data.size(), out.bytes.data(), &out.len, md, nullptr) != 1) {
      throw Error(ErrorKind::internal_bug, "EVP_Digest failed");
    }
    return out;
  };
}

inline std::size_t digest_length_bytes(HashAlg alg) { return alg == HashAlg::sha1 ? 20 : 32; }

// Number of consecutive zero bits from the most significant bit of byte 0.
inline int leading_zero_bits(const std::uint8_t* digest, std::size_t len) {
  if (len == 0) throw Error(ErrorKind::rejected_input, "empty digest");
  int bits = 0;
  for (std::size_t i = 0; i < len; ++i) {
    if (digest[i] == 0) {
      bits += 8;
      continue;
    }
    std::uint8_t b = digest[i];
    while ((b & 0x80u) == 0) {
      ++bits;
      b = static_cast<std::uint8_t>(b << 1);
    }
    break;
  }
  return bits;
}

inline int leading_zero_bits(const DigestValue& d) { return leading_zero_bits(d.bytes.data(), d.len); }

// Challenge token, serialized as `1:<bits>:<timestamp>:<resource>:<nonce>`.
struct Challenge {
  int version = 1;
  int bits = 0;
  std::int64_t timestamp = 0;
  std::string resource;
  std::string nonce;  // 16 lowercase hex chars

  std::string serialize() const {
    std::string out = "1:";
    out += std::to_string(bits);
    out += ':';
    out += std::to_string(timestamp);
    out += ':';
    out += resource;
    out += ':';
    out += nonce;
    return out;
  }

  static Challenge parse(std::string_view token) {
    auto parts = split(token, ':');
    if (parts.size() != 5) throw Error(ErrorKind::parse_error, "challenge must have 5 ':' fields");
    if (parts[0] != "1") throw Error(ErrorKind::parse_error, "unsupported challenge version");
    Challenge c;
    auto parse_int = [](std::string_view s, const char* what) {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size() || v < 0) {
        throw Error(ErrorKind::parse_error, std::string("bad challenge ") + what);
      }
      return v;
    };
    c.bits = static_cast<int>(parse_int(parts[1], "bits"));
    c.timestamp = parse_int(parts[2], "timestamp");
    c.resource = std::string(parts[3]);
    c.nonce = std::string(parts[4]);
    if (c.nonce.size() != 16 || !is_lower_hex(c.nonce)) {
      throw Error(ErrorKind::parse_error, "challenge nonce must be 16 lowercase hex chars");
    }
    return c;
  }
};

// Server-side challenge generation. `digest_len` bounds the meaningful bits.
inline Challenge generate_challenge(std::string_view user_id, int bits, std::int64_t now,
                                    std::mt19937_64& rng, std::size_t digest_len = 20) {
  if (user_id.find(':') != std::string_view::npos) {
    throw Error(ErrorKind::rejected_input, "user id must not contain ':'");
  }
  if (bits < 0 || bits > static_cast<int>(8 * digest_len)) {
    throw Error(ErrorKind::rejected_input, "bits out of range for digest length");
  }
  Challenge c;
  c.bits = bits;
  c.timestamp = now;
  c.resource = std::string(user_id);
  c.nonce = random_hex(rng, 16);
  return c;
}

struct Solution {
  std::string counter;  // ASCII decimal, no leading zeros except "0"
};

inline bool is_valid_counter(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  if (s.size() > 1 && s[0] == '0') return false;
  return true;
}

// Core check on raw serialized inputs; exactly one digest invocation.
// Exposed separately so tamper tests can exercise corrupted tokens.
inline bool verify_raw(std::string_view serialized_challenge, std::string_view counter, int bits,
                       const DigestFn& digest) {
  std::string buf;
  buf.reserve(serialized_challenge.size() + 1 + counter.size());
  buf.append(serialized_challenge);
  buf.push_back(':');
  buf.append(counter);
  return leading_zero_bits(digest(buf)) >= bits;
}

inline bool verify(const Challenge& c, const Solution& s, const DigestFn& digest) {
  return verify_raw(c.serialize(), s.counter, c.bits, digest);
}

struct SolveResult {
  Solution solution;
  std::uint64_t trials = 0;  // counters tried (counter value + 1)
  double seconds = 0.0;
};

// Deterministic solver: counters ascend from 0, so the returned counter is
// the smallest valid one. Trial counts over fresh challenges are geometric
// with success probability 2^-bits because the nonce is random.
inline SolveResult solve(const Challenge& c, const DigestFn& digest,
                         std::optional<std::uint64_t> max_trials = std::nullopt) {
  Stopwatch watch;
  std::string buf = c.serialize();
  buf.push_back(':');
  const std::size_t prefix_len = buf.size();
  char digits[24];
  for (std::uint64_t counter = 0;; ++counter) {
    if (max_trials && counter >= *max_trials) {
      throw SolveTimeout(counter, "no solution within " + std::to_string(*max_trials) + " trials");
    }
    auto [end, ec] = std::to_chars(digits, digits + sizeof(digits), counter);
    buf.resize(prefix_len);
    buf.append(digits, end);
    if (leading_zero_bits(digest(buf)) >= c.bits) {
      SolveResult r;
      r.solution.counter.assign(digits, end);
      r.trials = counter + 1;
      r.seconds = watch.seconds();
      return r;
    }
  }
}

// Non-interactive mode: the client mints its own challenge and solves it.
// Unused by the server (the protocol is interactive) but part of the library.
inline std::pair<Challenge, Solution> mint_stamp(std::string_view resource, int bits,
                                                 const DigestFn& digest, std::mt19937_64& rng,
                                                 std::int64_t now) {
  Challenge c = generate_challenge(resource, bits, now, rng);
  return {c, solve(c, digest).solution};
}

struct BenchRow {
  int bits = 0;
  double mean_solve_seconds = 0.0;
  double mean_trials = 0.0;
  int repetitions = 0;
};

struct BenchTable {
  std::vector<BenchRow> rows;

  std::string to_csv() const {
    std::ostringstream out;
    out << "bits,mean_solve_seconds,mean_trials,repetitions\n";
    out.precision(17);
    for (const auto& r : rows) {
      out << r.bits << ',' << r.mean_solve_seconds << ',' << r.mean_trials << ',' << r.repetitions
          << '\n';
    }
    return out.str();
  }

  static BenchTable from_csv(std::istream& in) {
    BenchTable t;
    std::string line;
    if (!std::getline(in, line) || trim(line) != "bits,mean_solve_seconds,mean_trials,repetitions") {
      throw Error(ErrorKind::parse_error, "bench CSV: bad or missing header");
    }
    int lineno = 1;
    int prev_bits = -1;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      auto parts = split(trim(line), ',');
      if (parts.size() != 4) {
        throw Error(ErrorKind::parse_error, "bench CSV line " + std::to_string(lineno) + ": want 4 fields");
      }
      BenchRow r;
      try {
        r.bits = std::stoi(std::string(parts[0]));
        r.mean_solve_seconds = std::stod(std::string(parts[1]));
        r.mean_trials = std::stod(std::string(parts[2]));
        r.repetitions = std::stoi(std::string(parts[3]));
      } catch (const std::exception&) {
        throw Error(ErrorKind::parse_error, "bench CSV line " + std::to_string(lineno) + ": bad number");
      }
      if (r.bits <= prev_bits) {
        throw Error(ErrorKind::parse_error, "bench CSV line " + std::to_string(lineno) + ": bits must increase");
      }
      if (r.mean_solve_seconds <= 0 || r.mean_trials <= 0) {
        throw Error(ErrorKind::parse_error, "bench CSV line " + std::to_string(lineno) + ": timings must be positive");
      }
      prev_bits = r.bits;
      t.rows.push_back(r);
    }
    return t;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io_error, "cannot write " + path);
    out << to_csv();
  }

  static BenchTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io_error, "cannot read " + path);
    return from_csv(in);
  }
};

// Mean wall time and trials for `repetitions` fresh challenges at each k.
// `timestamp` stamps the benchmark challenges; fixing it (together with the
// rng seed) makes the sampled trial counts reproducible.
inline BenchTable benchmark(int bits_lo, int bits_hi, int repetitions, const DigestFn& digest,
                            std::mt19937_64& rng, std::int64_t timestamp = unix_now_seconds()) {
  if (repetitions < 1) throw Error(ErrorKind::rejected_input, "repetitions must be >= 1");
  if (bits_lo > bits_hi) throw Error(ErrorKind::rejected_input, "empty bits range");
  BenchTable table;
  const std::int64_t now = timestamp;
  for (int k = bits_lo; k <= bits_hi; ++k) {
    double total_seconds = 0.0;
    double total_trials = 0.0;
    for (int rep = 0; rep < repetitions; ++rep) {
      Challenge c = generate_challenge("bench", k, now, rng);
      SolveResult r = solve(c, digest);
      total_seconds += r.seconds;
      total_trials += static_cast<double>(r.trials);
    }
    table.rows.push_back({k, total_seconds / repetitions, total_trials / repetitions, repetitions});
  }
  return table;
}

// Seconds per digest of a fixed 64-byte input, measured over `n` hashes.
inline double measure_hash_seconds(const DigestFn& digest, int n = 1'000'000) {
  const std::string input(64, 'x');
  volatile std::uint8_t sink = 0;
  Stopwatch watch;
  for (int i = 0; i < n; ++i) {
    sink = sink ^ digest(input).bytes[0];
  }
  (void)sink;
  return watch.seconds() / n;
}

}  // namespace powgate
