#pragma once

// Configuration: a small TOML subset (sections, scalar keys, # comments)
// with line-numbered errors, unknown-key rejection, and POWGATE_-prefixed
// environment overrides applied after the file.

#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "powgate/dataset.hpp"
#include "powgate/errors.hpp"
#include "powgate/hashcash.hpp"
#include "powgate/privacy.hpp"
#include "powgate/util.hpp"

namespace powgate {

enum class DifficultyMode { stateful, stateless };
enum class ReturnKind { labels, logits };

inline DifficultyMode parse_difficulty_mode(std::string_view s) {
  if (s == "stateful") return DifficultyMode::stateful;
  if (s == "stateless") return DifficultyMode::stateless;
  throw Error(ErrorKind::config_error, "mode must be stateful|stateless, got '" + std::string(s) + "'");
}

inline ReturnKind parse_return_kind(std::string_view s) {
  if (s == "labels") return ReturnKind::labels;
  if (s == "logits") return ReturnKind::logits;
  throw Error(ErrorKind::config_error, "return must be labels|logits, got '" + std::string(s) + "'");
}

struct ServerConfig {
  std::string bind = "127.0.0.1:8787";
  DifficultyMode mode = DifficultyMode::stateful;
  ReturnKind return_kind = ReturnKind::labels;
  std::int64_t puzzle_ttl_seconds = 600;
  HashAlg hash_alg = HashAlg::sha1;
  std::int64_t max_batch = 64;
  std::string snapshot;    // empty = no persistence
  std::string calibrator;  // path to fitted calibrator JSON; empty = built-in default
};

struct BackendConfig {
  std::string dataset;  // CSV path; empty = generate blobs
  std::string table;    // table-backend CSV; overrides dataset when set
  std::int64_t n_teachers = 50;
  std::uint64_t partition_seed = 0;
};

struct BlobsConfig {
  std::int64_t classes = 2;
  std::int64_t dim = 16;
  double mu = 6.0;
  double sigma_data = 1.0;
  std::int64_t n_train = 600;
  std::uint64_t seed = 11;
  std::int64_t heldout = 1000;  // held-out IND pool size for the harness
  double box_scale = 3.0;       // OOD box half-width multiplier

  BlobConfig to_blob_config() const {
    return BlobConfig{static_cast<int>(classes), static_cast<int>(dim), mu, sigma_data,
                      static_cast<int>(n_train), seed};
  }
};

struct CalibrationConfig {
  double a = 1.0075;
  double a_q = 1.0075;
  std::int64_t k_min = 0;
  std::int64_t k_max = 50;
  double time_unit_seconds = 0.0;  // 0 = measure the serving baseline at calibration time
};

struct HarnessConfig {
  std::int64_t solve_threshold_bits = 20;  // real solving below, analytic expectation above
  double in_out_p = 0.1;
  std::int64_t batch = 10;
};

struct AccountantSection {
  MetricKind metric_kind = MetricKind::pate_q;
  double sigma = 2.0;
  double sigma_g = 0.0;
  double lambda = 2.0;
  double delta2_sq = 2.0;
  std::int64_t pknn_k = 5;

  AccountantConfig to_accountant_config() const {
    AccountantConfig c;
    c.metric_kind = metric_kind;
    c.sigma = sigma;
    c.sigma_g = sigma_g;
    c.lambda = lambda;
    c.delta2_sq = delta2_sq;
    return c;
  }
};

struct Config {
  ServerConfig server;
  AccountantSection accountant;
  BackendConfig backend;
  BlobsConfig blobs;
  CalibrationConfig calibration;
  HarnessConfig harness;

  void validate() const {
    if (server.puzzle_ttl_seconds <= 0) {
      throw Error(ErrorKind::config_error, "server.puzzle_ttl_seconds must be > 0");
    }
    if (server.max_batch < 1) throw Error(ErrorKind::config_error, "server.max_batch must be >= 1");
    if (!(accountant.sigma > 0)) throw Error(ErrorKind::config_error, "accountant.sigma must be > 0");
    if (accountant.sigma_g < 0) throw Error(ErrorKind::config_error, "accountant.sigma_g must be >= 0");
    if (!(accountant.lambda > 0)) throw Error(ErrorKind::config_error, "accountant.lambda must be > 0");
    if (!(accountant.delta2_sq > 0)) {
      throw Error(ErrorKind::config_error, "accountant.delta2_sq must be > 0");
    }
    if (accountant.pknn_k < 1) throw Error(ErrorKind::config_error, "accountant.pknn_k must be >= 1");
    if (backend.n_teachers < 1) throw Error(ErrorKind::config_error, "backend.n_teachers must be >= 1");
    if (blobs.classes < 2) throw Error(ErrorKind::config_error, "blobs.classes must be >= 2");
    if (blobs.dim < 1) throw Error(ErrorKind::config_error, "blobs.dim must be >= 1");
    if (blobs.n_train < blobs.classes) {
      throw Error(ErrorKind::config_error, "blobs.n_train must be >= blobs.classes");
    }
    if (!(blobs.sigma_data > 0)) throw Error(ErrorKind::config_error, "blobs.sigma_data must be > 0");
    if (blobs.heldout < 1) throw Error(ErrorKind::config_error, "blobs.heldout must be >= 1");
    if (!(blobs.box_scale > 0)) throw Error(ErrorKind::config_error, "blobs.box_scale must be > 0");
    if (!(calibration.a > 1)) throw Error(ErrorKind::config_error, "calibration.a must be > 1");
    if (!(calibration.a_q > 1)) throw Error(ErrorKind::config_error, "calibration.a_q must be > 1");
    if (calibration.k_min > calibration.k_max || calibration.k_min < 0) {
      throw Error(ErrorKind::config_error, "calibration.k_min must be in [0, k_max]");
    }
    if (calibration.time_unit_seconds < 0) {
      throw Error(ErrorKind::config_error, "calibration.time_unit_seconds must be >= 0");
    }
    if (harness.solve_threshold_bits < 0 || harness.solve_threshold_bits > 64) {
      throw Error(ErrorKind::config_error, "harness.solve_threshold_bits must be in [0, 64]");
    }
    if (harness.in_out_p < 0 || harness.in_out_p > 1) {
      throw Error(ErrorKind::config_error, "harness.in_out_p must be in [0, 1]");
    }
    if (harness.batch < 1) throw Error(ErrorKind::config_error, "harness.batch must be >= 1");
  }
};

namespace detail {

// One settable key: parses a raw scalar token (quotes already stripped for
// file input; environment values arrive as-is).
using KeySetter = std::function<void(Config&, const std::string&)>;

inline double parse_number(const std::string& raw) {
  try {
    std::size_t used = 0;
    const double v = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::config_error, "expected a number, got '" + raw + "'");
  }
}

inline std::int64_t parse_integer(const std::string& raw) {
  try {
    std::size_t used = 0;
    const std::int64_t v = std::stoll(raw, &used);
    if (used != raw.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::config_error, "expected an integer, got '" + raw + "'");
  }
}

inline std::uint64_t parse_unsigned(const std::string& raw) {
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(raw, &used);
    if (used != raw.size() || raw.find('-') != std::string::npos) {
      throw std::invalid_argument("bad unsigned");
    }
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::config_error, "expected a non-negative integer, got '" + raw + "'");
  }
}

inline const std::map<std::string, KeySetter>& key_table() {
  static const std::map<std::string, KeySetter> table = {
      {"server.bind", [](Config& c, const std::string& v) { c.server.bind = v; }},
      {"server.mode", [](Config& c, const std::string& v) { c.server.mode = parse_difficulty_mode(v); }},
      {"server.return", [](Config& c, const std::string& v) { c.server.return_kind = parse_return_kind(v); }},
      {"server.puzzle_ttl_seconds",
       [](Config& c, const std::string& v) { c.server.puzzle_ttl_seconds = parse_integer(v); }},
      {"server.hash_alg", [](Config& c, const std::string& v) { c.server.hash_alg = parse_hash_alg(v); }},
      {"server.max_batch", [](Config& c, const std::string& v) { c.server.max_batch = parse_integer(v); }},
      {"server.snapshot", [](Config& c, const std::string& v) { c.server.snapshot = v; }},
      {"server.calibrator", [](Config& c, const std::string& v) { c.server.calibrator = v; }},
      {"accountant.metric_kind",
       [](Config& c, const std::string& v) { c.accountant.metric_kind = parse_metric_kind(v); }},
      {"accountant.sigma", [](Config& c, const std::string& v) { c.accountant.sigma = parse_number(v); }},
      {"accountant.sigma_g", [](Config& c, const std::string& v) { c.accountant.sigma_g = parse_number(v); }},
      {"accountant.lambda", [](Config& c, const std::string& v) { c.accountant.lambda = parse_number(v); }},
      {"accountant.delta2_sq",
       [](Config& c, const std::string& v) { c.accountant.delta2_sq = parse_number(v); }},
      {"accountant.pknn_k", [](Config& c, const std::string& v) { c.accountant.pknn_k = parse_integer(v); }},
      {"backend.dataset", [](Config& c, const std::string& v) { c.backend.dataset = v; }},
      {"backend.table", [](Config& c, const std::string& v) { c.backend.table = v; }},
      {"backend.n_teachers",
       [](Config& c, const std::string& v) { c.backend.n_teachers = parse_integer(v); }},
      {"backend.partition_seed",
       [](Config& c, const std::string& v) { c.backend.partition_seed = parse_unsigned(v); }},
      {"blobs.classes", [](Config& c, const std::string& v) { c.blobs.classes = parse_integer(v); }},
      {"blobs.dim", [](Config& c, const std::string& v) { c.blobs.dim = parse_integer(v); }},
      {"blobs.mu", [](Config& c, const std::string& v) { c.blobs.mu = parse_number(v); }},
      {"blobs.sigma_data", [](Config& c, const std::string& v) { c.blobs.sigma_data = parse_number(v); }},
      {"blobs.n_train", [](Config& c, const std::string& v) { c.blobs.n_train = parse_integer(v); }},
      {"blobs.seed", [](Config& c, const std::string& v) { c.blobs.seed = parse_unsigned(v); }},
      {"blobs.heldout", [](Config& c, const std::string& v) { c.blobs.heldout = parse_integer(v); }},
      {"blobs.box_scale", [](Config& c, const std::string& v) { c.blobs.box_scale = parse_number(v); }},
      {"calibration.a", [](Config& c, const std::string& v) { c.calibration.a = parse_number(v); }},
      {"calibration.a_q", [](Config& c, const std::string& v) { c.calibration.a_q = parse_number(v); }},
      {"calibration.k_min", [](Config& c, const std::string& v) { c.calibration.k_min = parse_integer(v); }},
      {"calibration.k_max", [](Config& c, const std::string& v) { c.calibration.k_max = parse_integer(v); }},
      {"calibration.time_unit_seconds",
       [](Config& c, const std::string& v) { c.calibration.time_unit_seconds = parse_number(v); }},
      {"harness.solve_threshold_bits",
       [](Config& c, const std::string& v) { c.harness.solve_threshold_bits = parse_integer(v); }},
      {"harness.in_out_p", [](Config& c, const std::string& v) { c.harness.in_out_p = parse_number(v); }},
      {"harness.batch", [](Config& c, const std::string& v) { c.harness.batch = parse_integer(v); }},
  };
  return table;
}

// Strips a trailing comment that is not inside a double-quoted string.
inline std::string_view strip_comment(std::string_view line) {
  bool in_quote = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_quote = !in_quote;
    if (line[i] == '#' && !in_quote) return line.substr(0, i);
  }
  return line;
}

// Raw scalar token -> value string. Quoted strings lose their quotes;
// everything else must look like a bare scalar (number, bool, enum word).
inline std::string parse_value_token(std::string_view token, int lineno) {
  const std::string where = "line " + std::to_string(lineno);
  if (token.empty()) throw Error(ErrorKind::config_error, where + ": missing value");
  if (token.front() == '"') {
    if (token.size() < 2 || token.back() != '"') {
      throw Error(ErrorKind::config_error, where + ": unterminated string");
    }
    const std::string_view inner = token.substr(1, token.size() - 2);
    if (inner.find('"') != std::string_view::npos) {
      throw Error(ErrorKind::config_error, where + ": embedded quote in string");
    }
    return std::string(inner);
  }
  for (char ch : token) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-' || ch == '+' ||
          ch == '_' || ch == 'e' || ch == 'E')) {
      throw Error(ErrorKind::config_error, where + ": unquoted value with unexpected character");
    }
  }
  return std::string(token);
}

}  // namespace detail

inline Config parse_config(const std::string& text, Config base = {}) {
  Config cfg = base;
  const auto& table = detail::key_table();
  std::string section;
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line(text.data() + pos, (nl == std::string::npos ? text.size() : nl) - pos);
    pos = (nl == std::string::npos) ? text.size() + 1 : nl + 1;
    ++lineno;
    line = trim(detail::strip_comment(line));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);

    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw Error(ErrorKind::config_error, where + ": malformed section header");
      }
      section = std::string(trim(line.substr(1, line.size() - 2)));
      bool known = false;
      for (const auto& [key, _] : table) {
        if (key.rfind(section + ".", 0) == 0) {
          known = true;
          break;
        }
      }
      if (!known) throw Error(ErrorKind::config_error, where + ": unknown section [" + section + "]");
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::config_error, where + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw Error(ErrorKind::config_error, where + ": empty key");
    if (section.empty()) {
      throw Error(ErrorKind::config_error, where + ": key '" + key + "' outside any [section]");
    }
    const std::string full = section + "." + key;
    const auto it = table.find(full);
    if (it == table.end()) {
      throw Error(ErrorKind::config_error, where + ": unknown key '" + full + "'");
    }
    const std::string value = detail::parse_value_token(trim(line.substr(eq + 1)), lineno);
    try {
      it->second(cfg, value);
    } catch (const Error& e) {
      throw Error(e.kind(), where + ": " + e.what());
    }
  }
  return cfg;
}

// Environment overrides: POWGATE_<SECTION>_<KEY>, e.g. POWGATE_SERVER_BIND.
// The lookup function is injectable for tests; defaults to getenv.
inline Config apply_env_overrides(
    Config cfg, const std::function<std::optional<std::string>(const std::string&)>& lookup =
                    [](const std::string& name) -> std::optional<std::string> {
      const char* v = std::getenv(name.c_str());
      if (v == nullptr) return std::nullopt;
      return std::string(v);
    }) {
  for (const auto& [full, setter] : detail::key_table()) {
    std::string env_name = "POWGATE_";
    for (char ch : full) {
      env_name += (ch == '.') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    }
    const auto value = lookup(env_name);
    if (!value) continue;
    try {
      setter(cfg, *value);
    } catch (const Error& e) {
      throw Error(e.kind(), env_name + ": " + e.what());
    }
  }
  return cfg;
}

inline Config load_config(const std::string& path, bool with_env = true) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io_error, "cannot read config " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Config cfg;
  try {
    cfg = parse_config(text);
  } catch (const Error& e) {
    throw Error(e.kind(), path + " " + e.what());
  }
  if (with_env) cfg = apply_env_overrides(cfg);
  cfg.validate();
  return cfg;
}

}  // namespace powgate
