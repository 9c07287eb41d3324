// Command-line front end: serve the gateway over HTTP, act as a solving
// client, replay attack strategies against an in-process gateway, benchmark
// the solver, and fit calibrators from traces and benchmarks.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "powgate/client.hpp"
#include "powgate/config.hpp"
#include "powgate/harness.hpp"
#include "powgate/http_server.hpp"

namespace {

using namespace powgate;

Config load_or_default(const std::string& path) {
  if (!path.empty()) return load_config(path);
  Config cfg = apply_env_overrides(Config{});
  cfg.validate();
  return cfg;
}

BackendBundle build_backend(const Config& cfg) {
  if (!cfg.backend.table.empty()) return make_table_backend(cfg.backend.table);
  if (!cfg.backend.dataset.empty()) {
    const Dataset ds = load_dataset(cfg.backend.dataset);
    return make_backend(ds, static_cast<std::size_t>(cfg.backend.n_teachers),
                        cfg.backend.partition_seed);
  }
  const Dataset ds = make_blobs(cfg.blobs.to_blob_config());
  return make_backend(ds, static_cast<std::size_t>(cfg.backend.n_teachers),
                      cfg.backend.partition_seed);
}

// Built-in calibrator for when no fitted file is configured: flat legit
// prediction, ideal benchmark shape at the measured hash rate, and the
// serving baseline pinned at k0 bits of work.
Calibrator default_calibrator(const CalibrationConfig& cc, HashAlg alg, int k0 = 8) {
  const double t_hash = measure_hash_seconds(make_digest(alg), 200'000);
  const double ln2 = std::log(2.0);
  Calibrator cal;
  cal.legit_model = {0.0, 0.0};
  cal.bits_model = {1.0 / ln2, -std::log(t_hash) / ln2};
  cal.a = cc.a;
  cal.a_q = cc.a_q;
  cal.k_min = static_cast<int>(cc.k_min);
  cal.k_max = static_cast<int>(cc.k_max);
  cal.time_unit_seconds =
      cc.time_unit_seconds > 0 ? cc.time_unit_seconds : std::ldexp(t_hash, k0);
  cal.validate();
  return cal;
}

Calibrator build_calibrator(const Config& cfg) {
  if (!cfg.server.calibrator.empty()) return Calibrator::load(cfg.server.calibrator);
  return default_calibrator(cfg.calibration, cfg.server.hash_alg);
}

GatewayOptions gateway_options(const Config& cfg) {
  GatewayOptions o;
  o.mode = cfg.server.mode;
  o.return_kind = cfg.server.return_kind;
  o.hash_alg = cfg.server.hash_alg;
  o.puzzle_ttl_seconds = cfg.server.puzzle_ttl_seconds;
  o.max_batch = cfg.server.max_batch;
  return o;
}

std::pair<std::string, int> split_bind(const std::string& bind) {
  const std::size_t colon = bind.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == bind.size()) {
    throw Error(ErrorKind::config_error, "server.bind must be host:port, got '" + bind + "'");
  }
  int port = 0;
  try {
    port = std::stoi(bind.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorKind::config_error, "server.bind has a non-numeric port: '" + bind + "'");
  }
  if (port < 1 || port > 65535) {
    throw Error(ErrorKind::config_error, "server.bind port out of range: '" + bind + "'");
  }
  return {bind.substr(0, colon), port};
}

std::atomic<bool> g_stop{false};
void request_stop(int) { g_stop.store(true); }

int run_serve(const std::string& config_path) {
  const Config cfg = load_or_default(config_path);
  BackendBundle bundle = build_backend(cfg);
  CostMeter meter{cfg.accountant.to_accountant_config(), &bundle,
                  static_cast<int>(cfg.accountant.pknn_k)};
  Gateway gw(build_calibrator(cfg), meter, gateway_options(cfg));
  if (!cfg.server.snapshot.empty()) gw.restore(cfg.server.snapshot, /*empty_ok=*/true);

  const auto [host, port] = split_bind(cfg.server.bind);
  HttpGateway http(gw);
  http.start(host, port);
  std::signal(SIGINT, request_stop);
  std::signal(SIGTERM, request_stop);
  std::cout << "listening on " << host << ":" << port << std::endl;

  auto last_housekeeping = std::chrono::steady_clock::now();
  while (!g_stop.load()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    const auto now = std::chrono::steady_clock::now();
    if (now - last_housekeeping >= std::chrono::seconds(30)) {
      gw.collect_garbage();
      if (!cfg.server.snapshot.empty()) gw.snapshot(cfg.server.snapshot);
      last_housekeeping = now;
    }
  }
  http.stop();
  gw.collect_garbage();
  if (!cfg.server.snapshot.empty()) gw.snapshot(cfg.server.snapshot);
  std::cout << "shut down cleanly" << std::endl;
  return 0;
}

int run_client(const std::string& endpoint, const std::string& user, const std::string& input,
               const std::string& output, const std::string& report, const std::string& alg) {
  ClientConfig cc;
  cc.endpoint = endpoint;
  cc.user_id = user;
  cc.hash_alg = parse_hash_alg(alg);
  ClientSession session(cc);
  const std::vector<std::vector<double>> batch = load_query_csv(input);
  const QueryResult res = session.query(batch);
  save_predictions_csv(output, res.predictions);
  if (!report.empty()) {
    std::ofstream out(report);
    if (!out) throw Error(ErrorKind::io_error, "cannot write " + report);
    out << session.report_json().dump(2) << '\n';
  }
  std::cout << batch.size() << " queries answered at " << res.report.bits << " bits ("
            << res.report.trials << " trials, " << res.report.solve_seconds
            << " s solving)" << std::endl;
  return 0;
}

int run_simulate(const std::string& strategy_str, std::size_t queries, std::size_t batch,
                 std::uint64_t seed, const std::string& config_path, const std::string& out,
                 const std::string& svg) {
  const Config cfg = load_or_default(config_path);
  const StrategyKind strategy = strategy_from_string(strategy_str);
  if (!cfg.backend.table.empty()) {
    throw Error(ErrorKind::config_error,
                "simulate needs a model backend; table backends replay fixed query ids");
  }
  BackendBundle bundle = build_backend(cfg);
  CostMeter meter{cfg.accountant.to_accountant_config(), &bundle,
                  static_cast<int>(cfg.accountant.pknn_k)};
  GatewayOptions opts = gateway_options(cfg);
  opts.rng_seed = seed;
  Gateway gw(build_calibrator(cfg), meter, opts);

  // Candidate pools: a held-out in-distribution sample and a widened-box
  // sample, seeded adjacent to (but distinct from) the training stream.
  const std::size_t n_pool = std::max<std::size_t>(static_cast<std::size_t>(cfg.blobs.heldout),
                                                   queries);
  BlobConfig ind_cfg = cfg.blobs.to_blob_config();
  ind_cfg.n_train = static_cast<int>(n_pool);
  ind_cfg.seed = cfg.blobs.seed + 1;
  Pools pools;
  pools.ind = make_blobs(ind_cfg).features;
  pools.box = make_box_pool(*bundle.train, n_pool, cfg.blobs.seed + 2, cfg.blobs.box_scale);

  SimOptions so;
  so.n_queries = queries;
  so.batch = batch > 0 ? batch : static_cast<std::size_t>(cfg.harness.batch);
  so.seed = seed;
  so.solve_threshold_bits = static_cast<int>(cfg.harness.solve_threshold_bits);
  so.in_out_p = cfg.harness.in_out_p;
  const TraceReport rep = simulate(gw, strategy, pools, so);

  // `--out` may name a directory (trailing slash or existing dir); the
  // trace lands there as <strategy>.csv with a companion <strategy>.svg.
  if (out.empty()) throw Error(ErrorKind::rejected_input, "--out must not be empty");
  std::string out_csv = out, out_svg = svg;
  if (out.back() == '/' || std::filesystem::is_directory(out)) {
    std::filesystem::create_directories(out);
    const std::string stem = (std::filesystem::path(out) / to_string(strategy)).string();
    out_csv = stem + ".csv";
    if (out_svg.empty()) out_svg = stem + ".svg";
  }
  rep.save(out_csv);
  if (!out_svg.empty()) {
    Series s;
    s.name = to_string(strategy);
    for (const BatchRow& r : rep.rows) {
      s.points.emplace_back(static_cast<double>(r.query_count), r.cumulative_cost);
    }
    write_overlay_svg(out_svg, "cumulative privacy cost", "queries answered", "cumulative cost",
                      {s});
  }
  const double final_cost = rep.rows.empty() ? 0.0 : rep.rows.back().cumulative_cost;
  std::cout << to_string(strategy) << ": " << rep.rows.size() << " batches, cumulative cost "
            << final_cost << ", overhead factor " << rep.overhead_factor
            << (rep.truncated ? " (pool exhausted)" : "") << " -> " << out_csv << std::endl;
  return 0;
}

std::pair<int, int> parse_bits_range(const std::string& text) {
  const auto parse_one = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorKind::rejected_input, "--bits expects lo..hi, got '" + text + "'");
    }
  };
  const std::size_t dots = text.find("..");
  if (dots == std::string::npos) {
    const int k = parse_one(text);
    return {k, k};
  }
  const int lo = parse_one(text.substr(0, dots));
  const int hi = parse_one(text.substr(dots + 2));
  if (lo > hi) throw Error(ErrorKind::rejected_input, "--bits range is empty: '" + text + "'");
  return {lo, hi};
}

int run_bench(const std::string& bits_range, int reps, const std::string& out,
              const std::string& alg, std::uint64_t seed) {
  const auto [lo, hi] = parse_bits_range(bits_range);
  std::mt19937_64 rng(seed);
  const BenchTable table = benchmark(lo, hi, reps, make_digest(parse_hash_alg(alg)), rng);
  if (out.empty()) {
    std::cout << table.to_csv();
  } else {
    table.save(out);
    std::cout << "wrote " << table.rows.size() << " rows to " << out << std::endl;
  }
  return 0;
}

// Accepts either a bare cost trace (query_count,cumulative_cost) or a full
// simulation report, whose cost trace is extracted.
Trace load_any_trace(const std::string& path) {
  try {
    return TraceReport::load(path).cost_trace();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::io_error) throw;
    return load_trace_csv(path);
  }
}

int run_calibrate(const std::vector<std::string>& trace_paths, const std::string& bench_path,
                  const std::string& out, const std::string& config_path, int k0) {
  const CalibrationConfig cc =
      config_path.empty() ? CalibrationConfig{} : load_config(config_path).calibration;

  // `--traces` entries may be files or directories; a directory contributes
  // every .csv inside it.
  std::vector<std::string> files;
  for (const std::string& p : trace_paths) {
    if (std::filesystem::is_directory(p)) {
      std::vector<std::string> found;
      for (const auto& e : std::filesystem::directory_iterator(p)) {
        if (e.is_regular_file() && e.path().extension() == ".csv") {
          found.push_back(e.path().string());
        }
      }
      if (found.empty()) {
        throw Error(ErrorKind::rejected_input, "no .csv traces in directory " + p);
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(p);
    }
  }
  std::vector<Trace> traces;
  traces.reserve(files.size());
  for (const std::string& p : files) traces.push_back(load_any_trace(p));
  const BenchTable bench = BenchTable::load(bench_path);

  Calibrator cal;
  cal.legit_model = fit_legit_model(traces);
  cal.bits_model = fit_bits_model(bench);
  cal.a = cc.a;
  cal.a_q = cc.a_q;
  cal.k_min = static_cast<int>(cc.k_min);
  cal.k_max = static_cast<int>(cc.k_max);
  if (cc.time_unit_seconds > 0) {
    cal.time_unit_seconds = cc.time_unit_seconds;
  } else {
    // Serving baseline: the measured mean solve time at the operating bits.
    cal.time_unit_seconds = 0;
    for (const BenchRow& r : bench.rows) {
      if (r.bits == k0) cal.time_unit_seconds = r.mean_solve_seconds;
    }
    if (cal.time_unit_seconds <= 0) {
      throw Error(ErrorKind::config_error,
                  "bench table has no row at " + std::to_string(k0) +
                      " bits; pass --k0 or set calibration.time_unit_seconds");
    }
  }
  cal.validate();
  cal.save(out);
  std::cout << "calibrator: legit slope " << cal.legit_model.slope << ", bits slope "
            << cal.bits_model.slope << ", time unit " << cal.time_unit_seconds << " s -> "
            << out << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"proof-of-work gateway for rate-limiting model extraction"};
  app.require_subcommand(1);

  std::string serve_config;
  CLI::App* serve = app.add_subcommand("serve", "run the HTTP gateway");
  serve->add_option("--config", serve_config, "TOML config path (defaults + env when omitted)");

  std::string cl_endpoint = "http://127.0.0.1:8787";
  std::string cl_user, cl_input, cl_output, cl_report;
  std::string cl_alg = "sha1";
  CLI::App* client = app.add_subcommand("client", "solve a puzzle and fetch predictions");
  client->add_option("--endpoint", cl_endpoint, "gateway base URL");
  client->add_option("--user", cl_user, "account id presented to the gateway")->required();
  client->add_option("--input", cl_input, "query CSV (header f0..fN)")->required();
  client->add_option("--output", cl_output, "predictions CSV to write")->required();
  client->add_option("--report", cl_report, "solve-report JSON to write");
  client->add_option("--hash-alg", cl_alg, "digest the gateway verifies with (sha1|sha256)");

  std::string sim_strategy, sim_config, sim_out, sim_svg;
  std::uint64_t sim_queries = 1000, sim_batch = 0, sim_seed = 1;
  CLI::App* sim = app.add_subcommand("simulate", "replay an attack strategy in process");
  sim->add_option("--strategy", sim_strategy,
                  "standard|ood_random|worst_case|in_out|entropy_al|entropy_rev|gap_al")
      ->required();
  sim->add_option("--queries", sim_queries, "total queries to spend");
  sim->add_option("--batch", sim_batch, "queries per batch (0 = from config)");
  sim->add_option("--seed", sim_seed, "strategy and gateway RNG seed");
  sim->add_option("--config", sim_config, "TOML config path (defaults + env when omitted)");
  sim->add_option("--out", sim_out, "trace CSV to write")->required();
  sim->add_option("--svg", sim_svg, "optional cost-curve SVG to write");

  std::string bench_bits = "4..12", bench_out, bench_alg = "sha1";
  int bench_reps = 100;
  std::uint64_t bench_seed = 1;
  CLI::App* bench = app.add_subcommand("bench-pow", "time the solver across difficulties");
  bench->add_option("--bits", bench_bits, "difficulty range lo..hi");
  bench->add_option("--reps", bench_reps, "repetitions per difficulty");
  bench->add_option("--out", bench_out, "bench CSV to write (stdout when omitted)");
  bench->add_option("--hash-alg", bench_alg, "digest to benchmark (sha1|sha256)");
  bench->add_option("--seed", bench_seed, "challenge RNG seed");

  std::vector<std::string> cal_traces;
  std::string cal_bench, cal_out, cal_config;
  int cal_k0 = 8;
  CLI::App* cal = app.add_subcommand("calibrate", "fit a calibrator from traces and a bench");
  cal->add_option("--traces", cal_traces, "legit trace CSVs (repeatable)")
      ->required()
      ->expected(-1);
  cal->add_option("--bench", cal_bench, "solver bench CSV")->required();
  cal->add_option("--out", cal_out, "calibrator JSON to write")->required();
  cal->add_option("--config", cal_config, "TOML config supplying [calibration] parameters");
  cal->add_option("--k0", cal_k0, "operating bits whose bench time sets the time unit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (serve->parsed()) return run_serve(serve_config);
    if (client->parsed()) {
      return run_client(cl_endpoint, cl_user, cl_input, cl_output, cl_report, cl_alg);
    }
    if (sim->parsed()) {
      return run_simulate(sim_strategy, static_cast<std::size_t>(sim_queries),
                          static_cast<std::size_t>(sim_batch), sim_seed, sim_config, sim_out,
                          sim_svg);
    }
    if (bench->parsed()) return run_bench(bench_bits, bench_reps, bench_out, bench_alg, bench_seed);
    if (cal->parsed()) return run_calibrate(cal_traces, cal_bench, cal_out, cal_config, cal_k0);
  } catch (const powgate::Error& e) {
    std::cerr << "error (" << powgate::to_string(e.kind()) << "): " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
