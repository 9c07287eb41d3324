#pragma once

// HTTP adapter around the Gateway: two JSON endpoints, error-kind to status
// mapping, and a thread-owning listen/stop pair for embedding in tests and
// the CLI.

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "powgate/errors.hpp"
#include "powgate/server.hpp"

namespace powgate {

inline int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::rejected_input:
    case ErrorKind::parse_error:
      return 400;
    case ErrorKind::oversized_batch:
      return 413;
    case ErrorKind::not_found:
      return 404;
    case ErrorKind::replay_rejected:
      return 409;
    case ErrorKind::puzzle_expired:
      return 410;
    case ErrorKind::solution_invalid:
      return 422;
    default:
      return 500;
  }
}

class HttpGateway {
 public:
  explicit HttpGateway(Gateway& core) : core_(core) {
    server_.Post("/v1/query", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [this](const nlohmann::json& body) {
        if (!body.contains("user_id") || !body["user_id"].is_string()) {
          throw Error(ErrorKind::rejected_input, "user_id must be a string");
        }
        if (!body.contains("queries") || !body["queries"].is_array()) {
          throw Error(ErrorKind::rejected_input, "queries must be an array of arrays");
        }
        std::vector<std::vector<double>> batch;
        batch.reserve(body["queries"].size());
        for (const auto& row : body["queries"]) {
          if (!row.is_array()) throw Error(ErrorKind::rejected_input, "query must be an array");
          std::vector<double> q;
          q.reserve(row.size());
          for (const auto& v : row) {
            if (!v.is_number()) throw Error(ErrorKind::rejected_input, "query values must be numbers");
            q.push_back(v.get<double>());
          }
          batch.push_back(std::move(q));
        }
        const PuzzleOffer offer = core_.handle_query(body["user_id"].get<std::string>(), batch);
        return nlohmann::json{{"puzzle_id", offer.puzzle_id},
                              {"challenge", offer.challenge},
                              {"bits", offer.bits},
                              {"expires_at", offer.expires_at}};
      });
    });

    server_.Post("/v1/solution", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [this](const nlohmann::json& body) {
        if (!body.contains("puzzle_id") || !body["puzzle_id"].is_string() ||
            !body.contains("solution") || !body["solution"].is_string()) {
          throw Error(ErrorKind::rejected_input, "need puzzle_id and solution strings");
        }
        const Predictions pred = core_.handle_solution(body["puzzle_id"].get<std::string>(),
                                                       body["solution"].get<std::string>());
        nlohmann::json out{{"labels", pred.labels}};
        if (pred.probs) out["probs"] = *pred.probs;
        return out;
      });
    });
  }

  ~HttpGateway() { stop(); }

  // Binds immediately (throwing on failure), then serves on its own thread.
  void start(const std::string& host, int port) {
    if (!server_.bind_to_port(host, port)) {
      throw Error(ErrorKind::transport_error,
                  "cannot bind " + host + ":" + std::to_string(port));
    }
    port_ = port;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  // Binds an ephemeral port; returns it.
  int start_any_port(const std::string& host) {
    const int port = server_.bind_to_any_port(host);
    if (port <= 0) throw Error(ErrorKind::transport_error, "cannot bind " + host);
    port_ = port;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  int port() const { return port_; }
  Gateway& core() { return core_; }

  // Serves on the calling thread (CLI `serve` path).
  void run(const std::string& host, int port) {
    if (!server_.bind_to_port(host, port)) {
      throw Error(ErrorKind::transport_error,
                  "cannot bind " + host + ":" + std::to_string(port));
    }
    port_ = port;
    server_.listen_after_bind();
  }

 private:
  template <typename Fn>
  void handle(const httplib::Request& req, httplib::Response& res, Fn&& fn) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const std::exception& e) {
      fail(res, ErrorKind::parse_error, std::string("bad JSON: ") + e.what());
      return;
    }
    try {
      const nlohmann::json out = fn(body);
      res.status = 200;
      res.set_content(out.dump(), "application/json");
    } catch (const Error& e) {
      fail(res, e.kind(), e.what());
    } catch (const std::exception& e) {
      fail(res, ErrorKind::internal_bug, e.what());
    }
  }

  static void fail(httplib::Response& res, ErrorKind kind, const std::string& message) {
    res.status = status_for(kind);
    res.set_content(nlohmann::json{{"error", to_string(kind)}, {"message", message}}.dump(),
                    "application/json");
  }

  Gateway& core_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace powgate
