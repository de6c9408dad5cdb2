#pragma once

#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>

#include "gridcut/network.hpp"
#include "gridcut/orchestrator.hpp"

namespace gridcut {

struct ApiResponse {
  int status = 200;
  std::string body;  // JSON
};

/// JSON API over one Session.
///
///   GET  /state       network state, FT and RTCA results of the current step
///   POST /outage      {"branch": name or id}
///   POST /solve       {"modes": [...]} (default: ica and rca, concurrently)
///   GET  /solutions   solutions stored for the current step
///   POST /commit      {"mode": "ica" | "rca" | "sced" | "dcopf"}
///   GET  /cascade     cascade-triggering contingencies of the current state
///   POST /reset       back to the base case
///
/// Mutations answer 409 while another mutation runs, when "expected_step" in
/// the body does not match the session, or when committing a mode with no
/// available solution. Malformed bodies and unknown branches or modes get 422.
class ApiServer {
 public:
  explicit ApiServer(Network net, double top_fraction = 0.30);
  ~ApiServer();

  ApiResponse handle(std::string_view method, std::string_view path, std::string_view body = {});

  /// Serves until stop(). Returns false when the socket cannot be bound.
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port and serves on a background thread; returns the port.
  int start_background(const std::string& host = "127.0.0.1");
  void stop();

  /// Holds the mutation lock, as a long-running mutation would.
  std::unique_lock<std::shared_mutex> hold_mutations();

 private:
  ApiResponse state() const;
  ApiResponse outage(std::string_view body);
  ApiResponse solve(std::string_view body);
  ApiResponse solutions() const;
  ApiResponse commit(std::string_view body);
  ApiResponse cascade() const;
  ApiResponse reset(std::string_view body);

  struct Http;
  Session session_;
  mutable std::shared_mutex mutex_;
  std::unique_ptr<Http> http_;
};

}  // namespace gridcut
