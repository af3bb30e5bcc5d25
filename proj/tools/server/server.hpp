#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "airad/job.hpp"

namespace airad::service {

struct BindAddress {
  std::string host = "127.0.0.1";
  int port = 8080;
};

/// "host:port", ":port" or "port". InvalidArgument on malformed input.
BindAddress parse_bind_address(const std::string& text);
bool is_loopback(const std::string& host);

struct ServerOptions {
  BindAddress bind;
  bool allow_remote = false;
  std::optional<std::filesystem::path> static_dir;
  std::filesystem::path out_dir = "airad_out";
  std::size_t workers = 1;
};

/// Parses a POST /api/jobs body into a request. Model entries may be a path
/// to a weight or JSON spec file, or an inline binding object.
JobRequest parse_job_request(const std::string& body, const std::filesystem::path& default_out_dir);

/// HTTP/JSON front end over a JobManager. Routes:
///   POST /api/jobs, GET /api/jobs/{id}, GET /api/jobs/{id}/events (SSE),
///   GET /api/records?path=, GET /api/jobs/{id}/outputs/{stem}/{file}.
class Server {
 public:
  explicit Server(ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds the socket; port 0 picks a free port. BindFailure on error.
  int bind();
  /// Serves until stop(); call after bind().
  void listen();
  void stop();
  int port() const noexcept { return port_; }
  JobManager& jobs() noexcept { return *jobs_; }

 private:
  struct Impl;
  ServerOptions options_;
  std::unique_ptr<JobManager> jobs_;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace airad::service
