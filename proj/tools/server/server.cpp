#include "server.hpp"

#include <charconv>
#include <fstream>
#include <iterator>
#include <string_view>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "airad/records.hpp"

namespace airad::service {
namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const std::string& body) {
  res.status = status;
  res.set_content(body, "application/json; charset=utf-8");
}

void send_error(httplib::Response& res, int status, const std::string& message, std::string_view code = {}) {
  json j = {{"error", message}};
  if (!code.empty()) j["code"] = std::string(code);
  send_json(res, status, j.dump());
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoFailure: return 404;
    default: return 400;
  }
}

ModelBinding binding_from(const json& j) {
  if (j.is_string()) return ModelBinding::from_file(j.get<std::string>());
  return ModelBinding::from_json_text(j.dump());
}

bool safe_relative(const std::string& rel) {
  if (rel.empty() || rel.front() == '/') return false;
  for (const auto& part : std::filesystem::path(rel))
    if (part == ".." || part == ".") return false;
  return true;
}

}  // namespace

BindAddress parse_bind_address(const std::string& text) {
  BindAddress b;
  std::string port_text = text;
  if (const auto colon = text.rfind(':'); colon != std::string::npos) {
    if (colon > 0) b.host = text.substr(0, colon);
    port_text = text.substr(colon + 1);
  }
  if (b.host.size() > 2 && b.host.front() == '[' && b.host.back() == ']') b.host = b.host.substr(1, b.host.size() - 2);
  int port = -1;
  const auto r = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (r.ec != std::errc() || r.ptr != port_text.data() + port_text.size() || port < 0 || port > 65535)
    throw Error(ErrorCode::InvalidArgument, "bad bind address '" + text + "'");
  b.port = port;
  return b;
}

bool is_loopback(const std::string& host) {
  return host == "localhost" || host == "::1" || host.rfind("127.", 0) == 0;
}

JobRequest parse_job_request(const std::string& body, const std::filesystem::path& default_out_dir) {
  JobRequest req;
  req.out_dir = default_out_dir;
  try {
    const json j = json::parse(body);
    for (const auto& v : j.at("volumes")) req.volumes.emplace_back(v.get<std::string>());
    if (j.contains("config")) req.config = CascadeConfig::from_json(j.at("config").dump());
    const auto& models = j.at("models");
    req.config.liver_model = binding_from(models.at("liver"));
    req.config.tumor_model = binding_from(models.at("tumor"));
    req.config.vessel_model = binding_from(models.at("vessel"));
    if (j.contains("out_dir")) req.out_dir = j.at("out_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("job request: ") + e.what());
  }
  req.config.validate();
  return req;
}

struct Server::Impl {
  httplib::Server http;
};

Server::Server(ServerOptions options)
    : options_(std::move(options)), jobs_(std::make_unique<JobManager>(options_.workers)), impl_(std::make_unique<Impl>()) {
  auto& http = impl_->http;

  http.Post("/api/jobs", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      auto job = jobs_->submit(parse_job_request(req.body, options_.out_dir));
      send_json(res, 202, json{{"id", job->id()}}.dump());
    } catch (const Error& e) {
      send_error(res, 400, e.message(), to_string(e.code()));
    }
  });

  http.Get(R"(/api/jobs/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const auto job = jobs_->find(req.matches[1]);
    if (!job) return send_error(res, 404, "unknown job");
    send_json(res, 200, job->to_json());
  });

  http.Get(R"(/api/jobs/([^/]+))", [](const httplib::Request&, httplib::Response& res) {
    send_error(res, 404, "unknown job");
  });

  http.Get(R"(/api/jobs/([0-9a-f]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
    const auto job = jobs_->find(req.matches[1]);
    if (!job) return send_error(res, 404, "unknown job");
    std::uint64_t last = 0;
    if (req.has_header("Last-Event-ID")) {
      const std::string h = req.get_header_value("Last-Event-ID");
      std::from_chars(h.data(), h.data() + h.size(), last);
    }
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [job, last](std::size_t, httplib::DataSink& sink) mutable {
      job->wait_for_events(last, std::chrono::milliseconds(500));
      const auto events = job->events_after(last);
      for (const auto& e : events) {
        const std::string frame = "id: " + std::to_string(e.seq) + "\nevent: progress\ndata: " + e.to_json() + "\n\n";
        if (!sink.write(frame.data(), frame.size())) return false;
        last = e.seq;
      }
      if (events.empty() && !job->finished()) {
        static constexpr char kKeepAlive[] = ": keep-alive\n\n";
        if (!sink.write(kKeepAlive, sizeof kKeepAlive - 1)) return false;
      }
      if (job->finished() && job->events_after(last).empty()) sink.done();
      return true;
    });
  });

  http.Get(R"(/api/jobs/([0-9a-f]+)/outputs/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
    const auto job = jobs_->find(req.matches[1]);
    if (!job) return send_error(res, 404, "unknown job");
    const std::string rel = req.matches[2];
    if (!safe_relative(rel)) return send_error(res, 400, "invalid output path");
    bool listed = false;
    for (const auto& v : job->volumes())
      for (const auto& f : v.outputs) listed = listed || rel == v.stem + "/" + f;
    if (!listed) return send_error(res, 404, "no such output");
    const auto path = job->request().out_dir / rel;
    std::ifstream f(path, std::ios::binary);
    if (!f) return send_error(res, 404, "output missing on disk");
    std::string data{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    const bool text = rel.ends_with(".obj") || rel.ends_with(".mtl");
    res.set_header("Content-Disposition", "attachment; filename=\"" + path.filename().string() + "\"");
    res.set_content(std::move(data), text ? "text/plain; charset=utf-8" : "application/gzip");
  });

  http.Get("/api/records", [](const httplib::Request& req, httplib::Response& res) {
    if (!req.has_param("path")) return send_error(res, 400, "missing path parameter");
    try {
      send_json(res, 200, to_json(inspect_record(req.get_param_value("path"))));
    } catch (const Error& e) {
      send_error(res, status_for(e.code()), e.message(), to_string(e.code()));
    } catch (const std::exception& e) {
      send_error(res, 400, e.what());
    }
  });

  if (options_.static_dir && !http.set_mount_point("/", options_.static_dir->string()))
    throw Error(ErrorCode::InvalidArgument, "static directory not found: " + options_.static_dir->string());
}

Server::~Server() {
  stop();
}

int Server::bind() {
  if (!options_.allow_remote && !is_loopback(options_.bind.host))
    throw Error(ErrorCode::BindFailure, "refusing non-loopback address " + options_.bind.host + " without remote opt-in");
  auto& http = impl_->http;
  if (options_.bind.port == 0) {
    port_ = http.bind_to_any_port(options_.bind.host);
    if (port_ < 0) throw Error(ErrorCode::BindFailure, "cannot bind " + options_.bind.host);
  } else {
    if (!http.bind_to_port(options_.bind.host, options_.bind.port))
      throw Error(ErrorCode::BindFailure, "cannot bind " + options_.bind.host + ":" + std::to_string(options_.bind.port));
    port_ = options_.bind.port;
  }
  return port_;
}

void Server::listen() { impl_->http.listen_after_bind(); }

void Server::stop() {
  if (impl_) impl_->http.stop();
}

}  // namespace airad::service
