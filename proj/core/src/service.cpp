#include "popscope/service.hpp"

#include <httplib.h>

#include "popscope/error.hpp"
#include "popscope/probe.hpp"

namespace popscope {

using nlohmann::json;

namespace {

int status_for(const std::exception& e) {
  if (dynamic_cast<const InvalidArgument*>(&e)) return 400;
  if (dynamic_cast<const NotFound*>(&e)) return 404;
  if (dynamic_cast<const FixtureMiss*>(&e) || dynamic_cast<const TransportError*>(&e) ||
      dynamic_cast<const ProtocolError*>(&e)) {
    return 502;
  }
  if (dynamic_cast<const StorageError*>(&e)) return 500;
  if (dynamic_cast<const Error*>(&e)) return 422;
  return 500;
}

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("request body is not JSON: ") + e.what());
  }
}

}  // namespace

Service::Service(App& app)
    : app_(app), jobs_(std::make_unique<JobQueue>()), server_(std::make_unique<httplib::Server>()) {
  // httplib's default adds SO_REUSEPORT, which lets a second server share a busy port.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
  });
  routes();
}

Service::~Service() { stop(); }

void Service::routes() {
  auto& s = *server_;

  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      send(res, status_for(e), {{"error", error_body(e)}});
    } catch (...) {
      send(res, 500, {{"error", {{"kind", "InternalError"}, {"message", "unknown failure"}}}});
    }
  });

  auto sync = [this](auto op) {
    return [this, op](const httplib::Request& req, httplib::Response& res) {
      send(res, 200, op(app_, parse_body(req)));
    };
  };
  auto job = [this](std::string kind, auto op) {
    return [this, kind, op](const httplib::Request& req, httplib::Response& res) {
      json body = parse_body(req);
      const auto id = jobs_->submit(kind, [this, op, body] { return op(app_, body); });
      send(res, 202, {{"job_id", id}, {"status_url", "/api/jobs/" + id}});
    };
  };

  s.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
    send(res, 200, app_.health());
  });

  s.Post("/api/keywords/suggest", sync([](App& a, const json& b) { return a.suggest(b); }));
  s.Post("/api/keywords/validate", sync([](App& a, const json& b) { return a.validate(b); }));
  s.Post("/api/keywords/context", sync([](App& a, const json& b) { return a.context(b); }));
  s.Post("/api/collect", job("collect", [](App& a, const json& b) { return a.collect(b); }));
  s.Post("/api/embed", job("embed", [](App& a, const json& b) { return a.embed(b); }));
  s.Post("/api/projection/run",
         job("projection", [](App& a, const json& b) { return a.project(b); }));
  s.Get(R"(/api/projection/([^/]+)/points)",
        [this](const httplib::Request& req, httplib::Response& res) {
          send(res, 200, app_.points(req.matches[1]));
        });
  s.Post("/api/cluster", sync([](App& a, const json& b) { return a.cluster(b); }));
  s.Post("/api/exclude", sync([](App& a, const json& b) { return a.exclude(b); }));
  s.Post("/api/corpus/build", sync([](App& a, const json& b) { return a.corpus_build(b); }));
  s.Post("/api/probe/run", job("probe", [](App& a, const json& b) { return a.probe_run(b); }));
  s.Get(R"(/api/probe/([^/]+)/report)", [this](const httplib::Request& req, httplib::Response& res) {
    double threshold = kDefaultDeviationThreshold;
    if (req.has_param("threshold")) {
      try {
        threshold = std::stod(req.get_param_value("threshold"));
      } catch (const std::exception&) {
        throw InvalidArgument("threshold must be a number");
      }
    }
    send(res, 200, app_.probe_report(req.matches[1], threshold));
  });
  s.Get(R"(/api/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    auto st = jobs_->status(req.matches[1]);
    if (!st) throw NotFound("job '" + std::string(req.matches[1]) + "'");
    send(res, 200, *st);
  });

  if (!app_.config().static_dir.empty()) {
    s.set_mount_point("/", app_.config().static_dir.string());
  }
}

int Service::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
  return bound;
}

void Service::listen() { server_->listen_after_bind(); }

void Service::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

}  // namespace popscope
