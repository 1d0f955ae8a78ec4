#include "cogscreen/service.h"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "cogscreen/error.h"

namespace cogscreen {

using nlohmann::json;

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const NotFoundError& e) {
    reply(res, 404, {{"error", e.what()}});
  } catch (const ConflictError& e) {
    reply(res, 409, {{"error", e.what()}});
  } catch (const ConfigError& e) {
    reply(res, 400, {{"error", e.what()}});
  } catch (const json::exception& e) {
    reply(res, 400, {{"error", std::string("bad request body: ") + e.what()}});
  } catch (const std::exception& e) {
    spdlog::error("request failed: {}", e.what());
    reply(res, 500, {{"error", e.what()}});
  }
}

std::string annotator_of(const httplib::Request& req, const json& body) {
  if (body.is_object() && body.contains("annotator")) return body["annotator"].get<std::string>();
  if (req.has_param("annotator")) return req.get_param_value("annotator");
  return "anonymous";
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  return json::parse(req.body);
}

}  // namespace

AnnotationService::AnnotationService(ActiveLoop& loop, std::filesystem::path static_dir)
    : loop_(loop), static_dir_(std::move(static_dir)), server_(std::make_unique<httplib::Server>()) {
  routes();
}

AnnotationService::~AnnotationService() { stop(); }

void AnnotationService::routes() {
  auto& s = *server_;
  s.Get("/api/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto task = loop_.board().checkout(annotator_of(req, json()));
      if (!task) {
        res.status = 204;
        return;
      }
      reply(res, 200, to_json(*task));
    });
  });
  s.Get(R"(/api/tasks/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, loop_.task_view(req.matches[1])); });
  });
  s.Post(R"(/api/tasks/([^/]+)/label)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req);
      if (!body.contains("label")) throw ConfigError("request body needs a \"label\" field");
      const auto label = parse_annotation_label(body.at("label").get<std::string>());
      reply(res, 200, to_json(loop_.board().submit_label(req.matches[1], label, annotator_of(req, body))));
    });
  });
  s.Post(R"(/api/tasks/([^/]+)/skip)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, to_json(loop_.board().skip(req.matches[1], annotator_of(req, parse_body(req))))); });
  });
  s.Get("/api/metrics", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, loop_.metrics()); });
  });
  s.Post("/api/iterate", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, to_json(loop_.run_iteration(true))); });
  });
  if (!static_dir_.empty() && !s.set_mount_point("/", static_dir_.string())) {
    throw ConfigError("static directory does not exist: " + static_dir_.string());
  }
}

int AnnotationService::start(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void AnnotationService::run(const std::string& host, int port) {
  spdlog::info("serving on http://{}:{}", host, port);
  if (!server_->listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

void AnnotationService::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace cogscreen
