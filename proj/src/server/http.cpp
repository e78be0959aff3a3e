#include "tablebench/server/http.hpp"

#include <httplib.h>

#include <charconv>

#include "tablebench/protocol/json.hpp"

namespace tb::server {
namespace {

void send_json(httplib::Response& res, const Json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message, Json extra = Json::object()) {
  Json body{{"error", to_string(code)}, {"message", message}};
  body.update(extra);
  send_json(res, body, http_status(code));
}

template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const DecodeError& e) {
    send_error(res, ErrorCode::kDecode, e.what(), {{"position", e.position()}, {"expected", e.expected()}, {"path", e.path()}});
  } catch (const Error& e) {
    send_error(res, e.code(), e.what());
  } catch (const ShapeError& e) {
    send_error(res, ErrorCode::kDecode, e.what(), {{"path", e.path}, {"expected", e.expected}});
  } catch (const nlohmann::json::exception& e) {
    send_error(res, ErrorCode::kDecode, e.what());
  } catch (const std::exception& e) {
    send_error(res, ErrorCode::kInternal, e.what());
  }
}

std::optional<std::string> header(const httplib::Request& req, std::string_view name) {
  const std::string key(name);
  if (!req.has_header(key)) return std::nullopt;
  return req.get_header_value(key);
}

std::string param(const httplib::Request& req, const std::string& name, const std::string& fallback) {
  return req.has_param(name) ? req.get_param_value(name) : fallback;
}

Json body_or_empty(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  auto j = parse_json(req.body);
  if (!j.is_object()) throw DecodeError(0, "JSON object", "request body is not an object", "/");
  return j;
}

}  // namespace

HttpServer::HttpServer(Platform& platform, const KeyRegistry& keys)
    : platform_(platform), keys_(keys), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) throw Error(ErrorCode::kUnavailable, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void HttpServer::run(const std::string& host, int port) {
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) throw Error(ErrorCode::kUnavailable, "cannot bind " + host + ":" + std::to_string(port));
  server_->listen_after_bind();
}

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

void HttpServer::install_routes() {
  auto& s = *server_;
  auto& p = platform_;
  const auto who = [this](const httplib::Request& req) { return keys_.authenticate(header(req, kApiKeyHeader)); };
  using Req = httplib::Request;
  using Res = httplib::Response;
  // Role checked before the request is parsed further.
  const auto tester = [who](const Req& req) {
    auto w = who(req);
    if (!w.tester()) throw Error(ErrorCode::kForbidden, "tester role required");
    return w;
  };

  s.Get("/api/v1/health", [](const Req&, Res& res) { send_json(res, {{"status", "ok"}}); });
  s.Get("/api/v1/whoami", [=](const Req& req, Res& res) {
    guarded(res, [&] {
      const auto w = who(req);
      send_json(res, {{"role", w.tester() ? "tester" : "user"}, {"name", w.name}, {"key_sha256", w.key_hash}});
    });
  });

  // Robots.
  s.Get("/api/v1/robots", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      who(req);
      send_json(res, p.robots_json());
    });
  });
  s.Get(R"(/api/v1/robots/([^/]+))", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      who(req);
      send_json(res, p.robot_json(req.matches[1]));
    });
  });
  s.Post(R"(/api/v1/robots/([^/]+)/capture)", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      const auto w = who(req);
      const auto request = req.body.empty() ? CaptureRequest{} : from_json_text<CaptureRequest>(req.body);
      send_json(res, p.capture(w, req.matches[1], request));
    });
  });
  s.Post(R"(/api/v1/robots/([^/]+)/actions)", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      const auto w = who(req);
      const auto chunk = from_json_text<ActionChunk>(req.body);
      send_json(res, p.enqueue(w, req.matches[1], chunk, header(req, kRolloutHeader)));
    });
  });
  s.Get(R"(/api/v1/robots/([^/]+)/queue)", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] { send_json(res, p.queue(who(req), req.matches[1])); });
  });
  s.Get(R"(/api/v1/robots/([^/]+)/sim_state)", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] { send_json(res, p.sim_state(who(req), req.matches[1])); });
  });
  s.Post(R"(/api/v1/robots/([^/]+)/reset)", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      const auto w = tester(req);
      send_json(res, p.reset_robot(w, req.matches[1], body_or_empty(req)));
    });
  });
  s.Get(R"(/api/v1/robots/([^/]+)/overlay)", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      const auto w = tester(req);
      if (!req.has_param("episode_id")) throw Error(ErrorCode::kInvalidArgument, "episode_id is required");
      const auto text = param(req, "alpha", "0.5");
      double alpha = 0.0;
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), alpha);
      if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw Error(ErrorCode::kInvalidArgument, "alpha must be a number");
      }
      send_json(res, p.overlay(w, req.matches[1], req.get_param_value("episode_id"), alpha));
    });
  });
  s.Post(R"(/api/v1/robots/([^/]+)/fault)", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      const auto w = tester(req);
      const auto body = body_or_empty(req);
      send_json(res, p.fault(w, req.matches[1], body.value("reason", "")));
    });
  });
  s.Post(R"(/api/v1/robots/([^/]+)/resume)", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] { send_json(res, p.resume(who(req), req.matches[1])); });
  });

  // Tasks.
  s.Get("/api/v1/tasks", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      who(req);
      send_json(res, p.tasks_json());
    });
  });
  s.Get(R"(/api/v1/tasks/([^/]+))", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      who(req);
      send_json(res, p.task_json(req.matches[1]));
    });
  });
  s.Get(R"(/api/v1/tasks/([^/]+)/references)", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] { send_json(res, p.references_json(who(req), req.matches[1])); });
  });

  // Jobs.
  s.Post("/api/v1/jobs", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      const auto w = who(req);
      send_json(res, p.submit_job(w, from_json_text<JobSubmission>(req.body)), 201);
    });
  });
  s.Get("/api/v1/jobs", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] { send_json(res, p.list_jobs(who(req))); });
  });
  s.Get(R"(/api/v1/jobs/([^/]+))", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] { send_json(res, p.poll_job(who(req), req.matches[1])); });
  });
  s.Get(R"(/api/v1/jobs/([^/]+)/results)", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] { send_json(res, p.job_results(who(req), req.matches[1])); });
  });
  s.Post(R"(/api/v1/jobs/([^/]+)/approve)", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      const auto w = tester(req);
      const auto body = body_or_empty(req);
      send_json(res, p.approve_job(w, req.matches[1], optional_field<std::string>(body, "robot_id")));
    });
  });
  s.Post(R"(/api/v1/jobs/([^/]+)/revoke)", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] { send_json(res, p.revoke_job(who(req), req.matches[1])); });
  });

  // Comparative sessions.
  s.Post("/api/v1/sessions", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      const auto w = tester(req);
      send_json(res, p.create_session(w, body_or_empty(req)), 201);
    });
  });
  s.Get(R"(/api/v1/sessions/([^/]+))", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] { send_json(res, p.session_view(who(req), req.matches[1])); });
  });
  s.Post(R"(/api/v1/sessions/([^/]+)/assign)", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      const auto w = tester(req);
      const auto body = body_or_empty(req);
      send_json(res, p.session_assign(w, req.matches[1], field<std::string>(body, "initial_state_id")));
    });
  });
  s.Post(R"(/api/v1/sessions/([^/]+)/finalize)", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] { send_json(res, p.session_finalize(who(req), req.matches[1])); });
  });

  // Grading.
  s.Post(R"(/api/v1/rollouts/([^/]+)/events)", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      const auto w = who(req);
      const auto body = body_or_empty(req);
      const auto event = from_json_text<GradeEvent>(req.body);
      send_json(res, p.grade_event(w, req.matches[1], event, optional_field<std::int64_t>(body, "duration_ms")));
    });
  });
  s.Get(R"(/api/v1/rollouts/([^/]+))", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] { send_json(res, p.rollout_view(who(req), req.matches[1])); });
  });
  s.Post("/api/v1/sandbox/rollouts", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      const auto w = who(req);
      const auto body = body_or_empty(req);
      send_json(res, p.open_sandbox_rollout(w, field<std::string>(body, "robot_id"), field<std::string>(body, "task_id")),
                201);
    });
  });

  // Analytics.
  const auto source = [&p](const Req& req) {
    return param(req, "source", p.config().results_csv ? "fixture" : "platform");
  };
  s.Get("/api/v1/analytics/averages", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      who(req);
      send_json(res, p.analytics_averages(source(req)));
    });
  });
  s.Get("/api/v1/analytics/cdf", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      who(req);
      if (!req.has_param("model")) throw Error(ErrorCode::kInvalidArgument, "model is required");
      send_json(res, p.analytics_cdf(source(req), req.get_param_value("model"), param(req, "metric", "score")));
    });
  });
  s.Get("/api/v1/analytics/tags", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      who(req);
      send_json(res, p.analytics_tags(source(req)));
    });
  });
  s.Get("/api/v1/analytics/ranklist", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      who(req);
      send_json(res, p.analytics_ranklist(source(req)));
    });
  });
  s.Get("/api/v1/analytics/dominance", [=, &p](const Req& req, Res& res) {
    guarded(res, [&] {
      who(req);
      if (!req.has_param("a") || !req.has_param("b")) throw Error(ErrorCode::kInvalidArgument, "a and b are required");
      send_json(res, p.analytics_dominance(source(req), req.get_param_value("a"), req.get_param_value("b"),
                                           param(req, "metric", "score")));
    });
  });
}

}  // namespace tb::server
