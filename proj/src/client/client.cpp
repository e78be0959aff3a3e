#include "tablebench/client/client.hpp"

#include <httplib.h>

#include <thread>

namespace tb::client {
namespace {

constexpr const char* kApiKeyHeader = "X-API-Key";
constexpr const char* kRolloutHeader = "X-Rollout-Id";

template <class T>
T decode(const Json& j) {
  try {
    return j.get<T>();
  } catch (const ShapeError& e) {
    throw DecodeError(0, e.expected, "reply shape mismatched", e.path.empty() ? "/" : e.path);
  }
}

}  // namespace

struct HttpTransport::Impl {
  std::string endpoint;
  RetryPolicy retry;
  std::mutex mu;
  std::unique_ptr<httplib::Client> cli;
};

HttpTransport::HttpTransport(std::string endpoint, RetryPolicy retry) : impl_(std::make_unique<Impl>()) {
  impl_->endpoint = std::move(endpoint);
  impl_->retry = retry;
  impl_->cli = std::make_unique<httplib::Client>(impl_->endpoint);
  if (!impl_->cli->is_valid()) throw Error(ErrorCode::kInvalidArgument, "bad endpoint '" + impl_->endpoint + "'");
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(retry.timeout).count();
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(retry.timeout).count() % 1'000'000;
  impl_->cli->set_connection_timeout(secs, usecs);
  impl_->cli->set_read_timeout(secs, usecs);
  impl_->cli->set_write_timeout(secs, usecs);
  impl_->cli->set_keep_alive(true);
}

HttpTransport::~HttpTransport() = default;

HttpReply HttpTransport::send(const std::string& method, const std::string& target, const std::string& body,
                              const Headers& headers) {
  httplib::Headers h(headers.begin(), headers.end());
  std::lock_guard lock(impl_->mu);
  std::string last_error;
  for (int attempt = 0; attempt < std::max(1, impl_->retry.attempts); ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(impl_->retry.backoff * attempt);
    httplib::Result r = method == "GET" ? impl_->cli->Get(target, h)
                                        : impl_->cli->Post(target, h, body, "application/json");
    if (r) return {r->status, r->body};
    last_error = httplib::to_string(r.error());
  }
  throw Error(ErrorCode::kUnavailable, method + " " + target + " failed: " + last_error);
}

HttpReply RecordingTransport::send(const std::string& method, const std::string& target, const std::string& body,
                                   const Headers& headers) {
  const auto start = std::chrono::steady_clock::now();
  CallRecord rec{method, target.substr(0, target.find('?')), 0, 0.0};
  try {
    auto reply = inner_->send(method, target, body, headers);
    rec.status = reply.status;
    rec.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    std::lock_guard lock(mu_);
    calls_.push_back(rec);
    return reply;
  } catch (...) {
    rec.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    std::lock_guard lock(mu_);
    calls_.push_back(rec);
    throw;
  }
}

std::vector<CallRecord> RecordingTransport::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::string url_encode(std::string_view text) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 15]);
    }
  }
  return out;
}

Client::Client(std::shared_ptr<Transport> transport, std::string api_key)
    : transport_(std::move(transport)), api_key_(std::move(api_key)) {}

Client Client::connect(const std::string& endpoint, std::string api_key, RetryPolicy retry) {
  return Client(std::make_shared<HttpTransport>(endpoint, retry), std::move(api_key));
}

Json Client::call(const std::string& method, const std::string& target, const std::string& body, Headers extra) {
  extra[kApiKeyHeader] = api_key_;
  const auto reply = transport_->send(method, target, body, extra);
  Json doc;
  if (!reply.body.empty()) doc = parse_json(reply.body);
  if (reply.status >= 200 && reply.status < 300) return doc;
  auto code = ErrorCode::kInternal;
  std::string message = method + " " + target + " returned " + std::to_string(reply.status);
  if (doc.is_object() && doc.contains("error")) {
    if (auto c = parse_error_code(doc.value("error", ""))) code = *c;
    message = doc.value("message", message);
  } else if (reply.status == 404) {
    code = ErrorCode::kNotFound;
  }
  throw Error(code, message);
}

Json Client::health() { return call("GET", "/api/v1/health"); }
Json Client::whoami() { return call("GET", "/api/v1/whoami"); }

std::vector<Json> Client::robots() { return call("GET", "/api/v1/robots").get<std::vector<Json>>(); }
Json Client::robot(const std::string& id) { return call("GET", "/api/v1/robots/" + url_encode(id)); }

ObservationBundle Client::capture(const std::string& id, const CaptureRequest& request) {
  return decode<ObservationBundle>(call("POST", "/api/v1/robots/" + url_encode(id) + "/capture", Json(request).dump()));
}

EnqueueAck Client::enqueue(const std::string& id, const ActionChunk& chunk, const std::optional<std::string>& rollout_id) {
  Headers h;
  if (rollout_id) h[kRolloutHeader] = *rollout_id;
  return decode<EnqueueAck>(call("POST", "/api/v1/robots/" + url_encode(id) + "/actions", Json(chunk).dump(), h));
}

QueueState Client::queue(const std::string& id) {
  return decode<QueueState>(call("GET", "/api/v1/robots/" + url_encode(id) + "/queue"));
}

Json Client::sim_state(const std::string& id) { return call("GET", "/api/v1/robots/" + url_encode(id) + "/sim_state"); }

Json Client::reset_robot(const std::string& id, const Json& body) {
  return call("POST", "/api/v1/robots/" + url_encode(id) + "/reset", body.dump());
}

Json Client::overlay(const std::string& id, const std::string& episode_id, double alpha) {
  return call("GET", "/api/v1/robots/" + url_encode(id) + "/overlay?episode_id=" + url_encode(episode_id) +
                         "&alpha=" + std::to_string(alpha));
}

Json Client::fault(const std::string& id, const std::string& reason) {
  return call("POST", "/api/v1/robots/" + url_encode(id) + "/fault", Json{{"reason", reason}}.dump());
}

Json Client::resume(const std::string& id) { return call("POST", "/api/v1/robots/" + url_encode(id) + "/resume"); }

Json Client::tasks() { return call("GET", "/api/v1/tasks"); }
Json Client::task(const std::string& id) { return call("GET", "/api/v1/tasks/" + url_encode(id)); }
Json Client::references(const std::string& id) { return call("GET", "/api/v1/tasks/" + url_encode(id) + "/references"); }

JobStatus Client::submit_job(const JobSubmission& submission) {
  return decode<JobStatus>(call("POST", "/api/v1/jobs", Json(submission).dump()));
}

JobStatus Client::job(const std::string& id) { return decode<JobStatus>(call("GET", "/api/v1/jobs/" + url_encode(id))); }

std::vector<JobStatus> Client::jobs() { return decode<std::vector<JobStatus>>(call("GET", "/api/v1/jobs")); }

JobStatus Client::approve_job(const std::string& id, const std::optional<std::string>& robot_id) {
  Json body = Json::object();
  if (robot_id) body["robot_id"] = *robot_id;
  return decode<JobStatus>(call("POST", "/api/v1/jobs/" + url_encode(id) + "/approve", body.dump()));
}

JobStatus Client::revoke_job(const std::string& id) {
  return decode<JobStatus>(call("POST", "/api/v1/jobs/" + url_encode(id) + "/revoke"));
}

Json Client::job_results(const std::string& id) { return call("GET", "/api/v1/jobs/" + url_encode(id) + "/results"); }

Json Client::create_session(const Json& body) { return call("POST", "/api/v1/sessions", body.dump()); }
Json Client::session(const std::string& id) { return call("GET", "/api/v1/sessions/" + url_encode(id)); }

Json Client::assign(const std::string& id, const std::string& initial_state_id) {
  return call("POST", "/api/v1/sessions/" + url_encode(id) + "/assign",
              Json{{"initial_state_id", initial_state_id}}.dump());
}

Json Client::finalize_session(const std::string& id) {
  return call("POST", "/api/v1/sessions/" + url_encode(id) + "/finalize");
}

Json Client::grade(const std::string& rollout_id, const GradeEvent& event, std::optional<std::int64_t> duration_ms) {
  Json body = event;
  if (duration_ms) body["duration_ms"] = *duration_ms;
  return call("POST", "/api/v1/rollouts/" + url_encode(rollout_id) + "/events", body.dump());
}

Json Client::rollout(const std::string& id) { return call("GET", "/api/v1/rollouts/" + url_encode(id)); }

Json Client::open_sandbox_rollout(const std::string& robot_id, const std::string& task_id) {
  return call("POST", "/api/v1/sandbox/rollouts", Json{{"robot_id", robot_id}, {"task_id", task_id}}.dump());
}

Json Client::analytics(const std::string& name, const std::map<std::string, std::string>& params) {
  std::string target = "/api/v1/analytics/" + url_encode(name);
  char sep = '?';
  for (const auto& [k, v] : params) {
    target += sep + url_encode(k) + "=" + url_encode(v);
    sep = '&';
  }
  return call("GET", target);
}

}  // namespace tb::client
