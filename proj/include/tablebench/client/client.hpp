#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tablebench/protocol/json.hpp"
#include "tablebench/protocol/types.hpp"

namespace tb::client {

struct HttpReply {
  int status = 0;
  std::string body;
};

using Headers = std::map<std::string, std::string>;

// Minimal request/response channel; the SDK speaks only through this.
class Transport {
 public:
  virtual ~Transport() = default;
  // `target` is the path plus query. Throws Error(kUnavailable) when the
  // server cannot be reached.
  virtual HttpReply send(const std::string& method, const std::string& target, const std::string& body,
                         const Headers& headers) = 0;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds backoff{50};
  std::chrono::milliseconds timeout{10'000};
};

// httplib-backed transport with bounded retries on connection failures.
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(std::string endpoint, RetryPolicy retry = {});
  ~HttpTransport() override;
  HttpReply send(const std::string& method, const std::string& target, const std::string& body,
                 const Headers& headers) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct CallRecord {
  std::string method;
  std::string path;
  int status = 0;
  double latency_ms = 0.0;
};

// Passes calls through and remembers each one.
class RecordingTransport : public Transport {
 public:
  explicit RecordingTransport(std::shared_ptr<Transport> inner) : inner_(std::move(inner)) {}
  HttpReply send(const std::string& method, const std::string& target, const std::string& body,
                 const Headers& headers) override;
  std::vector<CallRecord> calls() const;

 private:
  std::shared_ptr<Transport> inner_;
  mutable std::mutex mu_;
  std::vector<CallRecord> calls_;
};

// Typed wrappers over the HTTP surface. Non-2xx replies throw Error with the
// code named in the reply body.
class Client {
 public:
  Client(std::shared_ptr<Transport> transport, std::string api_key);
  static Client connect(const std::string& endpoint, std::string api_key, RetryPolicy retry = {});

  Transport& transport() { return *transport_; }

  Json health();
  Json whoami();
  std::vector<Json> robots();
  Json robot(const std::string& robot_id);
  ObservationBundle capture(const std::string& robot_id, const CaptureRequest& request = {});
  EnqueueAck enqueue(const std::string& robot_id, const ActionChunk& chunk,
                     const std::optional<std::string>& rollout_id = std::nullopt);
  QueueState queue(const std::string& robot_id);
  Json sim_state(const std::string& robot_id);
  Json reset_robot(const std::string& robot_id, const Json& body = Json::object());
  Json overlay(const std::string& robot_id, const std::string& episode_id, double alpha);
  Json fault(const std::string& robot_id, const std::string& reason);
  Json resume(const std::string& robot_id);

  Json tasks();
  Json task(const std::string& task_id);
  Json references(const std::string& task_id);

  JobStatus submit_job(const JobSubmission& submission);
  JobStatus job(const std::string& job_id);
  std::vector<JobStatus> jobs();
  JobStatus approve_job(const std::string& job_id, const std::optional<std::string>& robot_id = std::nullopt);
  JobStatus revoke_job(const std::string& job_id);
  Json job_results(const std::string& job_id);

  Json create_session(const Json& body);
  Json session(const std::string& session_id);
  Json assign(const std::string& session_id, const std::string& initial_state_id);
  Json finalize_session(const std::string& session_id);

  Json grade(const std::string& rollout_id, const GradeEvent& event,
             std::optional<std::int64_t> duration_ms = std::nullopt);
  Json rollout(const std::string& rollout_id);
  Json open_sandbox_rollout(const std::string& robot_id, const std::string& task_id);

  // name: averages | cdf | tags | ranklist | dominance.
  Json analytics(const std::string& name, const std::map<std::string, std::string>& params = {});

 private:
  Json call(const std::string& method, const std::string& target, const std::string& body = {},
            Headers extra = {});

  std::shared_ptr<Transport> transport_;
  std::string api_key_;
};

// Percent-encodes a query value.
std::string url_encode(std::string_view text);

}  // namespace tb::client
