#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tablebench/client/client.hpp"
#include "tablebench/sim/task.hpp"

namespace tb::client {

struct JobContext {
  std::string job_id;
  std::string task_id;
  std::string robot_id;
  std::string prompt;
  std::string display_name;
};

// A user's model behind the observe-infer-enqueue loop.
class PolicyAdapter {
 public:
  virtual ~PolicyAdapter() = default;
  virtual std::string display_name() const = 0;
  // Called once, when the job is notified, to load the model.
  virtual void warm_up(const JobContext&) {}
  // Called before the first capture of each rollout.
  virtual void begin_rollout(const JobContext&, Client&, const std::string& /*rollout_id*/) {}
  // An empty chunk means nothing to do yet; the loop waits and captures again.
  virtual ActionChunk infer(const ObservationBundle& observation, const std::string& prompt) = 0;
};

struct LoopConfig {
  bool drain_before_capture = true;
  std::chrono::milliseconds poll_interval{20};
  std::chrono::milliseconds max_rollout_duration{600'000};
  // Gives up waiting for a job after this long.
  std::chrono::milliseconds max_wait{3'600'000};
};

struct CaptureEntry {
  std::int64_t capture_id = 0;
  std::int64_t queue_length = 0;
  std::optional<std::int64_t> executing;
};

struct EnqueueEntry {
  std::int64_t client_seq = 0;
  std::vector<std::int64_t> action_ids;
};

// Client-side audit log of one rollout.
struct Transcript {
  std::string rollout_id;
  std::vector<CaptureEntry> captures;
  std::vector<EnqueueEntry> enqueues;
  // rollout_ended | max_duration | rejected
  std::string end_reason;
};

void to_json(Json& j, const Transcript& v);

// Thrown when the job is revoked while the client waits or runs.
class JobRevoked : public Error {
 public:
  explicit JobRevoked(const std::string& job_id)
      : Error(ErrorCode::kConflict, "job " + job_id + " was revoked"), job_id_(job_id) {}
  const std::string& job_id() const { return job_id_; }

 private:
  std::string job_id_;
};

// Polls until the job runs. warm_up fires once, at the first notified (or
// running) poll.
JobContext await_job(Client& client, const std::string& job_id, PolicyAdapter& adapter, const LoopConfig& config);

// Runs the loop for one rollout until the server ends it.
Transcript run_rollout(Client& client, PolicyAdapter& adapter, const JobContext& context,
                       const std::string& rollout_id, const LoopConfig& config);

struct JobReport {
  JobContext context;
  JobStatus final_status;
  std::vector<Transcript> transcripts;
  Json results;
};

// await_job, then every rollout the server opens, until the job completes.
JobReport run_job(Client& client, const std::string& job_id, PolicyAdapter& adapter, const LoopConfig& config);

// Scripted policy for the built-in sim tasks. It reads the rollout's initial
// ground truth through sim_state, plans the whole motion, then hands it out
// `chunk_size` actions per inference.
class OracleAdapter : public PolicyAdapter {
 public:
  OracleAdapter(sim::TaskCatalog catalog, std::string display_name = "oracle", std::size_t chunk_size = 12);

  std::string display_name() const override { return display_name_; }
  void warm_up(const JobContext& context) override;
  void begin_rollout(const JobContext& context, Client& client, const std::string& rollout_id) override;
  ActionChunk infer(const ObservationBundle& observation, const std::string& prompt) override;

  int warm_ups() const { return warm_ups_; }

 private:
  sim::TaskCatalog catalog_;
  std::string display_name_;
  std::size_t chunk_size_;
  std::vector<Action> plan_;
  std::size_t next_ = 0;
  int warm_ups_ = 0;
};

struct MockCheck {
  std::string name;
  // gateway | scheduler | grading | auth
  std::string subsystem;
  bool ok = false;
  int status = 0;
  double latency_ms = 0.0;
  std::string detail;
};

struct MockReport {
  std::vector<MockCheck> checks;
  bool ok() const;
  // Subsystems with at least one failing check.
  std::vector<std::string> failing_subsystems() const;
};

void to_json(Json& j, const MockReport& v);

// Exercises capture, enqueue, queue status and one grading round trip against
// a sandbox deployment. Never throws for server-side failures; they are in the report.
MockReport mock_test(Client& client, const std::string& robot_id = {}, const std::string& task_id = "stack_color_blocks");

}  // namespace tb::client
