#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tablebench/analytics/aggregate.hpp"
#include "tablebench/protocol/json.hpp"
#include "tablebench/protocol/types.hpp"

namespace tb::sched {

struct TaskEntry {
  std::string task_id;
  std::string prompt;
  std::vector<Archetype> archetypes;
};

struct SchedulerConfig {
  // Assumed wall time per rollout for start estimates.
  Nanos per_rollout_ns = 60'000'000'000;
  Nanos notify_lead_ns = 300'000'000'000;
  int rollouts_per_task = 10;
  bool enable_comparative = false;
  // Time source; defaults to a steady clock since construction.
  std::function<Nanos()> clock;
};

// One entry of the append-only scheduler log. Every state change is an event;
// replaying the log rebuilds the state.
struct SchedEvent {
  std::int64_t seq = 0;
  Nanos at = 0;
  std::string type;
  Json data;

  bool operator==(const SchedEvent&) const = default;
};

void to_json(Json& j, const SchedEvent& v);
void from_json(const Json& j, SchedEvent& v);

// Who is reading. Owners see their own jobs; testers see every job but never
// the identity behind an open comparative session.
struct Viewer {
  std::optional<std::string> owner_hash;
  bool tester = false;

  static Viewer owner(std::string hash) { return {std::move(hash), false}; }
  static Viewer tester_role() { return {std::nullopt, true}; }
};

struct RolloutTicket {
  std::string rollout_id;
  std::string job_id;
  std::string task_id;
  std::string robot_id;
  // 1-based within the task.
  int index = 0;
};

struct JobRecord {
  std::string job_id;
  std::int64_t number = 0;
  std::string owner_hash;
  std::string display_name;
  std::vector<std::string> task_set;
  EvalSetting setting = EvalSetting::kTaskSpecific;
  JobState status = JobState::kQueued;
  bool approved = false;
  std::optional<std::string> robot_id;
  Nanos submitted_at = 0;
  Nanos started_at = 0;
  // Approval order on the robot queue.
  std::int64_t queue_pos = 0;
  std::vector<TaskProgress> progress;
  std::map<std::string, std::vector<RolloutResult>> results;
  std::optional<std::string> active_rollout;
  std::optional<std::string> last_rollout;
  Nanos rollout_started_at = 0;
  // Rollouts thrown away by a fault; they are re-run, never graded.
  int discarded = 0;
  std::optional<std::string> blinded_id;
};

struct Assignment {
  std::string initial_state_id;
  std::string blinded_id;
  std::string rollout_id;
  std::optional<RolloutResult> result;
};

struct SessionModel {
  std::string blinded_id;
  std::string identity;
};

struct SessionOutcome {
  std::vector<SessionModel> revealed;
  std::vector<analytics::RankEntry> ranking;
};

struct ComparativeSession {
  std::string session_id;
  std::string task_id;
  std::string robot_id;
  std::uint64_t rng_seed = 0;
  std::vector<SessionModel> models;
  std::vector<Assignment> assignments;
  std::optional<SessionOutcome> outcome;
  std::mt19937_64 rng;
};

// Legal status moves. Statuses advance in declaration order; paused jobs may
// resume to running.
bool allowed_transition(JobState from, JobState to);

// Job lifecycle and comparative sessions as one serialized state machine.
// Commands validate, append one or more events, then apply them; apply() is
// the only code that mutates state.
class Scheduler {
 public:
  Scheduler(std::vector<TaskEntry> tasks, SchedulerConfig config);

  // Robots jobs can be approved onto.
  void register_robot(const std::string& robot_id, Archetype archetype);

  JobStatus submit_job(const std::string& owner_hash, const JobSubmission& submission);
  JobStatus poll_job(const std::string& job_id, const Viewer& viewer) const;
  std::vector<JobStatus> list_jobs(const Viewer& viewer) const;
  // Tester step that places a job in a robot's queue. Approving an already
  // approved job onto the same robot is a no-op.
  JobStatus approve_job(const std::string& job_id, const std::string& robot_id);
  JobStatus notify_upcoming(const std::string& job_id);
  JobStatus start_job(const std::string& job_id);
  JobStatus revoke_job(const std::string& job_id);

  RolloutTicket start_rollout(const std::string& job_id);
  // Records a graded rollout; the job completes after its last rollout.
  JobStatus end_rollout(const std::string& rollout_id, const RolloutResult& result);
  // Pauses the running job on `robot_id` and discards its open rollout.
  std::vector<std::string> handle_maintenance(const std::string& robot_id, const std::string& reason);
  std::vector<std::string> resume_robot(const std::string& robot_id);

  // Head of the robot's queue: the running, notified or first approved job.
  std::optional<std::string> next_job(const std::string& robot_id) const;
  std::map<std::string, std::vector<RolloutResult>> job_results(const std::string& job_id) const;
  JobRecord job_record(const std::string& job_id) const;

  std::string create_session(const std::string& task_id, const std::string& robot_id,
                             const std::vector<std::string>& identities, std::uint64_t seed);
  // Fixes the initial state, then draws the model. Returns the assignment.
  Assignment comparative_assign(const std::string& session_id, const std::string& initial_state_id);
  void record_session_result(const std::string& rollout_id, const RolloutResult& result);
  SessionOutcome comparative_finalize(const std::string& session_id);
  // Tester-facing view; identities only appear after finalization.
  Json session_view(const std::string& session_id) const;
  // Session owning a comparative rollout id, if any.
  std::optional<std::string> session_of_rollout(const std::string& rollout_id) const;
  std::optional<std::string> blinded_id_of_rollout(const std::string& rollout_id) const;

  std::vector<SchedEvent> events() const;
  void on_event(std::function<void(const SchedEvent&)> sink);

  // Rebuilds a scheduler from its log.
  static std::unique_ptr<Scheduler> replay(std::vector<TaskEntry> tasks, SchedulerConfig config,
                                           const std::vector<SchedEvent>& log);
  // Canonical dump of every job and session, for replay comparisons.
  Json state_dump() const;

  const SchedulerConfig& config() const { return config_; }

 private:
  void emit_locked(std::string type, Json data);
  void apply_locked(const SchedEvent& e);
  void set_status_locked(JobRecord& job, JobState to);

  JobRecord& job_locked(const std::string& job_id);
  const JobRecord& job_locked(const std::string& job_id) const;
  ComparativeSession& session_locked(const std::string& session_id);
  const ComparativeSession& session_locked(const std::string& session_id) const;
  const TaskEntry& task_locked(const std::string& task_id) const;
  JobStatus status_locked(const JobRecord& job, const Viewer& viewer) const;
  std::vector<const JobRecord*> robot_queue_locked(const std::string& robot_id) const;
  Nanos remaining_ns_locked(const JobRecord& job, Nanos now) const;
  std::optional<std::string> current_task_locked(const JobRecord& job) const;
  bool identity_hidden_locked(const JobRecord& job) const;
  std::string random_token(const std::string& prefix);

  std::vector<TaskEntry> tasks_;
  SchedulerConfig config_;
  mutable std::mutex mu_;
  std::map<std::string, Archetype> robots_;
  std::map<std::string, JobRecord> jobs_;
  std::map<std::string, ComparativeSession> sessions_;
  std::map<std::string, std::string> rollout_to_job_;
  std::map<std::string, std::string> rollout_to_session_;
  std::vector<SchedEvent> log_;
  std::vector<std::function<void(const SchedEvent&)>> sinks_;
  std::int64_t next_job_ = 1;
  std::int64_t next_rollout_ = 1;
  std::int64_t next_session_ = 1;
  std::int64_t next_queue_pos_ = 1;
  std::random_device token_source_;
  bool replaying_ = false;
};

}  // namespace tb::sched
