#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tablebench/analytics/aggregate.hpp"
#include "tablebench/gateway/gateway.hpp"
#include "tablebench/grading/grade.hpp"
#include "tablebench/protocol/json.hpp"
#include "tablebench/sched/scheduler.hpp"
#include "tablebench/server/auth.hpp"
#include "tablebench/server/recorder.hpp"
#include "tablebench/sim/task.hpp"
#include "tablebench/store/episode_store.hpp"

namespace tb::server {

struct RobotSetup {
  std::string robot_id;
  Archetype archetype = Archetype::kUr5;
  sim::SimConfig sim;
  // Scene loaded before the first rollout.
  std::optional<std::string> idle_task;
  std::uint64_t idle_seed = 0;
};

struct PlatformConfig {
  std::vector<RobotSetup> robots;
  std::filesystem::path tasks_dir;
  std::filesystem::path store_dir;
  // Executor speed relative to real time; 0 runs free.
  double acceleration = 1.0;
  // Robots take actions and practice rollouts without a scheduled job.
  bool sandbox = false;
  // Submitted jobs are approved onto the first compatible robot.
  bool auto_approve = false;
  // Wall time between notifying a job and starting it.
  std::chrono::milliseconds warm_up{300'000};
  bool enable_comparative = false;
  bool scheduler_enabled = true;
  std::int64_t home_duration_ms = 0;
  // Sim-time cap per rollout; 0 uses the task's time budget.
  double rollout_budget_s = 0.0;
  // Saves the main camera frame of every capture into the episode.
  bool record_frames = true;
  std::optional<std::filesystem::path> results_csv;
  std::optional<std::filesystem::path> tags_csv;
  sched::SchedulerConfig scheduler;
};

// Grading state of one rollout, benchmark, comparative or sandbox.
struct RolloutEntry {
  enum class Kind { kBenchmark, kComparative, kSandbox };

  std::mutex mu;
  Kind kind = Kind::kBenchmark;
  std::string rollout_id;
  std::string task_id;
  std::optional<std::string> robot_id;
  std::optional<std::string> job_id;
  std::optional<std::string> session_id;
  std::optional<std::string> owner_hash;
  int index = 0;
  std::uint64_t seed = 0;
  grading::RolloutGrade grade;
  bool auto_grade = false;
  Nanos sim_start = 0;
  Nanos budget_ns = 0;
  bool live = false;
  bool discarded = false;
  std::shared_ptr<EpisodeRecorder> recorder;

  explicit RolloutEntry(grading::TaskRubric rubric) : grade(std::move(rubric)) {}
};

// Gateway, simulator, scheduler, grading and episode store wired together,
// plus the runner that drives approved jobs through their rollouts. Every
// public member authorizes the principal first and is thread-safe.
class Platform {
 public:
  explicit Platform(PlatformConfig config);
  ~Platform();

  Platform(const Platform&) = delete;
  Platform& operator=(const Platform&) = delete;

  // Starts each robot's executor and the runner thread.
  void start();
  void stop();
  // One runner pass over every robot; start() calls it continuously.
  void step();

  const PlatformConfig& config() const { return config_; }
  const sim::TaskCatalog& catalog() const { return catalog_; }
  sched::Scheduler& scheduler() { return *scheduler_; }
  store::EpisodeStore& store() { return store_; }
  gateway::RobotGateway& robot_gateway(const std::string& robot_id);
  std::vector<std::string> robot_ids() const;

  // --- robots ---
  Json robots_json() const;
  Json robot_json(const std::string& robot_id) const;
  ObservationBundle capture(const Principal& who, const std::string& robot_id, const CaptureRequest& request);
  EnqueueAck enqueue(const Principal& who, const std::string& robot_id, const ActionChunk& chunk,
                     const std::optional<std::string>& rollout_id);
  QueueState queue(const Principal& who, const std::string& robot_id);
  Json sim_state(const Principal& who, const std::string& robot_id);
  // Body: {} | {"task_id", "seed"} | {"episode_id"} (restores a reference).
  Json reset_robot(const Principal& who, const std::string& robot_id, const Json& body);
  Json overlay(const Principal& who, const std::string& robot_id, const std::string& episode_id, double alpha);
  Json fault(const Principal& who, const std::string& robot_id, const std::string& reason);
  Json resume(const Principal& who, const std::string& robot_id);

  // --- tasks ---
  Json tasks_json() const;
  Json task_json(const std::string& task_id) const;
  Json references_json(const Principal& who, const std::string& task_id) const;

  // --- jobs ---
  JobStatus submit_job(const Principal& who, const JobSubmission& submission);
  JobStatus poll_job(const Principal& who, const std::string& job_id) const;
  std::vector<JobStatus> list_jobs(const Principal& who) const;
  JobStatus approve_job(const Principal& who, const std::string& job_id, std::optional<std::string> robot_id);
  JobStatus revoke_job(const Principal& who, const std::string& job_id);
  Json job_results(const Principal& who, const std::string& job_id) const;

  // --- comparative sessions ---
  Json create_session(const Principal& who, const Json& body);
  Json session_view(const Principal& who, const std::string& session_id) const;
  Json session_assign(const Principal& who, const std::string& session_id, const std::string& initial_state_id);
  Json session_finalize(const Principal& who, const std::string& session_id);

  // --- grading ---
  Json grade_event(const Principal& who, const std::string& rollout_id, const GradeEvent& event,
                   std::optional<std::int64_t> duration_ms);
  Json rollout_view(const Principal& who, const std::string& rollout_id) const;
  // Practice rollout on a sandbox robot, graded by its owner.
  Json open_sandbox_rollout(const Principal& who, const std::string& robot_id, const std::string& task_id);

  // --- analytics; source is "fixture", "platform" or "all" ---
  analytics::ResultsTable results_table(const std::string& source) const;
  Json analytics_averages(const std::string& source) const;
  Json analytics_cdf(const std::string& source, const std::string& model, const std::string& metric) const;
  Json analytics_tags(const std::string& source) const;
  Json analytics_ranklist(const std::string& source) const;
  Json analytics_dominance(const std::string& source, const std::string& a, const std::string& b,
                           const std::string& metric) const;

  // Rollouts (open or finished) known to the platform.
  std::shared_ptr<RolloutEntry> rollout(const std::string& rollout_id) const;

 private:
  struct RobotSlot {
    RobotSetup setup;
    std::unique_ptr<gateway::RobotGateway> gw;
    std::shared_ptr<RolloutEntry> active;
  };

  RobotSlot& slot(const std::string& robot_id);
  const RobotSlot& slot(const std::string& robot_id) const;
  void require_tester(const Principal& who) const;
  void require_scheduler() const;
  // Tester, sandbox, or the owner of the job running on the robot.
  void require_robot_access(const Principal& who, const std::string& robot_id) const;
  void step_robot(RobotSlot& s);
  void begin_rollout(RobotSlot& s, const std::string& job_id);
  void on_tick(const std::string& robot_id, const gateway::TickInfo& info);
  void on_fault(const std::string& robot_id, const std::string& reason);
  // Entry lock held. Records the result and releases the robot.
  void finish_locked(RolloutEntry& e, const RolloutResult& result);
  Json rollout_view_locked(const RolloutEntry& e) const;
  bool rollout_ready(const JobStatus& status) const;
  void log_grade_locked(const RolloutEntry& e);

  PlatformConfig config_;
  sim::TaskCatalog catalog_;
  store::EpisodeStore store_;
  std::unique_ptr<sched::Scheduler> scheduler_;
  std::shared_ptr<store::AppendLog> sched_log_;
  std::shared_ptr<store::AppendLog> grade_log_;
  std::map<std::string, RobotSlot> robots_;
  std::optional<analytics::ResultsTable> fixture_;
  std::optional<analytics::TagMap> tags_;

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<RolloutEntry>> rollouts_;
  std::map<std::string, std::chrono::steady_clock::time_point> notified_at_;
  std::int64_t next_sandbox_ = 1;

  std::thread runner_;
  std::mutex runner_mu_;
  std::condition_variable runner_cv_;
  bool stopping_ = false;
};

}  // namespace tb::server
