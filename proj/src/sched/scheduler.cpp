#include "tablebench/sched/scheduler.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>

#include "tablebench/protocol/error.hpp"

namespace tb::sched {

namespace {

std::function<Nanos()> steady_clock_since_now() {
  const auto origin = std::chrono::steady_clock::now();
  return [origin] {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - origin).count();
  };
}

bool terminal(JobState s) { return s == JobState::kCompleted || s == JobState::kRevoked; }

analytics::Milli percent_milli(double v) { return static_cast<analytics::Milli>(std::llround(v * 1000.0)); }

}  // namespace

void to_json(Json& j, const SchedEvent& v) {
  j = Json{{"seq", v.seq}, {"at", v.at}, {"type", v.type}, {"data", v.data}};
}

void from_json(const Json& j, SchedEvent& v) {
  v.seq = field<std::int64_t>(j, "seq");
  v.at = field<Nanos>(j, "at");
  v.type = field<std::string>(j, "type");
  v.data = field<Json>(j, "data");
}

bool allowed_transition(JobState from, JobState to) {
  using S = JobState;
  if (terminal(from)) return false;
  if (to == S::kRevoked) return true;
  switch (from) {
    case S::kQueued: return to == S::kNotified || to == S::kRunning;
    case S::kNotified: return to == S::kRunning;
    case S::kRunning: return to == S::kPausedMaintenance || to == S::kCompleted;
    case S::kPausedMaintenance: return to == S::kRunning;
    default: return false;
  }
}

Scheduler::Scheduler(std::vector<TaskEntry> tasks, SchedulerConfig config)
    : tasks_(std::move(tasks)), config_(std::move(config)) {
  if (!config_.clock) config_.clock = steady_clock_since_now();
  if (config_.per_rollout_ns <= 0 || config_.notify_lead_ns < 0 || config_.rollouts_per_task <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "scheduler timing and rollout count must be positive");
  }
}

JobRecord& Scheduler::job_locked(const std::string& job_id) {
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(ErrorCode::kNotFound, "unknown job '" + job_id + "'");
  return it->second;
}

const JobRecord& Scheduler::job_locked(const std::string& job_id) const {
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(ErrorCode::kNotFound, "unknown job '" + job_id + "'");
  return it->second;
}

ComparativeSession& Scheduler::session_locked(const std::string& session_id) {
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(ErrorCode::kNotFound, "unknown session '" + session_id + "'");
  return it->second;
}

const ComparativeSession& Scheduler::session_locked(const std::string& session_id) const {
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(ErrorCode::kNotFound, "unknown session '" + session_id + "'");
  return it->second;
}

const TaskEntry& Scheduler::task_locked(const std::string& task_id) const {
  for (const auto& t : tasks_) {
    if (t.task_id == task_id) return t;
  }
  throw Error(ErrorCode::kNotFound, "unknown task '" + task_id + "'");
}

std::string Scheduler::random_token(const std::string& prefix) {
  std::uniform_int_distribution<std::uint32_t> d;
  char buf[24];
  std::snprintf(buf, sizeof buf, "%08x%08x", d(token_source_), d(token_source_));
  return prefix + buf;
}

void Scheduler::set_status_locked(JobRecord& job, JobState to) {
  if (!allowed_transition(job.status, to)) {
    throw Error(ErrorCode::kInternal, "undefined job transition " + std::string(to_string(job.status)) + " -> " +
                                          std::string(to_string(to)));
  }
  job.status = to;
}

void Scheduler::emit_locked(std::string type, Json data) {
  SchedEvent e;
  e.seq = static_cast<std::int64_t>(log_.size()) + 1;
  e.at = config_.clock();
  if (!log_.empty()) e.at = std::max(e.at, log_.back().at);
  e.type = std::move(type);
  e.data = std::move(data);
  apply_locked(e);
  log_.push_back(e);
  for (const auto& sink : sinks_) sink(e);
}

std::vector<const JobRecord*> Scheduler::robot_queue_locked(const std::string& robot_id) const {
  std::vector<const JobRecord*> q;
  for (const auto& [id, job] : jobs_) {
    if (job.approved && job.robot_id == robot_id && !terminal(job.status)) q.push_back(&job);
  }
  auto rank = [](const JobRecord* j) {
    switch (j->status) {
      case JobState::kRunning:
      case JobState::kPausedMaintenance: return 0;
      case JobState::kNotified: return 1;
      default: return 2;
    }
  };
  std::sort(q.begin(), q.end(), [&](const JobRecord* a, const JobRecord* b) {
    if (rank(a) != rank(b)) return rank(a) < rank(b);
    return a->queue_pos < b->queue_pos;
  });
  return q;
}

Nanos Scheduler::remaining_ns_locked(const JobRecord& job, Nanos now) const {
  std::int64_t left = 0;
  for (const auto& p : job.progress) left += p.total - p.completed;
  Nanos ns = left * config_.per_rollout_ns;
  if (job.active_rollout) ns -= std::clamp<Nanos>(now - job.rollout_started_at, 0, config_.per_rollout_ns);
  return std::max<Nanos>(0, ns);
}

std::optional<std::string> Scheduler::current_task_locked(const JobRecord& job) const {
  for (const auto& p : job.progress) {
    if (p.completed < p.total) return p.task_id;
  }
  return std::nullopt;
}

bool Scheduler::identity_hidden_locked(const JobRecord& job) const {
  if (!job.blinded_id) return false;
  for (const auto& [id, s] : sessions_) {
    if (s.outcome) continue;
    for (const auto& m : s.models) {
      if (m.blinded_id == *job.blinded_id) return true;
    }
  }
  return false;
}

JobStatus Scheduler::status_locked(const JobRecord& job, const Viewer& viewer) const {
  JobStatus s;
  s.job_id = job.job_id;
  s.status = job.status;
  s.setting = job.setting;
  if (!(viewer.tester && identity_hidden_locked(job))) s.display_name = job.display_name;
  s.task_set = job.task_set;
  s.approved = job.approved;
  s.robot_id = job.robot_id;
  s.progress = job.progress;
  s.current_task = current_task_locked(job);
  if (s.current_task) s.prompt = task_locked(*s.current_task).prompt;

  const Nanos now = std::max(config_.clock(), log_.empty() ? Nanos{0} : log_.back().at);
  if (job.status == JobState::kQueued || job.status == JobState::kNotified) {
    Nanos ahead = 0;
    if (job.approved) {
      for (const auto* other : robot_queue_locked(*job.robot_id)) {
        if (other == &job) break;
        ahead += remaining_ns_locked(*other, now);
      }
    } else {
      std::optional<Nanos> best;
      for (const auto& [robot, archetype] : robots_) {
        bool fits = true;
        for (const auto& t : job.task_set) {
          const auto& a = task_locked(t).archetypes;
          fits = fits && std::find(a.begin(), a.end(), archetype) != a.end();
        }
        if (!fits) continue;
        Nanos backlog = 0;
        for (const auto* other : robot_queue_locked(robot)) backlog += remaining_ns_locked(*other, now);
        if (!best || backlog < *best) best = backlog;
      }
      ahead = best.value_or(0);
    }
    s.expected_start_ns = now + ahead;
    if (job.status == JobState::kNotified) s.expected_start_ns = std::min(s.expected_start_ns, now + config_.notify_lead_ns);
  } else {
    s.expected_start_ns = job.started_at;
  }

  if (job.active_rollout) {
    s.rollout.rollout_id = job.active_rollout;
    s.rollout.phase = RolloutPhase::kActive;
  } else if (job.last_rollout) {
    s.rollout.rollout_id = job.last_rollout;
    s.rollout.phase = RolloutPhase::kEnded;
  }
  if (s.current_task) {
    for (const auto& p : job.progress) {
      if (p.task_id == *s.current_task) s.rollout.index = p.completed + (job.active_rollout ? 1 : 0);
    }
  }
  return s;
}

void Scheduler::apply_locked(const SchedEvent& e) {
  const Json& d = e.data;
  const std::string& t = e.type;
  if (t == "robot_registered") {
    auto a = parse_archetype(d.at("archetype").get<std::string>());
    if (!a) throw Error(ErrorCode::kInvalidArgument, "bad archetype in log");
    robots_[d.at("robot_id").get<std::string>()] = *a;
  } else if (t == "job_submitted") {
    JobRecord job;
    job.job_id = d.at("job_id").get<std::string>();
    job.owner_hash = d.at("owner").get<std::string>();
    job.display_name = d.at("display_name").get<std::string>();
    job.task_set = d.at("task_set").get<std::vector<std::string>>();
    job.setting = job.task_set.size() > 1 ? EvalSetting::kGeneralist : EvalSetting::kTaskSpecific;
    job.submitted_at = e.at;
    job.number = std::stoll(job.job_id.substr(4));
    for (const auto& task : job.task_set) job.progress.push_back({task, 0, config_.rollouts_per_task});
    next_job_ = std::max(next_job_, job.number + 1);
    jobs_[job.job_id] = std::move(job);
  } else if (t == "job_approved") {
    auto& job = job_locked(d.at("job_id").get<std::string>());
    job.approved = true;
    job.robot_id = d.at("robot_id").get<std::string>();
    job.queue_pos = next_queue_pos_++;
  } else if (t == "job_notified") {
    set_status_locked(job_locked(d.at("job_id").get<std::string>()), JobState::kNotified);
  } else if (t == "job_started") {
    auto& job = job_locked(d.at("job_id").get<std::string>());
    set_status_locked(job, JobState::kRunning);
    job.started_at = e.at;
  } else if (t == "job_revoked") {
    auto& job = job_locked(d.at("job_id").get<std::string>());
    if (job.active_rollout) {
      rollout_to_job_.erase(*job.active_rollout);
      job.last_rollout = job.active_rollout;
      job.active_rollout.reset();
    }
    set_status_locked(job, JobState::kRevoked);
  } else if (t == "rollout_started") {
    auto& job = job_locked(d.at("job_id").get<std::string>());
    const auto id = d.at("rollout_id").get<std::string>();
    job.active_rollout = id;
    job.rollout_started_at = e.at;
    rollout_to_job_[id] = job.job_id;
    next_rollout_ = std::max<std::int64_t>(next_rollout_, std::stoll(id.substr(8)) + 1);
  } else if (t == "rollout_ended") {
    const auto id = d.at("rollout_id").get<std::string>();
    auto& job = job_locked(rollout_to_job_.at(id));
    const auto task = *current_task_locked(job);
    for (auto& p : job.progress) {
      if (p.task_id == task) ++p.completed;
    }
    job.results[task].push_back(d.at("result").get<RolloutResult>());
    job.last_rollout = id;
    job.active_rollout.reset();
    if (!current_task_locked(job)) set_status_locked(job, JobState::kCompleted);
  } else if (t == "robot_fault") {
    const auto robot = d.at("robot_id").get<std::string>();
    for (auto& [id, job] : jobs_) {
      if (job.robot_id != robot || job.status != JobState::kRunning) continue;
      if (job.active_rollout) {
        ++job.discarded;
        rollout_to_job_.erase(*job.active_rollout);
        job.last_rollout = job.active_rollout;
        job.active_rollout.reset();
      }
      set_status_locked(job, JobState::kPausedMaintenance);
    }
  } else if (t == "robot_resumed") {
    const auto robot = d.at("robot_id").get<std::string>();
    for (auto& [id, job] : jobs_) {
      if (job.robot_id == robot && job.status == JobState::kPausedMaintenance) set_status_locked(job, JobState::kRunning);
    }
  } else if (t == "session_created") {
    ComparativeSession s;
    s.session_id = d.at("session_id").get<std::string>();
    s.task_id = d.at("task_id").get<std::string>();
    s.robot_id = d.at("robot_id").get<std::string>();
    s.rng_seed = d.at("seed").get<std::uint64_t>();
    s.rng.seed(s.rng_seed);
    for (const auto& m : d.at("models")) {
      const auto blinded = m.at("blinded_id").get<std::string>();
      const auto job_id = m.at("job_id").get<std::string>();
      s.models.push_back({blinded, job_id});
      job_locked(job_id).blinded_id = blinded;
    }
    next_session_ = std::max<std::int64_t>(next_session_, std::stoll(s.session_id.substr(8)) + 1);
    sessions_[s.session_id] = std::move(s);
  } else if (t == "initial_state_fixed") {
    auto& s = session_locked(d.at("session_id").get<std::string>());
    s.assignments.push_back({d.at("initial_state_id").get<std::string>(), "", "", std::nullopt});
  } else if (t == "model_selected") {
    auto& s = session_locked(d.at("session_id").get<std::string>());
    if (s.assignments.empty() || !s.assignments.back().blinded_id.empty()) {
      throw Error(ErrorCode::kInternal, "model selected before its initial state was fixed");
    }
    std::uniform_int_distribution<std::size_t> pick(0, s.models.size() - 1);
    const auto& drawn = s.models[pick(s.rng)].blinded_id;
    if (drawn != d.at("blinded_id").get<std::string>()) {
      throw Error(ErrorCode::kInternal, "logged model selection disagrees with the session draw");
    }
    auto& a = s.assignments.back();
    a.blinded_id = drawn;
    a.rollout_id = d.at("rollout_id").get<std::string>();
    rollout_to_session_[a.rollout_id] = s.session_id;
    next_rollout_ = std::max<std::int64_t>(next_rollout_, std::stoll(a.rollout_id.substr(8)) + 1);
  } else if (t == "session_result") {
    const auto id = d.at("rollout_id").get<std::string>();
    auto& s = session_locked(rollout_to_session_.at(id));
    for (auto& a : s.assignments) {
      if (a.rollout_id == id) a.result = d.at("result").get<RolloutResult>();
    }
  } else if (t == "session_finalized") {
    auto& s = session_locked(d.at("session_id").get<std::string>());
    std::vector<analytics::ResultRow> rows;
    for (std::size_t i = 0; i < s.assignments.size(); ++i) {
      const auto& a = s.assignments[i];
      const auto it = std::find_if(s.models.begin(), s.models.end(), [&](const auto& m) { return m.blinded_id == a.blinded_id; });
      const auto& job = job_locked(it->identity);
      rows.push_back({job.display_name, a.initial_state_id + "#" + std::to_string(i + 1),
                      percent_milli(a.result->success ? 100.0 : 0.0), percent_milli(a.result->progress_score * 10.0),
                      job.job_id});
    }
    SessionOutcome out;
    for (const auto& m : s.models) out.revealed.push_back({m.blinded_id, job_locked(m.identity).display_name});
    if (!rows.empty()) out.ranking = analytics::ranklist(analytics::ResultsTable(std::move(rows)));
    s.outcome = std::move(out);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown scheduler event '" + t + "'");
  }
}

void Scheduler::register_robot(const std::string& robot_id, Archetype archetype) {
  std::lock_guard lock(mu_);
  auto it = robots_.find(robot_id);
  if (it != robots_.end()) {
    if (it->second != archetype) throw Error(ErrorCode::kConflict, "robot '" + robot_id + "' already registered");
    return;
  }
  emit_locked("robot_registered", {{"robot_id", robot_id}, {"archetype", to_string(archetype)}});
}

JobStatus Scheduler::submit_job(const std::string& owner_hash, const JobSubmission& submission) {
  std::lock_guard lock(mu_);
  if (owner_hash.empty()) throw Error(ErrorCode::kUnauthorized, "missing user key");
  if (submission.task_set.empty()) throw Error(ErrorCode::kInvalidArgument, "task set is empty");
  if (submission.display_name.empty()) throw Error(ErrorCode::kInvalidArgument, "display name is empty");
  std::set<std::string> seen;
  for (const auto& t : submission.task_set) {
    task_locked(t);
    if (!seen.insert(t).second) throw Error(ErrorCode::kInvalidArgument, "task '" + t + "' listed twice");
  }
  const std::string id = "job-" + std::to_string(next_job_);
  emit_locked("job_submitted", {{"job_id", id},
                                {"owner", owner_hash},
                                {"display_name", submission.display_name},
                                {"task_set", submission.task_set}});
  return status_locked(jobs_.at(id), Viewer::owner(owner_hash));
}

JobStatus Scheduler::poll_job(const std::string& job_id, const Viewer& viewer) const {
  std::lock_guard lock(mu_);
  const auto& job = job_locked(job_id);
  if (!viewer.tester && viewer.owner_hash != job.owner_hash) {
    throw Error(ErrorCode::kForbidden, "job '" + job_id + "' belongs to another key");
  }
  return status_locked(job, viewer);
}

std::vector<JobStatus> Scheduler::list_jobs(const Viewer& viewer) const {
  std::lock_guard lock(mu_);
  std::vector<const JobRecord*> mine;
  for (const auto& [id, job] : jobs_) {
    if (viewer.tester || viewer.owner_hash == job.owner_hash) mine.push_back(&job);
  }
  std::sort(mine.begin(), mine.end(), [](const auto* a, const auto* b) { return a->number < b->number; });
  std::vector<JobStatus> out;
  for (const auto* job : mine) out.push_back(status_locked(*job, viewer));
  return out;
}

JobStatus Scheduler::approve_job(const std::string& job_id, const std::string& robot_id) {
  std::lock_guard lock(mu_);
  auto& job = job_locked(job_id);
  auto robot = robots_.find(robot_id);
  if (robot == robots_.end()) throw Error(ErrorCode::kNotFound, "unknown robot '" + robot_id + "'");
  if (job.approved) {
    if (job.robot_id == robot_id) return status_locked(job, Viewer::tester_role());
    throw Error(ErrorCode::kConflict, "job '" + job_id + "' is already queued on " + *job.robot_id);
  }
  if (terminal(job.status)) throw Error(ErrorCode::kConflict, "job '" + job_id + "' is " + std::string(to_string(job.status)));
  for (const auto& t : job.task_set) {
    const auto& a = task_locked(t).archetypes;
    if (std::find(a.begin(), a.end(), robot->second) == a.end()) {
      throw Error(ErrorCode::kInvalidArgument, "task '" + t + "' does not run on a " + std::string(to_string(robot->second)));
    }
  }
  emit_locked("job_approved", {{"job_id", job_id}, {"robot_id", robot_id}});
  return status_locked(job, Viewer::tester_role());
}

std::optional<std::string> Scheduler::next_job(const std::string& robot_id) const {
  std::lock_guard lock(mu_);
  const auto q = robot_queue_locked(robot_id);
  if (q.empty()) return std::nullopt;
  return q.front()->job_id;
}

JobStatus Scheduler::notify_upcoming(const std::string& job_id) {
  std::lock_guard lock(mu_);
  auto& job = job_locked(job_id);
  if (job.status == JobState::kNotified) return status_locked(job, Viewer::tester_role());
  if (!job.approved || job.status != JobState::kQueued) {
    throw Error(ErrorCode::kConflict, "job '" + job_id + "' is not waiting in a robot queue");
  }
  const auto q = robot_queue_locked(*job.robot_id);
  if (q.front() != &job) throw Error(ErrorCode::kConflict, "job '" + job_id + "' is not next on " + *job.robot_id);
  emit_locked("job_notified", {{"job_id", job_id}});
  return status_locked(job, Viewer::tester_role());
}

JobStatus Scheduler::start_job(const std::string& job_id) {
  std::lock_guard lock(mu_);
  auto& job = job_locked(job_id);
  if (!job.approved || (job.status != JobState::kQueued && job.status != JobState::kNotified)) {
    throw Error(ErrorCode::kConflict, "job '" + job_id + "' cannot start from " + std::string(to_string(job.status)));
  }
  const auto q = robot_queue_locked(*job.robot_id);
  if (q.front() != &job || q.front()->status == JobState::kRunning) {
    throw Error(ErrorCode::kConflict, "job '" + job_id + "' is not next on " + *job.robot_id);
  }
  emit_locked("job_started", {{"job_id", job_id}});
  return status_locked(job, Viewer::tester_role());
}

JobStatus Scheduler::revoke_job(const std::string& job_id) {
  std::lock_guard lock(mu_);
  auto& job = job_locked(job_id);
  if (job.status == JobState::kRevoked) return status_locked(job, Viewer::tester_role());
  if (terminal(job.status)) throw Error(ErrorCode::kConflict, "job '" + job_id + "' already completed");
  emit_locked("job_revoked", {{"job_id", job_id}});
  return status_locked(job, Viewer::tester_role());
}

RolloutTicket Scheduler::start_rollout(const std::string& job_id) {
  std::lock_guard lock(mu_);
  auto& job = job_locked(job_id);
  if (job.status != JobState::kRunning) {
    throw Error(ErrorCode::kConflict, "job '" + job_id + "' is " + std::string(to_string(job.status)));
  }
  if (job.active_rollout) throw Error(ErrorCode::kConflict, "rollout " + *job.active_rollout + " is still open");
  const auto task = current_task_locked(job);
  const std::string id = "rollout-" + std::to_string(next_rollout_);
  emit_locked("rollout_started", {{"job_id", job_id}, {"rollout_id", id}});
  int index = 0;
  for (const auto& p : job.progress) {
    if (p.task_id == *task) index = p.completed + 1;
  }
  return {id, job_id, *task, *job.robot_id, index};
}

JobStatus Scheduler::end_rollout(const std::string& rollout_id, const RolloutResult& result) {
  std::lock_guard lock(mu_);
  auto it = rollout_to_job_.find(rollout_id);
  if (it == rollout_to_job_.end()) throw Error(ErrorCode::kConflict, "rollout '" + rollout_id + "' is not open");
  auto& job = job_locked(it->second);
  emit_locked("rollout_ended", {{"rollout_id", rollout_id}, {"result", result}});
  return status_locked(job, Viewer::tester_role());
}

std::vector<std::string> Scheduler::handle_maintenance(const std::string& robot_id, const std::string& reason) {
  std::lock_guard lock(mu_);
  std::vector<std::string> affected;
  for (const auto& [id, job] : jobs_) {
    if (job.robot_id == robot_id && job.status == JobState::kRunning) affected.push_back(id);
  }
  emit_locked("robot_fault", {{"robot_id", robot_id}, {"reason", reason}});
  return affected;
}

std::vector<std::string> Scheduler::resume_robot(const std::string& robot_id) {
  std::lock_guard lock(mu_);
  std::vector<std::string> affected;
  for (const auto& [id, job] : jobs_) {
    if (job.robot_id == robot_id && job.status == JobState::kPausedMaintenance) affected.push_back(id);
  }
  emit_locked("robot_resumed", {{"robot_id", robot_id}});
  return affected;
}

std::map<std::string, std::vector<RolloutResult>> Scheduler::job_results(const std::string& job_id) const {
  std::lock_guard lock(mu_);
  return job_locked(job_id).results;
}

JobRecord Scheduler::job_record(const std::string& job_id) const {
  std::lock_guard lock(mu_);
  return job_locked(job_id);
}

std::string Scheduler::create_session(const std::string& task_id, const std::string& robot_id,
                                      const std::vector<std::string>& job_ids, std::uint64_t seed) {
  std::lock_guard lock(mu_);
  if (!config_.enable_comparative) {
    throw Error(ErrorCode::kForbidden, "comparative protocol is disabled on this deployment");
  }
  task_locked(task_id);
  if (!robots_.count(robot_id)) throw Error(ErrorCode::kNotFound, "unknown robot '" + robot_id + "'");
  if (job_ids.size() < 2) throw Error(ErrorCode::kInvalidArgument, "a comparative session needs at least two models");
  std::set<std::string> seen;
  Json models = Json::array();
  for (const auto& id : job_ids) {
    const auto& job = job_locked(id);
    if (!seen.insert(id).second) throw Error(ErrorCode::kInvalidArgument, "job '" + id + "' listed twice");
    if (terminal(job.status)) throw Error(ErrorCode::kConflict, "job '" + id + "' is no longer active");
    if (std::find(job.task_set.begin(), job.task_set.end(), task_id) == job.task_set.end()) {
      throw Error(ErrorCode::kInvalidArgument, "job '" + id + "' was not submitted for " + task_id);
    }
    if (job.blinded_id) throw Error(ErrorCode::kConflict, "job '" + id + "' already belongs to a session");
    models.push_back({{"blinded_id", random_token("m-")}, {"job_id", id}});
  }
  const std::string sid = "session-" + std::to_string(next_session_);
  emit_locked("session_created",
              {{"session_id", sid}, {"task_id", task_id}, {"robot_id", robot_id}, {"seed", seed}, {"models", models}});
  return sid;
}

Assignment Scheduler::comparative_assign(const std::string& session_id, const std::string& initial_state_id) {
  std::lock_guard lock(mu_);
  auto& s = session_locked(session_id);
  if (s.outcome) throw Error(ErrorCode::kConflict, "session '" + session_id + "' is finalized");
  if (initial_state_id.empty()) throw Error(ErrorCode::kInvalidArgument, "initial state id is empty");
  emit_locked("initial_state_fixed", {{"session_id", session_id}, {"initial_state_id", initial_state_id}});
  // Draw on a copy so the event carries the outcome apply() will reproduce.
  auto rng = s.rng;
  std::uniform_int_distribution<std::size_t> pick(0, s.models.size() - 1);
  const auto blinded = s.models[pick(rng)].blinded_id;
  const std::string rid = "rollout-" + std::to_string(next_rollout_);
  emit_locked("model_selected", {{"session_id", session_id}, {"blinded_id", blinded}, {"rollout_id", rid}});
  return s.assignments.back();
}

void Scheduler::record_session_result(const std::string& rollout_id, const RolloutResult& result) {
  std::lock_guard lock(mu_);
  auto it = rollout_to_session_.find(rollout_id);
  if (it == rollout_to_session_.end()) throw Error(ErrorCode::kNotFound, "no comparative rollout '" + rollout_id + "'");
  const auto& s = session_locked(it->second);
  if (s.outcome) throw Error(ErrorCode::kConflict, "session is finalized");
  for (const auto& a : s.assignments) {
    if (a.rollout_id == rollout_id && a.result) throw Error(ErrorCode::kConflict, "rollout already graded");
  }
  emit_locked("session_result", {{"rollout_id", rollout_id}, {"result", result}});
}

SessionOutcome Scheduler::comparative_finalize(const std::string& session_id) {
  std::lock_guard lock(mu_);
  auto& s = session_locked(session_id);
  if (s.outcome) return *s.outcome;
  for (const auto& a : s.assignments) {
    if (!a.result) throw Error(ErrorCode::kConflict, "rollout " + a.rollout_id + " is not graded yet");
  }
  emit_locked("session_finalized", {{"session_id", session_id}});
  return *s.outcome;
}

Json Scheduler::session_view(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  const auto& s = session_locked(session_id);
  Json models = Json::array();
  for (const auto& m : s.models) {
    Json entry{{"blinded_id", m.blinded_id}};
    if (s.outcome) entry["display_name"] = job_locked(m.identity).display_name;
    models.push_back(entry);
  }
  Json assignments = Json::array();
  for (const auto& a : s.assignments) {
    Json entry{{"initial_state_id", a.initial_state_id}, {"blinded_id", a.blinded_id}, {"rollout_id", a.rollout_id}};
    entry["result"] = a.result ? Json(*a.result) : Json(nullptr);
    assignments.push_back(entry);
  }
  Json view{{"session_id", s.session_id},
            {"task_id", s.task_id},
            {"robot_id", s.robot_id},
            {"finalized", s.outcome.has_value()},
            {"models", models},
            {"assignments", assignments}};
  if (s.outcome) {
    Json ranking = Json::array();
    for (const auto& r : s.outcome->ranking) {
      ranking.push_back({{"rank", r.rank},
                         {"display_name", r.display_name},
                         {"sr", r.sr.rounded(1)},
                         {"score", r.score.rounded(1)},
                         {"tied", r.tied}});
    }
    view["ranking"] = ranking;
  }
  return view;
}

std::optional<std::string> Scheduler::session_of_rollout(const std::string& rollout_id) const {
  std::lock_guard lock(mu_);
  auto it = rollout_to_session_.find(rollout_id);
  if (it == rollout_to_session_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> Scheduler::blinded_id_of_rollout(const std::string& rollout_id) const {
  std::lock_guard lock(mu_);
  auto it = rollout_to_session_.find(rollout_id);
  if (it == rollout_to_session_.end()) return std::nullopt;
  for (const auto& a : session_locked(it->second).assignments) {
    if (a.rollout_id == rollout_id) return a.blinded_id;
  }
  return std::nullopt;
}

std::vector<SchedEvent> Scheduler::events() const {
  std::lock_guard lock(mu_);
  return log_;
}

void Scheduler::on_event(std::function<void(const SchedEvent&)> sink) {
  std::lock_guard lock(mu_);
  sinks_.push_back(std::move(sink));
}

std::unique_ptr<Scheduler> Scheduler::replay(std::vector<TaskEntry> tasks, SchedulerConfig config,
                                             const std::vector<SchedEvent>& log) {
  auto s = std::make_unique<Scheduler>(std::move(tasks), std::move(config));
  std::lock_guard lock(s->mu_);
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (log[i].seq != static_cast<std::int64_t>(i) + 1) {
      throw Error(ErrorCode::kInvalidArgument, "scheduler log has a gap at entry " + std::to_string(i + 1));
    }
    s->apply_locked(log[i]);
    s->log_.push_back(log[i]);
  }
  return s;
}

Json Scheduler::state_dump() const {
  std::lock_guard lock(mu_);
  Json jobs = Json::array();
  for (const auto& [id, job] : jobs_) {
    Json results = Json::object();
    for (const auto& [task, rs] : job.results) results[task] = rs;
    jobs.push_back({{"job_id", id},
                    {"owner", job.owner_hash},
                    {"display_name", job.display_name},
                    {"status", to_string(job.status)},
                    {"setting", to_string(job.setting)},
                    {"approved", job.approved},
                    {"robot_id", job.robot_id ? Json(*job.robot_id) : Json(nullptr)},
                    {"queue_pos", job.queue_pos},
                    {"progress", job.progress},
                    {"results", results},
                    {"active_rollout", job.active_rollout ? Json(*job.active_rollout) : Json(nullptr)},
                    {"discarded", job.discarded},
                    {"blinded_id", job.blinded_id ? Json(*job.blinded_id) : Json(nullptr)}});
  }
  Json sessions = Json::array();
  for (const auto& [id, s] : sessions_) {
    Json assignments = Json::array();
    for (const auto& a : s.assignments) {
      assignments.push_back({{"initial_state_id", a.initial_state_id},
                             {"blinded_id", a.blinded_id},
                             {"rollout_id", a.rollout_id},
                             {"result", a.result ? Json(*a.result) : Json(nullptr)}});
    }
    sessions.push_back({{"session_id", id}, {"assignments", assignments}, {"finalized", s.outcome.has_value()}});
  }
  return {{"jobs", jobs}, {"sessions", sessions}};
}

}  // namespace tb::sched
