#include "tablebench/server/platform.hpp"

#include <algorithm>
#include <random>

#include "tablebench/protocol/json.hpp"
#include "tablebench/sim/detect.hpp"
#include "tablebench/sim/kinematics.hpp"

namespace tb::server {
namespace {

using Clock = std::chrono::steady_clock;

Json rubric_json(const grading::TaskRubric& rubric) {
  Json stages = Json::array();
  for (const auto& s : rubric.stages()) {
    stages.push_back({{"name", s.name}, {"points", s.points()}, {"critical", s.critical}});
  }
  return stages;
}

Json task_view(const sim::TaskDescriptor& t) {
  Json archetypes = Json::array();
  for (auto a : t.archetypes) archetypes.push_back(to_string(a));
  return {{"task_id", t.task_id},
          {"prompt", t.prompt},
          {"archetypes", archetypes},
          {"time_budget_s", t.time_budget_s},
          {"auto_graded", sim::has_detectors(t.task_id)},
          {"stages", rubric_json(t.rubric)}};
}

std::string_view kind_name(RolloutEntry::Kind k) {
  switch (k) {
    case RolloutEntry::Kind::kBenchmark: return "benchmark";
    case RolloutEntry::Kind::kComparative: return "comparative";
    case RolloutEntry::Kind::kSandbox: return "sandbox";
  }
  return "benchmark";
}

Json rational_json(const analytics::Rational& r, int decimals) {
  return {{"display", r.rounded(decimals)}, {"value", r.to_double()}};
}

analytics::Metric metric_of(const std::string& name) {
  const auto m = analytics::parse_metric(name);
  if (!m) throw Error(ErrorCode::kInvalidArgument, "metric must be 'sr' or 'score', got '" + name + "'");
  return *m;
}

}  // namespace

Platform::Platform(PlatformConfig config)
    : config_(std::move(config)), catalog_(sim::TaskCatalog::load_dir(config_.tasks_dir)), store_(config_.store_dir) {
  std::vector<sched::TaskEntry> tasks;
  for (const auto& id : catalog_.ids()) {
    const auto& t = catalog_.get(id);
    tasks.push_back({t.task_id, t.prompt, t.archetypes});
  }
  auto sc = config_.scheduler;
  sc.enable_comparative = config_.enable_comparative;
  scheduler_ = std::make_unique<sched::Scheduler>(std::move(tasks), std::move(sc));
  const auto stamp = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
  sched_log_ = store_.log("scheduler-" + std::to_string(stamp));
  grade_log_ = store_.log("grades");
  scheduler_->on_event([log = sched_log_](const sched::SchedEvent& e) { log->append(Json(e)); });

  for (const auto& setup : config_.robots) {
    if (robots_.count(setup.robot_id)) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate robot id '" + setup.robot_id + "'");
    }
    gateway::GatewayConfig gc;
    gc.home_duration_ms = config_.home_duration_ms;
    gc.require_binding = !config_.sandbox;
    auto& slot = robots_[setup.robot_id];
    slot.setup = setup;
    slot.setup.sim = sim::resolve_config(setup.archetype, setup.sim);
    slot.gw = std::make_unique<gateway::RobotGateway>(sim::default_robot_spec(setup.archetype, setup.robot_id),
                                                      sim::SimRobot(setup.archetype, slot.setup.sim), gc);
    if (setup.idle_task) slot.gw->reset_robot(sim::randomized_scene(catalog_.get(*setup.idle_task), setup.idle_seed));
    scheduler_->register_robot(setup.robot_id, setup.archetype);
    const auto id = setup.robot_id;
    slot.gw->on_tick([this, id](const gateway::TickInfo& info) { on_tick(id, info); });
    slot.gw->on_enqueue([this, id](const gateway::EnqueueRecord& r) {
      std::shared_ptr<RolloutEntry> active;
      {
        std::lock_guard lock(mu_);
        active = robots_.at(id).active;
      }
      if (active && active->recorder) active->recorder->on_enqueue(r);
    });
    slot.gw->on_fault([this](const std::string& robot, const std::string& reason) { on_fault(robot, reason); });
  }

  if (config_.results_csv) fixture_ = analytics::read_results_csv_file(config_.results_csv->string());
  if (config_.tags_csv) tags_ = analytics::read_tags_csv_file(config_.tags_csv->string());
}

Platform::~Platform() { stop(); }

void Platform::start() {
  for (auto& [id, s] : robots_) s.gw->start(config_.acceleration);
  std::lock_guard lock(runner_mu_);
  if (runner_.joinable()) return;
  stopping_ = false;
  runner_ = std::thread([this] {
    std::unique_lock lock(runner_mu_);
    while (!stopping_) {
      lock.unlock();
      step();
      lock.lock();
      runner_cv_.wait_for(lock, std::chrono::milliseconds(2), [this] { return stopping_; });
    }
  });
}

void Platform::stop() {
  {
    std::lock_guard lock(runner_mu_);
    stopping_ = true;
  }
  runner_cv_.notify_all();
  if (runner_.joinable()) runner_.join();
  for (auto& [id, s] : robots_) s.gw->stop();
}

void Platform::step() {
  if (!config_.scheduler_enabled) return;
  for (auto& [id, s] : robots_) step_robot(s);
}

void Platform::step_robot(RobotSlot& s) {
  std::lock_guard lock(mu_);
  if (s.active) return;
  if (s.gw->mode() == gateway::RobotMode::kMaintenance) return;
  const auto head = scheduler_->next_job(s.setup.robot_id);
  if (!head) return;
  const auto job = scheduler_->job_record(*head);
  const auto now = Clock::now();
  switch (job.status) {
    case JobState::kQueued:
      scheduler_->notify_upcoming(job.job_id);
      notified_at_[job.job_id] = now;
      break;
    case JobState::kNotified: {
      auto [it, inserted] = notified_at_.emplace(job.job_id, now);
      if (now - it->second >= config_.warm_up) {
        scheduler_->start_job(job.job_id);
        notified_at_.erase(job.job_id);
      }
      break;
    }
    case JobState::kRunning:
      if (!job.active_rollout) begin_rollout(s, job.job_id);
      break;
    default:
      break;
  }
}

void Platform::begin_rollout(RobotSlot& s, const std::string& job_id) {
  const auto ticket = scheduler_->start_rollout(job_id);
  const auto& task = catalog_.get(ticket.task_id);
  const auto seed = static_cast<std::uint64_t>(ticket.index);
  auto scene = sim::randomized_scene(task, seed);
  const Json scene_json = scene;

  auto entry = std::make_shared<RolloutEntry>(task.rubric);
  entry->kind = RolloutEntry::Kind::kBenchmark;
  entry->rollout_id = ticket.rollout_id;
  entry->task_id = ticket.task_id;
  entry->robot_id = s.setup.robot_id;
  entry->job_id = ticket.job_id;
  entry->owner_hash = scheduler_->job_record(job_id).owner_hash;
  entry->index = ticket.index;
  entry->seed = seed;
  entry->auto_grade = sim::has_detectors(task.task_id);
  const double budget_s = config_.rollout_budget_s > 0 ? config_.rollout_budget_s : task.time_budget_s;
  entry->budget_ns = static_cast<Nanos>(budget_s * 1e9);

  store::EpisodeMeta meta;
  meta.episode_id = store_.next_episode_id("eval-");
  meta.task_id = task.task_id;
  meta.robot_id = s.setup.robot_id;
  meta.kind = store::EpisodeKind::kEvaluation;
  entry->sim_start = s.gw->begin_rollout(ticket.rollout_id, std::move(scene), seed);
  meta.extra = {{"rollout_id", ticket.rollout_id},
                {"job_id", ticket.job_id},
                {"index", ticket.index},
                {"seed", seed},
                {"archetype", to_string(s.setup.archetype)},
                {"sim",
                 {{"control_rate_hz", s.setup.sim.control_rate_hz},
                  {"noise_sigma_m", s.setup.sim.noise_sigma_m},
                  {"attach_distance_m", s.setup.sim.attach_distance_m}}},
                {"home_duration_ms", config_.home_duration_ms},
                {"sim_start_ns", entry->sim_start},
                {"tick_period_ns", s.gw->tick_period_ns()},
                {"scene", scene_json}};
  entry->recorder = std::make_shared<EpisodeRecorder>(store_.create_episode(meta), ticket.rollout_id,
                                                      config_.record_frames);
  entry->live = true;
  rollouts_[entry->rollout_id] = entry;
  s.active = entry;
}

void Platform::on_tick(const std::string& robot_id, const gateway::TickInfo& info) {
  std::shared_ptr<RolloutEntry> e;
  {
    std::lock_guard lock(mu_);
    e = robots_.at(robot_id).active;
  }
  if (!e) return;
  if (e->recorder) e->recorder->on_tick(info);
  if (info.binding != e->rollout_id || !info.snapshot) return;
  std::lock_guard lock(e->mu);
  if (!e->live) return;
  auto& g = e->grade;
  const auto duration_ms = (info.now - e->sim_start) / 1'000'000;
  if (e->auto_grade && !g.terminated()) {
    const int cur = g.current_stage();
    const auto& stages = g.rubric().stages();
    if (cur < g.rubric().stage_count()) {
      if (sim::detect_stage(e->task_id, cur, *info.snapshot)) {
        g.mark_stage_complete(cur);
      } else if (!stages[cur].critical && cur + 1 < g.rubric().stage_count() &&
                 sim::detect_stage(e->task_id, cur + 1, *info.snapshot)) {
        g.mark_stage_complete(cur + 1);
      }
    }
  }
  if (g.terminated() || g.current_stage() >= g.rubric().stage_count()) {
    finish_locked(*e, g.finalize(TerminationReason::kCompleted, duration_ms));
  } else if (info.now - e->sim_start >= e->budget_ns) {
    finish_locked(*e, g.finalize(TerminationReason::kManual, duration_ms));
  }
}

void Platform::finish_locked(RolloutEntry& e, const RolloutResult& result) {
  e.live = false;
  switch (e.kind) {
    case RolloutEntry::Kind::kBenchmark:
      slot(*e.robot_id).gw->bind(std::nullopt);
      try {
        scheduler_->end_rollout(e.rollout_id, result);
      } catch (const Error&) {
        // The job was revoked while the rollout ran; the grade is kept in the log only.
        e.discarded = true;
      }
      break;
    case RolloutEntry::Kind::kComparative:
      scheduler_->record_session_result(e.rollout_id, result);
      break;
    case RolloutEntry::Kind::kSandbox:
      break;
  }
  if (e.recorder) {
    const Nanos now = e.robot_id ? slot(*e.robot_id).gw->now() : 0;
    e.recorder->note(now, "graded", {{"result", result}});
    e.recorder->close();
  }
  log_grade_locked(e);
  if (e.robot_id) {
    std::lock_guard lock(mu_);
    auto& s = robots_.at(*e.robot_id);
    if (s.active && s.active->rollout_id == e.rollout_id) s.active.reset();
  }
}

void Platform::log_grade_locked(const RolloutEntry& e) {
  Json events = Json::array();
  for (const auto& le : e.grade.events()) events.push_back({{"event", le.event}, {"duration_ms", le.duration_ms}});
  Json line{{"rollout_id", e.rollout_id},
            {"kind", kind_name(e.kind)},
            {"task_id", e.task_id},
            {"discarded", e.discarded},
            {"events", events}};
  if (e.job_id) line["job_id"] = *e.job_id;
  if (e.session_id) line["session_id"] = *e.session_id;
  if (e.grade.result()) line["result"] = *e.grade.result();
  grade_log_->append(line);
}

void Platform::on_fault(const std::string& robot_id, const std::string& reason) {
  if (config_.scheduler_enabled) scheduler_->handle_maintenance(robot_id, reason);
  std::shared_ptr<RolloutEntry> e;
  {
    std::lock_guard lock(mu_);
    e = robots_.at(robot_id).active;
  }
  if (!e) return;
  std::lock_guard lock(e->mu);
  if (!e->live) return;
  e->live = false;
  e->discarded = true;
  auto& gw = *slot(robot_id).gw;
  gw.bind(std::nullopt);
  if (e->recorder) {
    e->recorder->note(gw.now(), "discarded", {{"reason", reason}});
    e->recorder->close();
  }
  log_grade_locked(*e);
  std::lock_guard plock(mu_);
  auto& s = robots_.at(robot_id);
  if (s.active == e) s.active.reset();
}

Platform::RobotSlot& Platform::slot(const std::string& robot_id) {
  auto it = robots_.find(robot_id);
  if (it == robots_.end()) throw Error(ErrorCode::kNotFound, "unknown robot '" + robot_id + "'");
  return it->second;
}

const Platform::RobotSlot& Platform::slot(const std::string& robot_id) const {
  auto it = robots_.find(robot_id);
  if (it == robots_.end()) throw Error(ErrorCode::kNotFound, "unknown robot '" + robot_id + "'");
  return it->second;
}

gateway::RobotGateway& Platform::robot_gateway(const std::string& robot_id) { return *slot(robot_id).gw; }

std::vector<std::string> Platform::robot_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, s] : robots_) ids.push_back(id);
  return ids;
}

void Platform::require_tester(const Principal& who) const {
  if (!who.tester()) throw Error(ErrorCode::kForbidden, "tester role required");
}

void Platform::require_scheduler() const {
  if (!config_.scheduler_enabled) throw Error(ErrorCode::kUnavailable, "scheduler is not running");
}

void Platform::require_robot_access(const Principal& who, const std::string& robot_id) const {
  slot(robot_id);
  if (who.tester() || config_.sandbox) return;
  if (config_.scheduler_enabled) {
    if (const auto head = scheduler_->next_job(robot_id)) {
      const auto job = scheduler_->job_record(*head);
      const bool on_robot = job.status == JobState::kRunning || job.status == JobState::kPausedMaintenance;
      if (on_robot && job.owner_hash == who.key_hash) return;
    }
  }
  throw Error(ErrorCode::kForbidden, "robot '" + robot_id + "' is not running a job of this key");
}

Json Platform::robots_json() const {
  Json out = Json::array();
  for (const auto& [id, s] : robots_) out.push_back(robot_json(id));
  return out;
}

Json Platform::robot_json(const std::string& robot_id) const {
  const auto& s = slot(robot_id);
  const auto fault = s.gw->fault_reason();
  const auto binding = s.gw->binding();
  return {{"spec", s.gw->spec()},
          {"mode", to_string(s.gw->mode())},
          {"fault_reason", fault ? Json(*fault) : Json(nullptr)},
          {"rollout_id", binding ? Json(*binding) : Json(nullptr)},
          {"sim_ns", s.gw->now()},
          {"queue", s.gw->queue_status()}};
}

ObservationBundle Platform::capture(const Principal& who, const std::string& robot_id, const CaptureRequest& request) {
  require_robot_access(who, robot_id);
  auto& s = slot(robot_id);
  auto bundle = s.gw->capture(request);
  std::shared_ptr<RolloutEntry> active;
  {
    std::lock_guard lock(mu_);
    active = s.active;
  }
  if (active && active->recorder) active->recorder->on_capture(bundle, s.gw->now());
  return bundle;
}

EnqueueAck Platform::enqueue(const Principal& who, const std::string& robot_id, const ActionChunk& chunk,
                             const std::optional<std::string>& rollout_id) {
  require_robot_access(who, robot_id);
  return slot(robot_id).gw->enqueue(chunk, rollout_id);
}

QueueState Platform::queue(const Principal& who, const std::string& robot_id) {
  require_robot_access(who, robot_id);
  return slot(robot_id).gw->queue_status();
}

Json Platform::sim_state(const Principal& who, const std::string& robot_id) {
  require_robot_access(who, robot_id);
  const auto& s = slot(robot_id);
  const auto binding = s.gw->binding();
  return {{"robot_id", robot_id},
          {"sim_ns", s.gw->now()},
          {"rollout_id", binding ? Json(*binding) : Json(nullptr)},
          {"snapshot", s.gw->sim_snapshot()}};
}

Json Platform::reset_robot(const Principal& who, const std::string& robot_id, const Json& body) {
  require_tester(who);
  auto& s = slot(robot_id);
  {
    std::lock_guard lock(mu_);
    if (s.active) throw Error(ErrorCode::kConflict, "rollout " + s.active->rollout_id + " is running on " + robot_id);
  }
  std::optional<sim::SceneState> scene;
  if (body.contains("episode_id")) {
    const auto episode = body.at("episode_id").get<std::string>();
    const auto meta = store_.meta(episode);
    if (!meta.extra.contains("scene")) throw Error(ErrorCode::kNotFound, "episode " + episode + " has no recorded scene");
    scene = sim::restored_scene(catalog_.get(meta.task_id), meta.extra.at("scene").get<sim::SceneState>());
  } else if (body.contains("task_id")) {
    scene = sim::randomized_scene(catalog_.get(body.at("task_id").get<std::string>()),
                                  body.value("seed", std::uint64_t{0}));
  }
  s.gw->reset_robot(std::move(scene));
  return {{"robot_id", robot_id}, {"mode", to_string(s.gw->mode())}, {"scene", s.gw->sim_snapshot().scene}};
}

Json Platform::overlay(const Principal& who, const std::string& robot_id, const std::string& episode_id,
                       double alpha) {
  require_tester(who);
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "alpha must lie in [0, 1]");
  auto& s = slot(robot_id);
  if (store_.effective_kind(episode_id) != store::EpisodeKind::kReference) {
    throw Error(ErrorCode::kConflict, "episode " + episode_id + " is not a reference episode");
  }
  const auto reference = store_.initial_frame(episode_id, "main");
  const auto result = s.gw->overlay_preview(reference, alpha);
  return {{"robot_id", robot_id},
          {"episode_id", episode_id},
          {"alpha", alpha},
          {"match_score", result.match_score},
          {"threshold", gateway::kDefaultMatchThreshold},
          {"aligned", result.match_score <= gateway::kDefaultMatchThreshold},
          {"blended", result.blended}};
}

Json Platform::fault(const Principal& who, const std::string& robot_id, const std::string& reason) {
  require_tester(who);
  slot(robot_id).gw->signal_fault(reason.empty() ? "tester reported a fault" : reason);
  return robot_json(robot_id);
}

Json Platform::resume(const Principal& who, const std::string& robot_id) {
  require_tester(who);
  auto& s = slot(robot_id);
  if (s.gw->mode() != gateway::RobotMode::kMaintenance) {
    throw Error(ErrorCode::kConflict, "robot '" + robot_id + "' is not under maintenance");
  }
  s.gw->reset_robot();
  if (config_.scheduler_enabled) scheduler_->resume_robot(robot_id);
  return robot_json(robot_id);
}

Json Platform::tasks_json() const {
  Json out = Json::array();
  for (const auto& id : catalog_.ids()) out.push_back(task_view(catalog_.get(id)));
  return out;
}

Json Platform::task_json(const std::string& task_id) const { return task_view(catalog_.get(task_id)); }

Json Platform::references_json(const Principal& who, const std::string& task_id) const {
  require_tester(who);
  catalog_.get(task_id);
  const auto refs = store_.references(task_id);
  return {{"task_id", task_id}, {"episode_ids", Json(std::vector<std::string>(refs.begin(), refs.end()))}};
}

bool Platform::rollout_ready(const JobStatus& status) const {
  if (status.rollout.phase != RolloutPhase::kActive || !status.rollout.rollout_id) return true;
  std::lock_guard lock(mu_);
  auto it = rollouts_.find(*status.rollout.rollout_id);
  if (it == rollouts_.end() || !it->second->robot_id) return false;
  return slot(*it->second->robot_id).gw->mode() == gateway::RobotMode::kReady;
}

JobStatus Platform::submit_job(const Principal& who, const JobSubmission& submission) {
  require_scheduler();
  auto status = scheduler_->submit_job(who.key_hash, submission);
  if (config_.auto_approve) {
    for (const auto& [id, s] : robots_) {
      const bool fits = std::all_of(submission.task_set.begin(), submission.task_set.end(), [&](const auto& t) {
        return catalog_.get(t).supports(s.setup.archetype);
      });
      if (fits) {
        scheduler_->approve_job(status.job_id, id);
        break;
      }
    }
    status = scheduler_->poll_job(status.job_id, sched::Viewer::owner(who.key_hash));
  }
  return status;
}

JobStatus Platform::poll_job(const Principal& who, const std::string& job_id) const {
  require_scheduler();
  const auto viewer = who.tester() ? sched::Viewer::tester_role() : sched::Viewer::owner(who.key_hash);
  auto status = scheduler_->poll_job(job_id, viewer);
  if (!rollout_ready(status)) status.rollout.phase = RolloutPhase::kIdle;
  return status;
}

std::vector<JobStatus> Platform::list_jobs(const Principal& who) const {
  require_scheduler();
  const auto viewer = who.tester() ? sched::Viewer::tester_role() : sched::Viewer::owner(who.key_hash);
  auto jobs = scheduler_->list_jobs(viewer);
  for (auto& j : jobs) {
    if (!rollout_ready(j)) j.rollout.phase = RolloutPhase::kIdle;
  }
  return jobs;
}

JobStatus Platform::approve_job(const Principal& who, const std::string& job_id, std::optional<std::string> robot_id) {
  require_scheduler();
  require_tester(who);
  if (!robot_id) {
    const auto job = scheduler_->job_record(job_id);
    for (const auto& [id, s] : robots_) {
      const bool fits = std::all_of(job.task_set.begin(), job.task_set.end(),
                                    [&](const auto& t) { return catalog_.get(t).supports(s.setup.archetype); });
      if (fits) {
        robot_id = id;
        break;
      }
    }
    if (!robot_id) throw Error(ErrorCode::kConflict, "no robot supports every task of job '" + job_id + "'");
  }
  return scheduler_->approve_job(job_id, *robot_id);
}

JobStatus Platform::revoke_job(const Principal& who, const std::string& job_id) {
  require_scheduler();
  const auto job = scheduler_->job_record(job_id);
  if (!who.tester() && job.owner_hash != who.key_hash) {
    throw Error(ErrorCode::kForbidden, "job '" + job_id + "' belongs to another key");
  }
  auto status = scheduler_->revoke_job(job_id);
  if (job.robot_id) {
    std::shared_ptr<RolloutEntry> e;
    {
      std::lock_guard lock(mu_);
      e = robots_.at(*job.robot_id).active;
    }
    if (e && e->job_id == job_id) {
      std::lock_guard lock(e->mu);
      if (e->live) {
        e->live = false;
        e->discarded = true;
        auto& gw = *slot(*job.robot_id).gw;
        gw.bind(std::nullopt);
        if (e->recorder) {
          e->recorder->note(gw.now(), "discarded", {{"reason", "job revoked"}});
          e->recorder->close();
        }
        log_grade_locked(*e);
        std::lock_guard plock(mu_);
        auto& s = robots_.at(*job.robot_id);
        if (s.active == e) s.active.reset();
      }
    }
  }
  return status;
}

Json Platform::job_results(const Principal& who, const std::string& job_id) const {
  const auto status = poll_job(who, job_id);
  Json tasks = Json::array();
  for (const auto& [task, results] : scheduler_->job_results(job_id)) {
    Json entry{{"task_id", task}, {"rollouts", results}};
    if (results.size() == static_cast<std::size_t>(grading::kRolloutsPerEval)) {
      const auto totals = grading::task_totals(results);
      entry["success_rate"] = totals.success_rate;
      entry["task_score"] = totals.task_score;
    } else {
      entry["success_rate"] = nullptr;
      entry["task_score"] = nullptr;
    }
    tasks.push_back(entry);
  }
  return {{"job_id", job_id}, {"status", to_string(status.status)}, {"tasks", tasks}};
}

Json Platform::create_session(const Principal& who, const Json& body) {
  require_scheduler();
  require_tester(who);
  const auto task_id = field<std::string>(body, "task_id");
  const auto robot_id = field<std::string>(body, "robot_id");
  const auto jobs = field<std::vector<std::string>>(body, "job_ids");
  std::uint64_t seed = 0;
  if (auto s = optional_field<std::uint64_t>(body, "seed")) {
    seed = *s;
  } else {
    seed = std::random_device{}();
  }
  slot(robot_id);
  const auto id = scheduler_->create_session(task_id, robot_id, jobs, seed);
  return scheduler_->session_view(id);
}

Json Platform::session_view(const Principal& who, const std::string& session_id) const {
  require_scheduler();
  require_tester(who);
  return scheduler_->session_view(session_id);
}

Json Platform::session_assign(const Principal& who, const std::string& session_id, const std::string& initial_state_id) {
  require_scheduler();
  require_tester(who);
  const auto view = scheduler_->session_view(session_id);
  const auto a = scheduler_->comparative_assign(session_id, initial_state_id);
  auto entry = std::make_shared<RolloutEntry>(catalog_.get(view.at("task_id").get<std::string>()).rubric);
  entry->kind = RolloutEntry::Kind::kComparative;
  entry->rollout_id = a.rollout_id;
  entry->task_id = view.at("task_id").get<std::string>();
  entry->session_id = session_id;
  entry->live = true;
  {
    std::lock_guard lock(mu_);
    rollouts_[a.rollout_id] = entry;
  }
  return {{"session_id", session_id},
          {"rollout_id", a.rollout_id},
          {"blinded_id", a.blinded_id},
          {"initial_state_id", a.initial_state_id}};
}

Json Platform::session_finalize(const Principal& who, const std::string& session_id) {
  require_scheduler();
  require_tester(who);
  scheduler_->comparative_finalize(session_id);
  return scheduler_->session_view(session_id);
}

std::shared_ptr<RolloutEntry> Platform::rollout(const std::string& rollout_id) const {
  std::lock_guard lock(mu_);
  auto it = rollouts_.find(rollout_id);
  if (it == rollouts_.end()) throw Error(ErrorCode::kNotFound, "unknown rollout '" + rollout_id + "'");
  return it->second;
}

Json Platform::grade_event(const Principal& who, const std::string& rollout_id, const GradeEvent& event,
                           std::optional<std::int64_t> duration_ms) {
  auto e = rollout(rollout_id);
  const bool sandbox_owner = e->kind == RolloutEntry::Kind::kSandbox && e->owner_hash == who.key_hash;
  if (!who.tester() && !sandbox_owner) throw Error(ErrorCode::kForbidden, "tester role required");
  std::lock_guard lock(e->mu);
  if (e->discarded) throw Error(ErrorCode::kConflict, "rollout " + rollout_id + " was discarded");
  if (!e->live) throw Error(ErrorCode::kConflict, "rollout " + rollout_id + " is already finalized");
  std::int64_t duration = duration_ms.value_or(0);
  if (!duration_ms && e->kind == RolloutEntry::Kind::kBenchmark) {
    duration = (slot(*e->robot_id).gw->now() - e->sim_start) / 1'000'000;
  }
  e->grade.apply(event, duration);
  if (e->grade.terminated() && !e->grade.finalized()) e->grade.finalize(TerminationReason::kManual, duration);
  if (e->grade.finalized()) finish_locked(*e, *e->grade.result());
  return rollout_view_locked(*e);
}

Json Platform::rollout_view(const Principal& who, const std::string& rollout_id) const {
  auto e = rollout(rollout_id);
  const bool owner = e->kind != RolloutEntry::Kind::kComparative && e->owner_hash == who.key_hash;
  if (!who.tester() && !owner) throw Error(ErrorCode::kForbidden, "rollout '" + rollout_id + "' is not visible to this key");
  std::lock_guard lock(e->mu);
  return rollout_view_locked(*e);
}

Json Platform::rollout_view_locked(const RolloutEntry& e) const {
  const auto& g = e.grade;
  Json stages = Json::array();
  for (int i = 0; i < g.rubric().stage_count(); ++i) {
    const auto& spec = g.rubric().stages()[i];
    const auto& p = g.stages()[i];
    stages.push_back({{"name", spec.name},
                      {"points", spec.points()},
                      {"critical", spec.critical},
                      {"completed", p.completed},
                      {"skipped", p.skipped},
                      {"retries", p.retries},
                      {"successive_failed_retries", p.successive_failed_retries}});
  }
  Json v{{"rollout_id", e.rollout_id},
         {"kind", kind_name(e.kind)},
         {"task_id", e.task_id},
         {"index", e.index},
         {"stages", stages},
         {"current_stage", g.current_stage()},
         {"terminated", g.terminated()},
         {"termination_reason", g.termination_reason() ? Json(to_string(*g.termination_reason())) : Json(nullptr)},
         {"finalized", g.finalized()},
         {"progress_score", g.progress_score()},
         {"success", g.success()},
         {"result", g.result() ? Json(*g.result()) : Json(nullptr)},
         {"live", e.live},
         {"discarded", e.discarded},
         {"auto_graded", e.auto_grade}};
  v["robot_id"] = e.robot_id ? Json(*e.robot_id) : Json(nullptr);
  if (e.kind == RolloutEntry::Kind::kComparative) {
    v["session_id"] = *e.session_id;
    const auto blinded = scheduler_->blinded_id_of_rollout(e.rollout_id);
    v["blinded_id"] = blinded ? Json(*blinded) : Json(nullptr);
  } else {
    v["job_id"] = e.job_id ? Json(*e.job_id) : Json(nullptr);
  }
  v["episode_id"] = e.recorder ? Json(e.recorder->episode_id()) : Json(nullptr);
  return v;
}

Json Platform::open_sandbox_rollout(const Principal& who, const std::string& robot_id, const std::string& task_id) {
  if (!config_.sandbox) throw Error(ErrorCode::kForbidden, "sandbox rollouts are disabled on this deployment");
  slot(robot_id);
  const auto& task = catalog_.get(task_id);
  auto entry = std::make_shared<RolloutEntry>(task.rubric);
  entry->kind = RolloutEntry::Kind::kSandbox;
  entry->task_id = task_id;
  entry->robot_id = robot_id;
  entry->owner_hash = who.key_hash;
  entry->live = true;
  std::lock_guard lock(mu_);
  entry->rollout_id = "sandbox-" + std::to_string(next_sandbox_++);
  rollouts_[entry->rollout_id] = entry;
  return rollout_view_locked(*entry);
}

analytics::ResultsTable Platform::results_table(const std::string& source) const {
  if (source != "fixture" && source != "platform" && source != "all") {
    throw Error(ErrorCode::kInvalidArgument, "source must be fixture, platform or all");
  }
  std::vector<analytics::ResultRow> rows;
  if (source != "platform") {
    if (!fixture_) throw Error(ErrorCode::kNotFound, "no results fixture is configured");
    rows = fixture_->rows();
  }
  if (source != "fixture" && config_.scheduler_enabled) {
    for (const auto& status : scheduler_->list_jobs(sched::Viewer::tester_role())) {
      if (status.status != JobState::kCompleted) continue;
      const auto job = scheduler_->job_record(status.job_id);
      for (const auto& [task, results] : job.results) {
        if (results.size() != static_cast<std::size_t>(grading::kRolloutsPerEval)) continue;
        const auto totals = grading::task_totals(results);
        rows.push_back({job.display_name, task, static_cast<analytics::Milli>(totals.success_rate) * 1000,
                        static_cast<analytics::Milli>(totals.task_score * 1000 + 0.5), job.owner_hash.substr(0, 12)});
      }
    }
  }
  return analytics::ResultsTable(std::move(rows));
}

Json Platform::analytics_averages(const std::string& source) const {
  Json out = Json::array();
  for (const auto& a : analytics::model_averages(results_table(source))) {
    out.push_back({{"model", a.model}, {"sr", rational_json(a.sr, 1)}, {"score", rational_json(a.score, 1)}});
  }
  return out;
}

Json Platform::analytics_cdf(const std::string& source, const std::string& model, const std::string& metric) const {
  const auto m = metric_of(metric);
  Json points = Json::array();
  for (const auto& p : analytics::cumulative_distribution(results_table(source), model, m)) {
    points.push_back({{"task", p.task}, {"value", analytics::format_milli(p.value)}});
  }
  return {{"model", model}, {"metric", to_string(m)}, {"points", points}};
}

Json Platform::analytics_tags(const std::string& source) const {
  if (!tags_) throw Error(ErrorCode::kNotFound, "no tag file is configured");
  const auto table = results_table(source);
  Json tags = Json::array();
  for (const auto& t : analytics::tag_aggregate(table, *tags_)) {
    tags.push_back({{"tag", t.tag}, {"task_count", t.task_count}, {"sr", rational_json(t.sr, 0)},
                    {"score", rational_json(t.score, 0)}});
  }
  const auto all = analytics::global_aggregate(table);
  return {{"tags", tags},
          {"all", {{"task_count", all.task_count}, {"sr", rational_json(all.sr, 0)}, {"score", rational_json(all.score, 0)}}}};
}

Json Platform::analytics_ranklist(const std::string& source) const {
  Json out = Json::array();
  for (const auto& r : analytics::ranklist(results_table(source))) {
    out.push_back({{"rank", r.rank},
                   {"display_name", r.display_name},
                   {"user", r.user},
                   {"sr", rational_json(r.sr, 1)},
                   {"score", rational_json(r.score, 1)},
                   {"tied", r.tied}});
  }
  return out;
}

Json Platform::analytics_dominance(const std::string& source, const std::string& a, const std::string& b,
                                   const std::string& metric) const {
  const auto m = metric_of(metric);
  return {{"a", a}, {"b", b}, {"metric", to_string(m)}, {"dominates", analytics::dominates(results_table(source), a, b, m)}};
}

}  // namespace tb::server
